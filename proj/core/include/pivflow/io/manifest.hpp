#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "pivflow/core/errors.hpp"
#include "pivflow/core/types.hpp"

namespace pivflow::io {

/// An image lacking its partner frame (or a flow file lacking images).
struct OrphanFile : Error {
    explicit OrphanFile(const std::string& msg) : Error(msg) {}
};

struct EmptyDataset : Error {
    explicit EmptyDataset(const std::string& msg) : Error(msg) {}
};

/// On-disk naming inside dataset roots varies by release, so the suffixes
/// are configurable rather than hard-coded.
struct ManifestPattern {
    std::string img1_suffix = "_img1";
    std::string img2_suffix = "_img2";
    std::string flow_suffix = "_flow";
};

struct ManifestEntry {
    std::string name; // `<name>` stem shared by the pair and its flow file
    std::filesystem::path img1; // relative to root
    std::filesystem::path img2;
    std::optional<std::filesystem::path> flow;
    CaseLabel case_label = CaseLabel::Other;
    Split split = Split::Train;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;

    std::vector<const ManifestEntry*> split_entries(Split s) const;
};

/// Scans `<root>/<case>/<name>{_img1,_img2}.<ext>` (+ optional
/// `<name>_flow.flo`), labels cases from directory names, and assigns the
/// deterministic 8:1:1 split: per case, entries are ordered by
/// fnv1a64("<name>:<seed>") and sliced at the 0.8/0.9 rank quantiles,
/// which keeps every case within +-1 entry of the exact ratio.
DatasetManifest build_manifest(const std::filesystem::path& root, std::uint64_t split_seed,
                               const ManifestPattern& pattern = {});

/// Line-oriented text index: img1 \t img2 \t flow-or-'-' \t case \t split.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Loads the sample behind a manifest entry (images + optional gt).
FlowSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry);

} // namespace pivflow::io
