#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pivflow/net/model.hpp"

namespace pivflow::train {

/// Named-array archive: model parameters plus (optionally) optimizer
/// moments and RNG state under reserved "__opt__"/"__rng__" prefixes.
struct Checkpoint {
    struct Entry {
        std::string name;
        std::vector<int> shape; // empty for blob entries
        std::vector<double> data;
        std::string blob; // non-empty only for serialized-state entries
    };

    std::vector<Entry> entries;
    std::string source_tag = "pivflow";
    int format_version = 1;

    const Entry* find(const std::string& name) const;
    Entry& upsert(const std::string& name);
};

/// Binary little-endian container; writes are atomic (temp + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of every model parameter (no optimizer state).
Checkpoint checkpoint_from_model(const net::DiffuserModel& model, const std::string& tag);

/// Two candidate entries share a shape and no name rule disambiguates.
struct DuplicateAmbiguousMatch : Error {
    explicit DuplicateAmbiguousMatch(const std::string& msg) : Error(msg) {}
};

struct RemapReport {
    std::vector<std::string> loaded_exact; // model parameter names
    std::vector<std::string> loaded_rule;
    std::vector<std::string> loaded_shape;
    std::vector<std::string> skipped;   // checkpoint entries left unused
    std::vector<std::string> ambiguous; // entries skipped for shape ties
    std::vector<std::string> missing;   // model parameters keeping fresh init

    long loaded_count() const {
        return static_cast<long>(loaded_exact.size() + loaded_rule.size() +
                                 loaded_shape.size());
    }
};

/// Documented rename rules applied when exact names fail (legacy
/// prefixes from earlier layouts of the same architecture).
const std::vector<std::pair<std::string, std::string>>& checkpoint_rename_rules();

/// Loads checkpoint entries into the model: exact name first, then the
/// rename rules, then unique-shape matches. Never reshapes; shape ties
/// are reported, not loaded. Unmatched parameters keep their fresh
/// initialization.
RemapReport remap_checkpoint(const Checkpoint& ckpt, net::DiffuserModel& model);

} // namespace pivflow::train
