#include "pivflow/io/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "pivflow/core/hash.hpp"
#include "pivflow/io/flo.hpp"
#include "pivflow/io/image.hpp"

namespace pivflow::io {

namespace fs = std::filesystem;

std::vector<const ManifestEntry*> DatasetManifest::split_entries(Split s) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries) {
        if (e.split == s) out.push_back(&e);
    }
    return out;
}

namespace {

const char* kImageExtensions[] = {".png", ".tif", ".tiff"};

bool is_image_ext(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const char* e : kImageExtensions) {
        if (ext == e) return true;
    }
    return false;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace

DatasetManifest build_manifest(const fs::path& root, std::uint64_t split_seed,
                               const ManifestPattern& pattern) {
    if (!fs::is_directory(root)) {
        throw IOFailure("dataset root " + root.string() + " is not a directory");
    }

    // name -> partial entry, grouped per case directory
    struct Partial {
        std::optional<fs::path> img1, img2, flow;
    };
    std::map<std::string, std::map<std::string, Partial>> cases; // case dir -> name -> files

    std::vector<fs::path> case_dirs;
    for (const auto& de : fs::directory_iterator(root)) {
        if (de.is_directory()) case_dirs.push_back(de.path());
    }
    std::sort(case_dirs.begin(), case_dirs.end());

    for (const fs::path& dir : case_dirs) {
        auto& group = cases[dir.filename().string()];
        std::vector<fs::path> files;
        for (const auto& de : fs::directory_iterator(dir)) {
            if (de.is_regular_file()) files.push_back(de.path());
        }
        std::sort(files.begin(), files.end());
        for (const fs::path& f : files) {
            const std::string stem = f.stem().string();
            if (is_image_ext(f) && ends_with(stem, pattern.img1_suffix)) {
                group[stem.substr(0, stem.size() - pattern.img1_suffix.size())].img1 = f;
            } else if (is_image_ext(f) && ends_with(stem, pattern.img2_suffix)) {
                group[stem.substr(0, stem.size() - pattern.img2_suffix.size())].img2 = f;
            } else if (f.extension() == ".flo" && ends_with(stem, pattern.flow_suffix)) {
                group[stem.substr(0, stem.size() - pattern.flow_suffix.size())].flow = f;
            }
        }
    }

    DatasetManifest manifest;
    manifest.root = root;

    for (auto& [case_dir, group] : cases) {
        // Validate pairing before splitting.
        std::vector<ManifestEntry> case_entries;
        for (auto& [name, partial] : group) {
            if (!partial.img1 || !partial.img2) {
                const fs::path present = partial.img1 ? *partial.img1
                                       : partial.img2 ? *partial.img2
                                                      : *partial.flow;
                throw OrphanFile(present.string() + ": entry '" + name +
                                 "' is missing its partner file");
            }
            ManifestEntry e;
            e.name = name;
            e.img1 = fs::relative(*partial.img1, root);
            e.img2 = fs::relative(*partial.img2, root);
            if (partial.flow) e.flow = fs::relative(*partial.flow, root);
            e.case_label = case_label_from_directory(case_dir);
            case_entries.push_back(std::move(e));
        }

        // Deterministic pseudo-random order, then rank-quantile slicing.
        const std::string seed_str = std::to_string(split_seed);
        std::stable_sort(case_entries.begin(), case_entries.end(),
                         [&](const ManifestEntry& a, const ManifestEntry& b) {
                             const auto ha = fnv1a64(a.name + ":" + seed_str);
                             const auto hb = fnv1a64(b.name + ":" + seed_str);
                             return ha != hb ? ha < hb : a.name < b.name;
                         });
        const auto n = static_cast<long>(case_entries.size());
        const long train_end = std::llround(0.8 * n);
        const long val_end = std::llround(0.9 * n);
        for (long i = 0; i < n; ++i) {
            case_entries[i].split = i < train_end ? Split::Train
                                  : i < val_end   ? Split::Val
                                                  : Split::Test;
        }
        for (auto& e : case_entries) manifest.entries.push_back(std::move(e));
    }

    if (manifest.entries.empty()) {
        throw EmptyDataset(root.string() + ": no image pairs found");
    }

    // Stable final order: by case dir then name (already grouped by the map).
    std::stable_sort(manifest.entries.begin(), manifest.entries.end(),
                     [](const ManifestEntry& a, const ManifestEntry& b) {
                         return a.img1.string() < b.img1.string();
                     });
    return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IOFailure("cannot write " + path.string());
    f << "# pivflow manifest v1\n";
    for (const auto& e : manifest.entries) {
        f << e.img1.generic_string() << '\t' << e.img2.generic_string() << '\t'
          << (e.flow ? e.flow->generic_string() : "-") << '\t' << to_string(e.case_label)
          << '\t' << to_string(e.split) << '\n';
    }
    if (!f) throw IOFailure("write failed for " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IOFailure("cannot open " + path.string());

    DatasetManifest manifest;
    manifest.root = path.parent_path();

    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string img1, img2, flow, label, split;
        if (!(std::getline(ss, img1, '\t') && std::getline(ss, img2, '\t') &&
              std::getline(ss, flow, '\t') && std::getline(ss, label, '\t') &&
              std::getline(ss, split))) {
            throw Error(path.string() + ": malformed manifest line: " + line);
        }
        ManifestEntry e;
        e.img1 = img1;
        e.img2 = img2;
        if (flow != "-") e.flow = flow;
        e.case_label = parse_case_label(label);
        e.split = parse_split(split);
        std::string stem = fs::path(img1).stem().string();
        // Strip a trailing _img1-style suffix if present; fall back to the stem.
        const auto pos = stem.rfind("_img1");
        e.name = pos == std::string::npos ? stem : stem.substr(0, pos);
        manifest.entries.push_back(std::move(e));
    }
    if (manifest.entries.empty()) {
        throw EmptyDataset(path.string() + ": manifest lists no entries");
    }
    return manifest;
}

FlowSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry) {
    FlowSample s;
    s.pair.frame_a = read_image(manifest.root / entry.img1);
    s.pair.frame_b = read_image(manifest.root / entry.img2);
    s.pair.source_id = entry.name;
    if (entry.flow) s.gt = read_flo(manifest.root / *entry.flow);
    s.case_label = entry.case_label;
    s.split = entry.split;
    return s;
}

} // namespace pivflow::io
