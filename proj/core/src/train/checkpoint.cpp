#include "pivflow/train/checkpoint.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace pivflow::train {

namespace fs = std::filesystem;

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
    for (const Entry& e : entries) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

Checkpoint::Entry& Checkpoint::upsert(const std::string& name) {
    for (Entry& e : entries) {
        if (e.name == name) return e;
    }
    entries.push_back(Entry{name, {}, {}, {}});
    return entries.back();
}

namespace {

constexpr char kMagic[8] = {'P', 'I', 'V', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_le(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const auto n = read_le<std::uint32_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IOFailure("cannot open " + tmp.string() + " for writing");
        f.write(kMagic, sizeof(kMagic));
        write_le<std::uint32_t>(f, static_cast<std::uint32_t>(ckpt.format_version));
        write_string(f, ckpt.source_tag);
        write_le<std::uint64_t>(f, ckpt.entries.size());
        for (const auto& e : ckpt.entries) {
            write_string(f, e.name);
            const bool is_blob = !e.blob.empty();
            write_le<std::uint8_t>(f, is_blob ? 1 : 0);
            if (is_blob) {
                write_le<std::uint64_t>(f, e.blob.size());
                f.write(e.blob.data(), static_cast<std::streamsize>(e.blob.size()));
            } else {
                write_le<std::uint8_t>(f, static_cast<std::uint8_t>(e.shape.size()));
                for (int d : e.shape) write_le<std::int64_t>(f, d);
                f.write(reinterpret_cast<const char*>(e.data.data()),
                        static_cast<std::streamsize>(e.data.size() * sizeof(double)));
            }
        }
        if (!f) throw IOFailure("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IOFailure("cannot open " + path.string());
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw Error(path.string() + ": not a pivflow checkpoint");
    }
    Checkpoint ckpt;
    ckpt.format_version = static_cast<int>(read_le<std::uint32_t>(f));
    if (ckpt.format_version != 1) {
        throw Error(path.string() + ": unsupported checkpoint version " +
                    std::to_string(ckpt.format_version));
    }
    ckpt.source_tag = read_string(f);
    const auto n = read_le<std::uint64_t>(f);
    ckpt.entries.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        Checkpoint::Entry e;
        e.name = read_string(f);
        const auto is_blob = read_le<std::uint8_t>(f);
        if (is_blob) {
            const auto size = read_le<std::uint64_t>(f);
            e.blob.resize(size);
            f.read(e.blob.data(), static_cast<std::streamsize>(size));
        } else {
            const auto ndim = read_le<std::uint8_t>(f);
            long numel = 1;
            for (int d = 0; d < ndim; ++d) {
                const auto dim = read_le<std::int64_t>(f);
                e.shape.push_back(static_cast<int>(dim));
                numel *= dim;
            }
            e.data.resize(static_cast<size_t>(numel));
            f.read(reinterpret_cast<char*>(e.data.data()),
                   static_cast<std::streamsize>(e.data.size() * sizeof(double)));
        }
        if (!f) throw Error(path.string() + ": truncated checkpoint");
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

Checkpoint checkpoint_from_model(const net::DiffuserModel& model, const std::string& tag) {
    Checkpoint ckpt;
    ckpt.source_tag = tag;
    for (const auto& p : model.parameters()) {
        Checkpoint::Entry e;
        e.name = p.name;
        e.shape = p.var->value.shape();
        e.data = p.var->value.raw();
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

const std::vector<std::pair<std::string, std::string>>& checkpoint_rename_rules() {
    static const std::vector<std::pair<std::string, std::string>> rules = {
        {"module.", ""}, // data-parallel wrapper prefix
        {"fnet.", "basic_encoder."},
        {"cnet.", "context_encoder."},
        {"update_block.encoder.", "updater.motion_encoder."},
        {"update_block.", "updater."},
    };
    return rules;
}

namespace {

bool is_reserved(const std::string& name) {
    return name.rfind("__opt__", 0) == 0 || name.rfind("__rng__", 0) == 0 ||
           name.rfind("__meta__", 0) == 0;
}

} // namespace

RemapReport remap_checkpoint(const Checkpoint& ckpt, net::DiffuserModel& model) {
    RemapReport report;

    std::map<std::string, net::Var> unmatched_params;
    for (const auto& p : model.parameters()) unmatched_params[p.name] = p.var;

    std::map<std::string, const Checkpoint::Entry*> unmatched_entries;
    for (const auto& e : ckpt.entries) {
        if (!is_reserved(e.name)) unmatched_entries[e.name] = &e;
    }

    auto try_load = [&](const std::string& param_name, const Checkpoint::Entry& entry) {
        net::Var var = unmatched_params.at(param_name);
        if (var->value.shape() != entry.shape) return false; // never reshape
        var->value.raw() = entry.data;
        return true;
    };

    // Pass 1: exact names.
    for (auto it = unmatched_entries.begin(); it != unmatched_entries.end();) {
        auto pit = unmatched_params.find(it->first);
        if (pit != unmatched_params.end() && try_load(it->first, *it->second)) {
            report.loaded_exact.push_back(it->first);
            unmatched_params.erase(pit);
            it = unmatched_entries.erase(it);
        } else {
            ++it;
        }
    }

    // Pass 2: rename rules.
    for (auto it = unmatched_entries.begin(); it != unmatched_entries.end();) {
        bool consumed = false;
        for (const auto& [from, to] : checkpoint_rename_rules()) {
            if (it->first.rfind(from, 0) != 0) continue;
            const std::string renamed = to + it->first.substr(from.size());
            auto pit = unmatched_params.find(renamed);
            if (pit != unmatched_params.end() && try_load(renamed, *it->second)) {
                report.loaded_rule.push_back(renamed);
                unmatched_params.erase(pit);
                it = unmatched_entries.erase(it);
                consumed = true;
                break;
            }
        }
        if (!consumed) ++it;
    }

    // Pass 3: unique-shape matches among the leftovers.
    for (auto pit = unmatched_params.begin(); pit != unmatched_params.end();) {
        const auto& shape = pit->second->value.shape();
        std::vector<std::string> candidates;
        for (const auto& [name, entry] : unmatched_entries) {
            if (entry->shape == shape) candidates.push_back(name);
        }
        long params_of_shape = 0;
        for (const auto& [name, var] : unmatched_params) {
            if (var->value.shape() == shape) ++params_of_shape;
        }
        if (candidates.size() == 1 && params_of_shape == 1) {
            try_load(pit->first, *unmatched_entries.at(candidates.front()));
            report.loaded_shape.push_back(pit->first);
            unmatched_entries.erase(candidates.front());
            pit = unmatched_params.erase(pit);
        } else {
            if (candidates.size() > 1) {
                for (const auto& c : candidates) {
                    if (std::find(report.ambiguous.begin(), report.ambiguous.end(), c) ==
                        report.ambiguous.end()) {
                        report.ambiguous.push_back(c);
                    }
                }
            }
            ++pit;
        }
    }

    for (const auto& [name, var] : unmatched_params) report.missing.push_back(name);
    for (const auto& [name, entry] : unmatched_entries) report.skipped.push_back(name);
    return report;
}

} // namespace pivflow::train
