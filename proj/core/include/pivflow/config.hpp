#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "pivflow/core/errors.hpp"
#include "pivflow/diffusion/schedule.hpp"
#include "pivflow/eval/metrics.hpp"
#include "pivflow/io/manifest.hpp"
#include "pivflow/net/model.hpp"
#include "pivflow/synth/generator.hpp"
#include "pivflow/train/trainer.hpp"
#include "pivflow/widim/widim.hpp"

namespace pivflow {

struct UnknownConfigKey : Error {
    explicit UnknownConfigKey(const std::string& msg) : Error(msg) {}
};

/// Structured key-value run configuration. Every key is registered with
/// a type and default; unknown keys are rejected, not ignored. The fully
/// resolved state is serialized into each run's output directory.
class RunConfig {
public:
    RunConfig();

    /// `key = value` lines, '#' comments, blank lines ignored.
    void load_file(const std::filesystem::path& path);

    /// Parses value according to the key's registered type.
    void set(const std::string& key, const std::string& value);

    long get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    const std::string& get_string(const std::string& key) const;

    /// Sorted `key = value` dump of the resolved configuration.
    std::string dump() const;
    void write(const std::filesystem::path& path) const;

private:
    enum class Type { Int, Double, Bool, String };
    struct Item {
        Type type = Type::String;
        long int_value = 0;
        double double_value = 0.0;
        bool bool_value = false;
        std::string string_value;
    };

    void register_int(const std::string& key, long v);
    void register_double(const std::string& key, double v);
    void register_bool(const std::string& key, bool v);
    void register_string(const std::string& key, std::string v);
    const Item& require(const std::string& key, Type t) const;

    std::map<std::string, Item> items_;
};

// Module-config builders from the resolved run configuration.
net::ModelConfig model_config_from(const RunConfig& cfg);
diffusion::DiffusionSchedule schedule_from(const RunConfig& cfg);
diffusion::FlowNormalizer normalizer_from(const RunConfig& cfg);
train::TrainConfig train_config_from(const RunConfig& cfg);
synth::GeneratorConfig generator_config_from(const RunConfig& cfg);
widim::WidimConfig widim_config_from(const RunConfig& cfg);
eval::MetricOptions metric_options_from(const RunConfig& cfg);
io::ManifestPattern manifest_pattern_from(const RunConfig& cfg);

} // namespace pivflow
