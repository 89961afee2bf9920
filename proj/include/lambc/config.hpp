#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lambc/dataset.hpp"
#include "lambc/optimizer.hpp"
#include "lambc/tasks.hpp"

namespace lambc {

enum class ClipMode { automatic, on, off };

// One sweep axis: a config key plus the values to grid over, kept as the
// canonical strings they were written with (re-parsed when applied).
struct SweepAxis {
    std::string key;
    std::vector<std::string> values;

    bool operator==(const SweepAxis&) const = default;
};

struct ExperimentConfig {
    TaskSpec task;
    DataSpec data;

    std::size_t batch_size = 0;  // 0 = full batch
    bool drop_last = false;

    OptimizerConfig optimizer;
    // optimizer.clip_enabled surface: automatic derives it from the
    // algorithm (lambc clips, everything else does not).
    ClipMode clip_mode = ClipMode::automatic;

    std::uint64_t epochs = 80;
    std::uint64_t seed = 42;

    std::string out_dir;  // resolved via --out / LAMBC_OUT_DIR / "out"
    std::string run_id = "run";
    double accuracy_threshold = 0.9;

    std::vector<SweepAxis> sweep;
    std::size_t sweep_max_runs = 64;

    // Debug hooks.
    std::string corrupt_layer;  // gradcheck fault injection

    // Optional file-backed data; synthetic generation is used when empty.
    std::string csv_train, csv_test;
    bool csv_has_header = false;
    std::string idx_images, idx_labels, idx_test_images, idx_test_labels;

    // Optimizer config with clip_enabled materialized from clip_mode.
    OptimizerConfig resolved_optimizer() const;

    // Output directory after applying the default chain.
    std::string resolved_out_dir() const;

    void validate() const;

    bool operator==(const ExperimentConfig&) const = default;
};

// Parses the flat `section.key = value` config format (see README).
// Unknown keys, type mismatches and invariant violations raise ConfigError
// naming the key.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "config");
ExperimentConfig parse_config_file(const std::string& path);

// Applies one `section.key=value` override (the CLI --set flag).
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Full field-for-field echo; parse_config_json inverts it exactly.
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig parse_config_json(const nlohmann::json& echo);

// Current value of one config key, as a canonical string (used for sweep
// axis labels and report columns).
std::string config_value_string(const ExperimentConfig& cfg, const std::string& key);

// Cartesian product of the sweep axes, in axis order then value order.
// Labels look like "000_clip_upper=1_seed=7"; each arm gets run_id = label
// and out_dir = <parent>/<label>.
std::vector<std::pair<std::string, ExperimentConfig>> expand_sweep(const ExperimentConfig& cfg);

}  // namespace lambc
