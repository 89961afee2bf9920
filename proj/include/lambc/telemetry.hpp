#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lambc/optimizer.hpp"

namespace lambc {

// One step-level metrics row. wall_ms is kept in memory for interactive
// inspection but never serialized: output files must be bit-identical
// across reruns of the same config.
struct StepRow {
    std::uint64_t step = 0;
    std::uint64_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> test_loss;
    std::optional<double> test_accuracy;
    double wall_ms = 0.0;
};

// Append-only log of one run. Checks the clip-band invariant eagerly as
// rows arrive so violations surface at the offending step, not at flush.
class RunLog {
public:
    RunLog(std::string run_id, OptimizerConfig optimizer_cfg, std::size_t expected_trust_rows,
           nlohmann::json config_echo);

    const std::string& run_id() const noexcept { return run_id_; }
    const nlohmann::json& config_echo() const noexcept { return config_echo_; }
    const OptimizerConfig& optimizer_config() const noexcept { return optimizer_cfg_; }
    const std::vector<StepRow>& steps() const noexcept { return steps_; }
    const std::vector<TrustRatioRecord>& trust_records() const noexcept { return trust_; }
    std::size_t expected_trust_rows() const noexcept { return expected_trust_rows_; }

    void append(const StepRow& row, const std::vector<TrustRatioRecord>& records);

private:
    std::string run_id_;
    OptimizerConfig optimizer_cfg_;
    std::size_t expected_trust_rows_;
    nlohmann::json config_echo_;
    std::vector<StepRow> steps_;
    std::vector<TrustRatioRecord> trust_;
};

// Validates ordering (steps start at 1 and increase by 1), the per-step
// trust row count, and the clip band; then appends.
void record_step(RunLog& log, const StepRow& row, const std::vector<TrustRatioRecord>& records);

struct OutputFiles {
    std::filesystem::path metrics_csv;
    std::filesystem::path trust_ratios_csv;
    std::filesystem::path config_json;
};

// Writes metrics.csv, trust_ratios.csv and config.json into `directory`
// (created if needed). Files are written to a temp name and renamed.
OutputFiles write_outputs(const RunLog& log, const std::filesystem::path& directory);

// Strict readers for the files written above.
std::vector<TrustRatioRecord> read_trust_csv(const std::filesystem::path& path);
std::vector<StepRow> read_metrics_csv(const std::filesystem::path& path);

// Atomic small-file write used for every artifact this library emits.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

// --- Run comparison ---------------------------------------------------------

// Per-run scalar results plus the sweep-axis labels that identify the run.
struct RunSummary {
    std::string run_id;
    std::string task_kind;
    std::map<std::string, std::string> axis_values;  // axis key -> value label
    bool no_clip_arm = false;  // no clipping, or the identity band (0, inf)
    double final_train_loss = 0.0;
    double final_test_accuracy = std::numeric_limits<double>::quiet_NaN();
    double best_test_accuracy = std::numeric_limits<double>::quiet_NaN();
    double epochs_to_threshold = -1.0;  // -1 when the threshold was never reached
};

struct ComparisonSpec {
    std::string column_axis;  // axis key whose values become report columns
    std::string arm_axis;     // axis key that separates clip arms ("" = none)
    double accuracy_threshold = 0.9;
};

// Table-shaped report: one row per metric, one column per configuration,
// plus clip-minus-noclip delta rows when a no-clip arm exists.
struct ComparisonReport {
    std::vector<std::string> columns;
    std::vector<std::pair<std::string, std::vector<double>>> rows;  // NaN renders blank
};

ComparisonReport compare_runs(const std::vector<RunSummary>& runs, const ComparisonSpec& spec);

std::string render_report_csv(const ComparisonReport& report);

}  // namespace lambc
