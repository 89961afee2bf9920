#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lambc/config.hpp"
#include "lambc/telemetry.hpp"

namespace lambc {

// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitAuditFailure = 4;

struct RunArtifacts {
    ExperimentConfig config;  // fully resolved arm config
    std::filesystem::path directory;
    OutputFiles files;
    std::uint64_t steps = 0;
    double final_train_loss = 0.0;
    std::optional<double> final_test_loss;
    std::optional<double> final_test_accuracy;
    std::optional<double> final_train_accuracy;  // classification, epoch-end eval
    double best_test_accuracy = std::numeric_limits<double>::quiet_NaN();
    double epochs_to_threshold = -1.0;  // first epoch reaching the threshold
    double epochs_to_perfect_train = -1.0;  // first epoch with train accuracy 1
    bool clipping_fired = false;
};

// Trains one configuration end to end and (by default) writes metrics.csv,
// trust_ratios.csv and config.json into the resolved output directory.
RunArtifacts run_experiment(const ExperimentConfig& cfg, bool write_files = true);

struct SweepArtifacts {
    std::vector<RunArtifacts> runs;
    ComparisonReport report;
    std::filesystem::path report_path;
};

// Expands the sweep axes, runs every arm, and emits report.csv next to the
// per-arm run directories.
SweepArtifacts run_sweep(const ExperimentConfig& cfg);

struct GradcheckRow {
    std::string layer;
    double max_rel_error = 0.0;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckRow> rows;
    bool pass = false;
    double tolerance = 1e-6;
};

// Compares hand-coded gradients against central differences at 10 random
// parameter points. The per-layer error is ||analytic - numeric||_2 /
// max(||analytic||_2, ||numeric||_2), maximized over points.
GradcheckReport gradcheck(const ExperimentConfig& cfg);

struct AuditViolation {
    std::size_t row = 0;  // 1-based data row within trust_ratios.csv
    std::string message;
};

struct AuditReport {
    bool ok = false;
    std::size_t rows_checked = 0;
    std::vector<AuditViolation> violations;
};

// Post-hoc verification of a finished run directory: clip band, trust
// ratio recomputation from the stored norms, and step monotonicity.
AuditReport audit_run_dir(const std::filesystem::path& directory);

}  // namespace lambc
