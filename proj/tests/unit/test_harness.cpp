#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lambc/harness.hpp"

using namespace lambc;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "lambc_harness_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

ExperimentConfig small_mlp(const std::filesystem::path& out, const std::string& algorithm) {
    ExperimentConfig cfg = parse_config_text(
        "task.kind = mlp\n"
        "task.input_dim = 4\n"
        "task.hidden = [6]\n"
        "task.output_dim = 2\n"
        "data.n = 32\n"
        "data.test_n = 16\n"
        "train.epochs = 5\n"
        "train.seed = 3\n"
        "optimizer.algorithm = " + algorithm + "\n");
    cfg.out_dir = out.string();
    return cfg;
}

}  // namespace

TEST_CASE("run_experiment writes complete, auditable telemetry") {
    const auto dir = temp_dir("basic");
    const ExperimentConfig cfg = small_mlp(dir, "lambc");
    const RunArtifacts run = run_experiment(cfg);
    CHECK(run.steps == 5);  // full batch: one step per epoch
    CHECK(std::filesystem::exists(run.files.metrics_csv));
    CHECK(std::filesystem::exists(run.files.trust_ratios_csv));
    CHECK(std::filesystem::exists(run.files.config_json));

    const auto metrics = read_metrics_csv(run.files.metrics_csv);
    CHECK(metrics.size() == 5);
    for (const auto& row : metrics) {
        CHECK(row.test_accuracy.has_value());  // full batch: every step ends an epoch
    }
    const auto trust = read_trust_csv(run.files.trust_ratios_csv);
    CHECK(trust.size() == 5 * 4);  // h = 4 parameter tensors

    const AuditReport audit = audit_run_dir(run.directory);
    CHECK(audit.ok);
    CHECK(audit.rows_checked == trust.size());
}

TEST_CASE("identical configs produce byte-identical outputs") {
    const auto dir_a = temp_dir("det_a");
    const auto dir_b = temp_dir("det_b");
    ExperimentConfig cfg_a = small_mlp(dir_a, "lambc");
    ExperimentConfig cfg_b = small_mlp(dir_b, "lambc");
    const RunArtifacts a = run_experiment(cfg_a);
    const RunArtifacts b = run_experiment(cfg_b);
    CHECK(slurp(a.files.metrics_csv) == slurp(b.files.metrics_csv));
    CHECK(slurp(a.files.trust_ratios_csv) == slurp(b.files.trust_ratios_csv));
}

TEST_CASE("sgd and adam runs emit no trust rows") {
    const auto dir = temp_dir("adam");
    const ExperimentConfig cfg = small_mlp(dir, "adam");
    const RunArtifacts run = run_experiment(cfg);
    CHECK(read_trust_csv(run.files.trust_ratios_csv).empty());
    CHECK(audit_run_dir(run.directory).ok);
}

TEST_CASE("gradcheck passes on clean gradients and localizes corruption") {
    ExperimentConfig cfg = small_mlp(temp_dir("gradcheck"), "lambc");
    const GradcheckReport clean = gradcheck(cfg);
    CHECK(clean.pass);
    CHECK(clean.rows.size() == 4);
    for (const auto& row : clean.rows) {
        CHECK(row.pass);
        CHECK(row.max_rel_error <= 1e-6);
    }

    cfg.corrupt_layer = "fc1.weight";
    const GradcheckReport corrupted = gradcheck(cfg);
    CHECK_FALSE(corrupted.pass);
    for (const auto& row : corrupted.rows) {
        if (row.layer == "fc1.weight") {
            CHECK_FALSE(row.pass);
        } else {
            CHECK(row.pass);
        }
    }

    cfg.corrupt_layer = "not_a_layer";
    CHECK_THROWS_AS(gradcheck(cfg), ConfigError);
}

TEST_CASE("gradcheck cost guard rejects oversized models") {
    ExperimentConfig cfg = parse_config_text(
        "task.kind = mlp\n"
        "task.input_dim = 64\n"
        "task.hidden = [128, 128]\n"
        "task.output_dim = 2\n"
        "optimizer.algorithm = lamb\n");
    CHECK_THROWS_AS(gradcheck(cfg), ConfigError);
}

TEST_CASE("audit fails on a tampered trust row and names it") {
    const auto dir = temp_dir("tamper");
    const ExperimentConfig cfg = small_mlp(dir, "lambc");
    const RunArtifacts run = run_experiment(cfg);
    REQUIRE(audit_run_dir(run.directory).ok);

    // Set one clipped_gamma above the band (upper bound is 1).
    std::ifstream in(run.files.trust_ratios_csv);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    in.close();
    REQUIRE(lines.size() > 2);
    auto cells = lines[2];
    // Columns: run_id,step,layer,weight_norm,update_norm,raw_gamma,clipped_gamma,clipped
    const std::size_t last_comma = cells.rfind(',');
    const std::size_t second_last = cells.rfind(',', last_comma - 1);
    cells = cells.substr(0, second_last + 1) + "5" + cells.substr(last_comma);
    lines[2] = cells;
    std::ofstream out(run.files.trust_ratios_csv, std::ios::binary);
    for (const auto& l : lines) out << l << '\n';
    out.close();

    const AuditReport tampered = audit_run_dir(run.directory);
    CHECK_FALSE(tampered.ok);
    bool names_row2 = false;
    for (const auto& v : tampered.violations) {
        if (v.row == 2) names_row2 = true;
    }
    CHECK(names_row2);
}

TEST_CASE("audit recomputes raw gamma from the stored norms") {
    const auto dir = temp_dir("gamma_recompute");
    const ExperimentConfig cfg = small_mlp(dir, "lambc");
    const RunArtifacts run = run_experiment(cfg);

    std::ifstream in(run.files.trust_ratios_csv);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    in.close();
    // Tamper with raw_gamma (column 6) on the first data row.
    auto cells_line = lines[1];
    std::vector<std::size_t> commas;
    for (std::size_t i = 0; i < cells_line.size(); ++i) {
        if (cells_line[i] == ',') commas.push_back(i);
    }
    REQUIRE(commas.size() == 7);
    lines[1] = cells_line.substr(0, commas[4] + 1) + "99.5" + cells_line.substr(commas[5]);
    std::ofstream out(run.files.trust_ratios_csv, std::ios::binary);
    for (const auto& l : lines) out << l << '\n';
    out.close();

    const AuditReport report = audit_run_dir(run.directory);
    CHECK_FALSE(report.ok);
}

TEST_CASE("run_sweep produces per-arm runs and an ordered report") {
    const auto dir = temp_dir("sweep");
    ExperimentConfig cfg = small_mlp(dir, "lambc");
    cfg = parse_config_json(config_to_json(cfg));  // exercise the echo path too
    apply_override(cfg, "sweep.clip_upper=[1, inf]");
    apply_override(cfg, "sweep.seed=[3, 4]");

    const SweepArtifacts sweep = run_sweep(cfg);
    CHECK(sweep.runs.size() == 4);
    CHECK(std::filesystem::exists(sweep.report_path));
    CHECK(sweep.report.columns ==
          std::vector<std::string>{"clip_upper=1", "clip_upper=inf"});
    CHECK(std::filesystem::exists(dir / "000_clip_upper=1_seed=3" / "metrics.csv"));
    CHECK(std::filesystem::exists(dir / "003_clip_upper=inf_seed=4" / "trust_ratios.csv"));

    // Every arm directory must audit cleanly.
    for (const auto& run : sweep.runs) {
        CHECK(audit_run_dir(run.directory).ok);
    }

    // Sweeping requires at least one axis.
    ExperimentConfig no_axes = small_mlp(temp_dir("sweep_none"), "lambc");
    CHECK_THROWS_AS(run_sweep(no_axes), ConfigError);
}

TEST_CASE("divergence surfaces as DivergenceError from run_experiment") {
    ExperimentConfig cfg = parse_config_text(
        "task.kind = quadratic\n"
        "task.input_dim = 4\n"
        "task.condition = 10\n"
        "data.n = 2\n"
        "data.test_n = 1\n"
        "train.epochs = 60\n"
        "optimizer.algorithm = sgd\n"
        "optimizer.lr = 1e6\n");
    cfg.out_dir = temp_dir("diverge").string();
    CHECK_THROWS_AS(run_experiment(cfg), DivergenceError);
}

TEST_CASE("dataset width mismatches are caught before training") {
    ExperimentConfig cfg = small_mlp(temp_dir("width"), "lambc");
    // Point the run at a CSV whose width disagrees with the model.
    const auto csv = temp_dir("width_csv") / "data.csv";
    std::ofstream out(csv);
    out << "1,2,0\n3,4,1\n";
    out.close();
    cfg.csv_train = csv.string();
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}
