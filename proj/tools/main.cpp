#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lambc/harness.hpp"
#include "lambc/text.hpp"

namespace {

lambc::ExperimentConfig load_config(const std::string& config_path,
                                    const std::vector<std::string>& overrides,
                                    const std::string& out_dir, const std::string& seed) {
    lambc::ExperimentConfig cfg = lambc::parse_config_file(config_path);
    for (const auto& assignment : overrides) {
        lambc::apply_override(cfg, assignment);
    }
    if (!out_dir.empty()) {
        lambc::apply_override(cfg, "output.dir=" + out_dir);
    }
    if (!seed.empty()) {
        lambc::apply_override(cfg, "train.seed=" + seed);
    }
    cfg.validate();
    return cfg;
}

void print_run(const lambc::RunArtifacts& run) {
    std::cout << "run " << run.config.run_id << ": " << run.steps << " steps, final train loss "
              << lambc::format_float(run.final_train_loss);
    if (run.final_test_accuracy) {
        std::cout << ", final test accuracy " << lambc::format_float(*run.final_test_accuracy);
    }
    std::cout << "\n  outputs: " << run.directory.string() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lambc: layerwise-adaptive optimizers with trust-ratio clipping"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string seed;
    std::vector<std::string> overrides;

    auto add_common = [&](CLI::App* cmd, bool config_required) {
        cmd->add_option("--config", config_path, "experiment config file")
            ->required(config_required);
        cmd->add_option("--out", out_dir, "output directory (overrides output.dir)");
        cmd->add_option("--seed", seed, "seed (overrides train.seed)");
        cmd->add_option("--set", overrides, "override section.key=value (repeatable)");
    };

    CLI::App* run_cmd = app.add_subcommand("run", "train one configuration");
    add_common(run_cmd, true);
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run the configured sweep grid");
    add_common(sweep_cmd, true);
    CLI::App* gradcheck_cmd =
        app.add_subcommand("gradcheck", "check hand-coded gradients against central differences");
    add_common(gradcheck_cmd, true);

    std::string audit_dir;
    CLI::App* audit_cmd = app.add_subcommand("audit", "re-verify a finished run directory");
    audit_cmd->add_option("dir", audit_dir, "run directory with trust_ratios.csv and config.json")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(run_cmd)) {
            const auto cfg = load_config(config_path, overrides, out_dir, seed);
            print_run(lambc::run_experiment(cfg));
            return lambc::kExitOk;
        }
        if (app.got_subcommand(sweep_cmd)) {
            const auto cfg = load_config(config_path, overrides, out_dir, seed);
            const auto sweep = lambc::run_sweep(cfg);
            for (const auto& run : sweep.runs) {
                print_run(run);
            }
            std::cout << "report: " << sweep.report_path.string() << "\n"
                      << lambc::render_report_csv(sweep.report);
            return lambc::kExitOk;
        }
        if (app.got_subcommand(gradcheck_cmd)) {
            const auto cfg = load_config(config_path, overrides, out_dir, seed);
            const auto report = lambc::gradcheck(cfg);
            std::printf("%-24s %-14s %s\n", "layer", "max_rel_error", "status");
            for (const auto& row : report.rows) {
                std::printf("%-24s %-14.3e %s\n", row.layer.c_str(), row.max_rel_error,
                            row.pass ? "pass" : "FAIL");
            }
            std::cout << (report.pass ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance "
                      << lambc::format_float(report.tolerance) << ")" << std::endl;
            return report.pass ? lambc::kExitOk : lambc::kExitFailure;
        }
        if (app.got_subcommand(audit_cmd)) {
            const auto report = lambc::audit_run_dir(audit_dir);
            if (report.ok) {
                std::cout << "audit passed: " << report.rows_checked << " rows verified"
                          << std::endl;
                return lambc::kExitOk;
            }
            for (const auto& v : report.violations) {
                std::cerr << "row " << v.row << ": " << v.message << "\n";
            }
            std::cerr << "audit FAILED: " << report.violations.size() << " violation(s) in "
                      << report.rows_checked << " rows" << std::endl;
            return lambc::kExitAuditFailure;
        }
    } catch (const lambc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return lambc::kExitConfigError;
    } catch (const lambc::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << std::endl;
        return lambc::kExitDivergence;
    } catch (const lambc::Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return lambc::kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return lambc::kExitFailure;
    }
    return lambc::kExitFailure;
}
