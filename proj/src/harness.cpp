#include "lambc/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "lambc/rng.hpp"
#include "lambc/text.hpp"

namespace lambc {

namespace {

// Seed stream tags; fixed so every component draws from its own stream.
constexpr std::uint64_t kModelSeedTag = 11;
constexpr std::uint64_t kDataSeedTag = 22;
constexpr std::uint64_t kShuffleSeedTag = 33;
constexpr std::uint64_t kGradcheckSeedTag = 44;

std::pair<Dataset, Dataset> load_data(const ExperimentConfig& cfg, std::uint64_t data_seed) {
    if (!cfg.csv_train.empty()) {
        Dataset train = load_csv(cfg.csv_train, cfg.csv_has_header);
        Dataset test = cfg.csv_test.empty() ? train : load_csv(cfg.csv_test, cfg.csv_has_header);
        test.split = "test";
        return {std::move(train), std::move(test)};
    }
    if (!cfg.idx_images.empty()) {
        Dataset train = load_idx_pair(cfg.idx_images, cfg.idx_labels);
        Dataset test = cfg.idx_test_images.empty()
                           ? train
                           : load_idx_pair(cfg.idx_test_images, cfg.idx_test_labels);
        test.split = "test";
        return {std::move(train), std::move(test)};
    }
    return synth_dataset(cfg.task, cfg.data, data_seed);
}

Batch full_batch(const Dataset& dataset) {
    return Batch{dataset.features, dataset.labels};
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg, bool write_files) {
    cfg.validate();
    const OptimizerConfig opt_cfg = cfg.resolved_optimizer();

    TaskBundle bundle = make_task(cfg.task, mix64(cfg.seed, kModelSeedTag));
    auto [train, test] = load_data(cfg, mix64(cfg.seed, kDataSeedTag));
    if (train.feature_width() != bundle.task->input_width()) {
        throw ConfigError("dataset feature width " + std::to_string(train.feature_width()) +
                          " does not match task input width " +
                          std::to_string(bundle.task->input_width()));
    }

    BatchPlan plan{cfg.batch_size, cfg.epochs, mix64(cfg.seed, kShuffleSeedTag), cfg.drop_last};
    BatchStream stream(train, plan);
    const Batch test_batch = full_batch(test);
    const Batch train_batch = full_batch(train);

    const bool trust_rows =
        opt_cfg.uses_trust_ratio() && !opt_cfg.force_gamma_one;
    RunLog log(cfg.run_id, opt_cfg, trust_rows ? bundle.model.layer_count() : 0,
               config_to_json(cfg));

    Optimizer optimizer(opt_cfg);
    RunArtifacts out;
    out.config = cfg;
    out.directory = cfg.resolved_out_dir();

    Model& model = bundle.model;
    const Task& task = *bundle.task;
    std::uint64_t step = 0;
    for (std::uint64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t k = 0; k < stream.batches_per_epoch(); ++k) {
            const auto started = std::chrono::steady_clock::now();
            const Batch batch = stream.get(epoch - 1, k);
            ++step;
            StepRow row;
            row.step = step;
            row.epoch = epoch;
            std::vector<TrustRatioRecord> records;
            try {
                const LossValue loss = task.forward(model, batch);
                const GradMap grads = task.backward(model, batch);
                StepOutcome outcome = optimizer.step(model, grads);
                outcome.loss_before = loss.loss;
                row.train_loss = loss.loss;
                records = std::move(outcome.records);
                if (k + 1 == stream.batches_per_epoch()) {
                    const LossValue eval = task.forward(model, test_batch);
                    row.test_loss = eval.loss;
                    row.test_accuracy = eval.accuracy;
                    if (task.classification()) {
                        // Epoch-end train accuracy; in memory only, the
                        // metrics file carries the test curve.
                        const LossValue train_eval = task.forward(model, train_batch);
                        out.final_train_accuracy = train_eval.accuracy;
                        if (train_eval.accuracy && *train_eval.accuracy >= 1.0 &&
                            out.epochs_to_perfect_train < 0) {
                            out.epochs_to_perfect_train = static_cast<double>(epoch);
                        }
                    }
                }
            } catch (const NumericalError& e) {
                // Non-finite values mid-run mean the optimizer diverged.
                throw DivergenceError("", step,
                                      "divergence at step " + std::to_string(step) + ": " +
                                          e.what());
            }
            if (row.test_accuracy) {
                if (std::isnan(out.best_test_accuracy) ||
                    *row.test_accuracy > out.best_test_accuracy) {
                    out.best_test_accuracy = *row.test_accuracy;
                }
                if (out.epochs_to_threshold < 0 &&
                    *row.test_accuracy >= cfg.accuracy_threshold) {
                    out.epochs_to_threshold = static_cast<double>(epoch);
                }
            }
            row.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - started)
                              .count();
            record_step(log, row, records);
            for (const auto& rec : records) {
                out.clipping_fired = out.clipping_fired || rec.clipped;
            }
        }
    }

    out.steps = step;
    if (!log.steps().empty()) {
        const StepRow& last = log.steps().back();
        out.final_train_loss = last.train_loss;
        out.final_test_loss = last.test_loss;
        out.final_test_accuracy = last.test_accuracy;
    }
    if (write_files) {
        out.files = write_outputs(log, out.directory);
    }
    return out;
}

namespace {

bool is_no_clip_arm(const OptimizerConfig& cfg) {
    if (!cfg.clip_enabled) return true;
    return cfg.clip_lower == 0.0 && std::isinf(cfg.clip_upper);
}

std::string short_label(const std::string& key, const std::string& value) {
    const std::size_t dot = key.rfind('.');
    return (dot == std::string::npos ? key : key.substr(dot + 1)) + "=" + value;
}

RunSummary summarize(const RunArtifacts& run,
                     const std::vector<std::pair<std::string, std::string>>& axis_values) {
    RunSummary s;
    s.run_id = run.config.run_id;
    s.task_kind = run.config.task.kind;
    for (const auto& [key, value] : axis_values) {
        s.axis_values[key] = short_label(key, value);
    }
    s.no_clip_arm = is_no_clip_arm(run.config.resolved_optimizer());
    s.final_train_loss = run.final_train_loss;
    if (run.final_test_accuracy) s.final_test_accuracy = *run.final_test_accuracy;
    s.best_test_accuracy = run.best_test_accuracy;
    s.epochs_to_threshold = run.epochs_to_threshold;
    return s;
}

}  // namespace

SweepArtifacts run_sweep(const ExperimentConfig& cfg) {
    const auto arms = expand_sweep(cfg);

    // Arm axis: the first swept key that toggles clipping; columns: the
    // first remaining non-seed axis (falling back to the arm axis).
    auto is_clip_axis = [](const std::string& key) {
        return key == "optimizer.clip_upper" || key == "optimizer.clip_lower" ||
               key == "optimizer.clip_enabled" || key == "optimizer.algorithm";
    };
    ComparisonSpec spec;
    spec.accuracy_threshold = cfg.accuracy_threshold;
    for (const auto& axis : cfg.sweep) {
        if (spec.arm_axis.empty() && is_clip_axis(axis.key)) spec.arm_axis = axis.key;
    }
    for (const auto& axis : cfg.sweep) {
        if (axis.key == "train.seed" || axis.key == spec.arm_axis) continue;
        spec.column_axis = axis.key;
        break;
    }
    if (spec.column_axis.empty()) spec.column_axis = spec.arm_axis;

    SweepArtifacts out;
    std::vector<RunSummary> summaries;
    for (std::size_t i = 0; i < arms.size(); ++i) {
        const auto& [label, arm_cfg] = arms[i];
        RunArtifacts run = run_experiment(arm_cfg, true);
        // Recover this arm's axis assignment from the expansion order.
        std::vector<std::pair<std::string, std::string>> assignment;
        std::size_t residual = i;
        std::size_t block = 1;
        for (const auto& axis : cfg.sweep) block *= axis.values.size();
        for (const auto& axis : cfg.sweep) {
            block /= axis.values.size();
            const std::size_t vi = residual / block;
            residual %= block;
            assignment.emplace_back(axis.key, axis.values[vi]);
        }
        summaries.push_back(summarize(run, assignment));
        out.runs.push_back(std::move(run));
    }

    out.report = compare_runs(summaries, spec);
    out.report_path = std::filesystem::path(cfg.resolved_out_dir()) / "report.csv";
    std::filesystem::create_directories(cfg.resolved_out_dir());
    write_text_atomic(out.report_path, render_report_csv(out.report));
    return out;
}

GradcheckReport gradcheck(const ExperimentConfig& cfg) {
    cfg.validate();
    constexpr std::size_t kMaxParams = 10000;
    constexpr std::size_t kPoints = 10;
    constexpr std::size_t kBatch = 8;
    constexpr double kStep = 1e-5;

    TaskBundle bundle = make_task(cfg.task, mix64(cfg.seed, kModelSeedTag));
    if (bundle.model.parameter_count() > kMaxParams) {
        throw ConfigError("gradcheck cost guard: model has " +
                          std::to_string(bundle.model.parameter_count()) +
                          " parameters, limit is " + std::to_string(kMaxParams));
    }
    auto [train, test] = load_data(cfg, mix64(cfg.seed, kDataSeedTag));
    (void)test;
    BatchPlan plan{std::min<std::size_t>(kBatch, train.size()), 1,
                   mix64(cfg.seed, kShuffleSeedTag), false};
    BatchStream stream(train, plan);
    const Batch batch = stream.get(0, 0);

    GradcheckReport report;
    report.pass = true;
    std::map<std::string, double> worst;
    for (std::size_t point = 0; point < kPoints; ++point) {
        Model probe = snapshot(bundle.model);
        Rng rng(mix64(cfg.seed, kGradcheckSeedTag + point));
        for (auto& layer : probe.layers) {
            // Random parameter point: same scale as the init for weights,
            // a moderate band for biases (zero init would hide bugs).
            double s = 0.5;
            if (layer.weights.shape.size() == 2) {
                s = std::sqrt(6.0 / static_cast<double>(layer.weights.shape[0] +
                                                        layer.weights.shape[1]));
            }
            for (double& w : layer.weights.data) {
                w = rng.uniform(-s, s);
            }
        }
        GradMap analytic = bundle.task->backward(probe, batch);
        if (!cfg.corrupt_layer.empty()) {
            auto it = analytic.find(cfg.corrupt_layer);
            if (it == analytic.end()) {
                throw ConfigError("debug.corrupt_layer '" + cfg.corrupt_layer +
                                  "' is not a model layer");
            }
            for (double& g : it->second.data) {
                g = g * 1.001 + 1e-3;
            }
        }
        const GradMap numeric = finite_diff_grad(*bundle.task, probe, batch, kStep);
        for (const auto& [name, a] : analytic) {
            const Tensor& f = numeric.at(name);
            double diff_sq = 0.0, a_sq = 0.0, f_sq = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double d = a.data[i] - f.data[i];
                diff_sq += d * d;
                a_sq += a.data[i] * a.data[i];
                f_sq += f.data[i] * f.data[i];
            }
            const double denom = std::max({std::sqrt(a_sq), std::sqrt(f_sq), 1e-12});
            const double err = std::sqrt(diff_sq) / denom;
            auto [it, inserted] = worst.emplace(name, err);
            if (!inserted && err > it->second) it->second = err;
        }
    }
    for (const auto& [name, err] : worst) {
        const bool pass = err <= report.tolerance;
        report.rows.push_back({name, err, pass});
        report.pass = report.pass && pass;
    }
    return report;
}

AuditReport audit_run_dir(const std::filesystem::path& directory) {
    const auto config_path = directory / "config.json";
    const auto trust_path = directory / "trust_ratios.csv";
    std::ifstream config_in(config_path);
    if (!config_in) {
        throw IoError("audit: cannot open " + config_path.string());
    }
    nlohmann::json echo;
    try {
        config_in >> echo;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("audit: " + config_path.string() + ": " + e.what());
    }
    const ExperimentConfig cfg = parse_config_json(echo);
    const OptimizerConfig opt = cfg.resolved_optimizer();
    const auto records = read_trust_csv(trust_path);

    AuditReport report;
    report.rows_checked = records.size();
    auto violation = [&](std::size_t row, std::string message) {
        report.violations.push_back({row, std::move(message)});
    };

    const double kTol = 1e-9;
    std::uint64_t prev_step = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        const std::size_t row = i + 1;
        if (i == 0) {
            if (rec.step != 1) {
                violation(row, "first step is " + std::to_string(rec.step) + ", expected 1");
            }
        } else if (rec.step != prev_step && rec.step != prev_step + 1) {
            violation(row, "step " + std::to_string(rec.step) + " after step " +
                               std::to_string(prev_step) + " breaks monotonicity");
        }
        prev_step = rec.step;

        if (rec.raw_gamma < 0.0) {
            violation(row, "raw_gamma is negative");
        }
        const double recomputed = trust_ratio_from_norms(rec.weight_norm, rec.update_norm);
        if (std::fabs(rec.raw_gamma - recomputed) > kTol * std::max(1.0, std::fabs(recomputed))) {
            violation(row, "raw_gamma " + format_float(rec.raw_gamma) +
                               " does not match weight_norm/update_norm = " +
                               format_float(recomputed));
        }
        if (opt.clip_enabled) {
            const auto [lower, upper] = bound_schedule(rec.step, opt);
            if (rec.clipped_gamma < lower || rec.clipped_gamma > upper) {
                violation(row, "clipped_gamma " + format_float(rec.clipped_gamma) +
                                   " outside the clip band [" + format_float(lower) + ", " +
                                   format_float(upper) + "]");
            }
            const double expected = clip_trust_ratio(rec.raw_gamma, lower, upper);
            if (std::fabs(rec.clipped_gamma - expected) >
                kTol * std::max(1.0, std::fabs(expected))) {
                violation(row, "clipped_gamma " + format_float(rec.clipped_gamma) +
                                   " does not equal clip(raw_gamma) = " + format_float(expected));
            }
        } else {
            if (rec.clipped_gamma != rec.raw_gamma) {
                violation(row, "clipping disabled but clipped_gamma differs from raw_gamma");
            }
            if (rec.clipped) {
                violation(row, "clipping disabled but clipped flag set");
            }
        }
        const bool expect_clipped = rec.clipped_gamma != rec.raw_gamma;
        if (rec.clipped != expect_clipped) {
            violation(row, std::string("clipped flag is ") + (rec.clipped ? "true" : "false") +
                               " but gamma values say " + (expect_clipped ? "true" : "false"));
        }
    }
    report.ok = report.violations.empty();
    return report;
}

}  // namespace lambc
