#include "lambc/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lambc/text.hpp"

namespace lambc {

RunLog::RunLog(std::string run_id, OptimizerConfig optimizer_cfg,
               std::size_t expected_trust_rows, nlohmann::json config_echo)
    : run_id_(std::move(run_id)),
      optimizer_cfg_(std::move(optimizer_cfg)),
      expected_trust_rows_(expected_trust_rows),
      config_echo_(std::move(config_echo)) {}

void RunLog::append(const StepRow& row, const std::vector<TrustRatioRecord>& records) {
    steps_.push_back(row);
    trust_.insert(trust_.end(), records.begin(), records.end());
}

void record_step(RunLog& log, const StepRow& row, const std::vector<TrustRatioRecord>& records) {
    const std::uint64_t expected = log.steps().empty() ? 1 : log.steps().back().step + 1;
    if (row.step != expected) {
        throw SequenceError("out-of-order step " + std::to_string(row.step) + ", expected " +
                            std::to_string(expected));
    }
    if (records.size() != log.expected_trust_rows()) {
        throw InvariantError("step " + std::to_string(row.step) + ": got " +
                             std::to_string(records.size()) + " trust rows, expected " +
                             std::to_string(log.expected_trust_rows()));
    }
    const OptimizerConfig& cfg = log.optimizer_config();
    for (const auto& rec : records) {
        if (rec.step != row.step) {
            throw InvariantError("trust record for layer '" + rec.layer + "' carries step " +
                                 std::to_string(rec.step) + " inside step " +
                                 std::to_string(row.step));
        }
        if (cfg.clip_enabled) {
            const auto [lower, upper] = bound_schedule(row.step, cfg);
            if (rec.clipped_gamma < lower || rec.clipped_gamma > upper) {
                throw InvariantError("clip band violated at step " + std::to_string(row.step) +
                                     ", layer '" + rec.layer + "': gamma " +
                                     format_float(rec.clipped_gamma) + " outside [" +
                                     format_float(lower) + ", " + format_float(upper) + "]");
            }
        }
    }
    log.append(row, records);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) {
            throw IoError("cannot open for writing: " + tmp.string());
        }
        out << content;
        if (!out) {
            throw IoError("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("rename failed: " + tmp.string() + " -> " + path.string() + ": " +
                      ec.message());
    }
}

namespace {

constexpr const char* kMetricsHeader = "run_id,step,epoch,train_loss,test_loss,test_accuracy";
constexpr const char* kTrustHeader =
    "run_id,step,layer,weight_norm,update_norm,raw_gamma,clipped_gamma,clipped";

std::string optional_cell(const std::optional<double>& v) {
    return v ? format_float(*v) : std::string();
}

double parse_cell(const std::string& cell, const std::filesystem::path& path, std::size_t line) {
    const auto v = parse_double(cell);
    if (!v) {
        throw FormatError(path.string() + " line " + std::to_string(line) +
                          ": cannot parse '" + cell + "'");
    }
    return *v;
}

std::uint64_t parse_u64_cell(const std::string& cell, const std::filesystem::path& path,
                             std::size_t line) {
    const double v = parse_cell(cell, path, line);
    const auto u = static_cast<std::uint64_t>(v);
    if (static_cast<double>(u) != v) {
        throw FormatError(path.string() + " line " + std::to_string(line) + ": '" + cell +
                          "' is not an integer");
    }
    return u;
}

}  // namespace

OutputFiles write_outputs(const RunLog& log, const std::filesystem::path& directory) {
    std::error_code ec;
    std::filesystem::create_directories(directory, ec);
    if (ec) {
        throw IoError("cannot create directory " + directory.string() + ": " + ec.message());
    }

    std::ostringstream metrics;
    metrics << kMetricsHeader << '\n';
    for (const auto& row : log.steps()) {
        metrics << log.run_id() << ',' << row.step << ',' << row.epoch << ','
                << format_float(row.train_loss) << ',' << optional_cell(row.test_loss) << ','
                << optional_cell(row.test_accuracy) << '\n';
    }

    std::ostringstream trust;
    trust << kTrustHeader << '\n';
    for (const auto& rec : log.trust_records()) {
        trust << log.run_id() << ',' << rec.step << ',' << rec.layer << ','
              << format_float(rec.weight_norm) << ',' << format_float(rec.update_norm) << ','
              << format_float(rec.raw_gamma) << ',' << format_float(rec.clipped_gamma) << ','
              << (rec.clipped ? "true" : "false") << '\n';
    }

    OutputFiles files;
    files.metrics_csv = directory / "metrics.csv";
    files.trust_ratios_csv = directory / "trust_ratios.csv";
    files.config_json = directory / "config.json";
    write_text_atomic(files.metrics_csv, metrics.str());
    write_text_atomic(files.trust_ratios_csv, trust.str());
    write_text_atomic(files.config_json, log.config_echo().dump(2) + "\n");
    return files;
}

std::vector<TrustRatioRecord> read_trust_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError(path.string() + ": empty file");
    }
    if (trim(line) != kTrustHeader) {
        throw FormatError(path.string() + " line 1: unexpected header '" + line + "'");
    }
    std::vector<TrustRatioRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(trim(line), ',');
        if (cells.size() != 8) {
            throw FormatError(path.string() + " line " + std::to_string(line_no) +
                              ": expected 8 columns, got " + std::to_string(cells.size()));
        }
        TrustRatioRecord rec;
        rec.step = parse_u64_cell(cells[1], path, line_no);
        rec.layer = cells[2];
        rec.weight_norm = parse_cell(cells[3], path, line_no);
        rec.update_norm = parse_cell(cells[4], path, line_no);
        rec.raw_gamma = parse_cell(cells[5], path, line_no);
        rec.clipped_gamma = parse_cell(cells[6], path, line_no);
        if (cells[7] == "true") {
            rec.clipped = true;
        } else if (cells[7] == "false") {
            rec.clipped = false;
        } else {
            throw FormatError(path.string() + " line " + std::to_string(line_no) +
                              ": clipped must be true/false, got '" + cells[7] + "'");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<StepRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError(path.string() + ": empty file");
    }
    if (trim(line) != kMetricsHeader) {
        throw FormatError(path.string() + " line 1: unexpected header '" + line + "'");
    }
    std::vector<StepRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(trim(line), ',');
        if (cells.size() != 6) {
            throw FormatError(path.string() + " line " + std::to_string(line_no) +
                              ": expected 6 columns, got " + std::to_string(cells.size()));
        }
        StepRow row;
        row.step = parse_u64_cell(cells[1], path, line_no);
        row.epoch = parse_u64_cell(cells[2], path, line_no);
        row.train_loss = parse_cell(cells[3], path, line_no);
        if (!cells[4].empty()) row.test_loss = parse_cell(cells[4], path, line_no);
        if (!cells[5].empty()) row.test_accuracy = parse_cell(cells[5], path, line_no);
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Run comparison

namespace {

std::vector<std::string> ordered_labels(const std::vector<RunSummary>& runs,
                                        const std::string& axis) {
    std::vector<std::string> labels;
    for (const auto& run : runs) {
        const auto it = run.axis_values.find(axis);
        const std::string label = it == run.axis_values.end() ? std::string("all") : it->second;
        if (std::find(labels.begin(), labels.end(), label) == labels.end()) {
            labels.push_back(label);
        }
    }
    return labels;
}

std::string axis_label(const RunSummary& run, const std::string& axis) {
    const auto it = run.axis_values.find(axis);
    return it == run.axis_values.end() ? std::string("all") : it->second;
}

struct GroupStats {
    double final_test_accuracy = std::numeric_limits<double>::quiet_NaN();
    double best_test_accuracy = std::numeric_limits<double>::quiet_NaN();
    double epochs_to_threshold = -1.0;
    double final_train_loss = std::numeric_limits<double>::quiet_NaN();
    bool present = false;
};

GroupStats aggregate(const std::vector<const RunSummary*>& members) {
    GroupStats stats;
    if (members.empty()) return stats;
    stats.present = true;
    double acc = 0.0, best = 0.0, loss = 0.0, epochs = 0.0;
    bool all_reached = true;
    bool has_acc = true;
    for (const auto* run : members) {
        if (std::isnan(run->final_test_accuracy)) has_acc = false;
        acc += run->final_test_accuracy;
        best += run->best_test_accuracy;
        loss += run->final_train_loss;
        if (run->epochs_to_threshold < 0) {
            all_reached = false;
        } else {
            epochs += run->epochs_to_threshold;
        }
    }
    const double k = static_cast<double>(members.size());
    stats.final_test_accuracy = has_acc ? acc / k : std::numeric_limits<double>::quiet_NaN();
    stats.best_test_accuracy = has_acc ? best / k : std::numeric_limits<double>::quiet_NaN();
    stats.final_train_loss = loss / k;
    stats.epochs_to_threshold = all_reached ? epochs / k : -1.0;
    return stats;
}

}  // namespace

ComparisonReport compare_runs(const std::vector<RunSummary>& runs, const ComparisonSpec& spec) {
    if (runs.size() < 2) {
        throw ConfigError("compare_runs needs at least 2 runs");
    }
    for (const auto& run : runs) {
        if (run.task_kind != runs.front().task_kind) {
            throw ConfigError("compare_runs: runs mix tasks '" + runs.front().task_kind +
                              "' and '" + run.task_kind + "'");
        }
    }

    const bool split_arms = !spec.arm_axis.empty() && spec.arm_axis != spec.column_axis;
    const std::vector<std::string> columns = ordered_labels(runs, spec.column_axis);
    const std::vector<std::string> arms =
        split_arms ? ordered_labels(runs, spec.arm_axis) : std::vector<std::string>{""};

    // (arm, column) -> aggregated metrics over member runs (seeds collapse).
    std::map<std::pair<std::string, std::string>, GroupStats> groups;
    std::map<std::string, bool> arm_is_noclip;
    std::map<std::string, bool> column_is_noclip;
    for (const auto& arm : arms) {
        for (const auto& col : columns) {
            std::vector<const RunSummary*> members;
            for (const auto& run : runs) {
                if (axis_label(run, spec.column_axis) != col) continue;
                if (split_arms && axis_label(run, spec.arm_axis) != arm) continue;
                members.push_back(&run);
                if (split_arms) {
                    arm_is_noclip[arm] = run.no_clip_arm;
                } else {
                    column_is_noclip[col] = run.no_clip_arm;
                }
            }
            groups[{arm, col}] = aggregate(members);
        }
    }

    ComparisonReport report;
    report.columns = columns;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    auto metric_of = [](const GroupStats& g, int metric) {
        switch (metric) {
            case 0: return g.final_test_accuracy;
            case 1: return g.best_test_accuracy;
            case 2: return g.epochs_to_threshold;
            default: return g.final_train_loss;
        }
    };
    static const char* kMetricNames[] = {"final_test_accuracy", "best_test_accuracy",
                                         "epochs_to_threshold", "final_train_loss"};

    for (int metric = 0; metric < 4; ++metric) {
        for (const auto& arm : arms) {
            std::string name = std::string(kMetricNames[metric]) + "_mean";
            if (split_arms) name += "[" + arm + "]";
            std::vector<double> cells;
            for (const auto& col : columns) {
                const GroupStats& g = groups[{arm, col}];
                cells.push_back(g.present ? metric_of(g, metric) : nan);
            }
            report.rows.emplace_back(std::move(name), std::move(cells));
        }
    }

    // Clip-minus-noclip deltas on the accuracy metrics.
    if (split_arms) {
        std::string noclip_arm;
        for (const auto& arm : arms) {
            if (arm_is_noclip.count(arm) && arm_is_noclip[arm]) noclip_arm = arm;
        }
        if (!noclip_arm.empty()) {
            for (int metric = 0; metric < 2; ++metric) {
                for (const auto& arm : arms) {
                    if (arm == noclip_arm) continue;
                    std::vector<double> cells;
                    for (const auto& col : columns) {
                        const GroupStats& a = groups[{arm, col}];
                        const GroupStats& b = groups[{noclip_arm, col}];
                        cells.push_back(a.present && b.present
                                            ? metric_of(a, metric) - metric_of(b, metric)
                                            : nan);
                    }
                    report.rows.emplace_back(std::string(kMetricNames[metric]) + "_delta[" + arm +
                                                 "-" + noclip_arm + "]",
                                             std::move(cells));
                }
            }
        }
    } else {
        std::string noclip_col;
        for (const auto& col : columns) {
            if (column_is_noclip.count(col) && column_is_noclip[col]) noclip_col = col;
        }
        if (!noclip_col.empty()) {
            const std::size_t noclip_idx = static_cast<std::size_t>(
                std::find(columns.begin(), columns.end(), noclip_col) - columns.begin());
            for (int metric = 0; metric < 2; ++metric) {
                std::vector<double> cells;
                for (const auto& col : columns) {
                    const GroupStats& a = groups[{"", col}];
                    const GroupStats& b = groups[{"", columns[noclip_idx]}];
                    cells.push_back(a.present && b.present
                                        ? metric_of(a, metric) - metric_of(b, metric)
                                        : nan);
                }
                report.rows.emplace_back(
                    std::string(kMetricNames[metric]) + "_delta_vs_" + noclip_col,
                    std::move(cells));
            }
        }
    }
    return report;
}

std::string render_report_csv(const ComparisonReport& report) {
    std::ostringstream os;
    os << "metric";
    for (const auto& col : report.columns) {
        os << ',' << col;
    }
    os << '\n';
    for (const auto& [name, cells] : report.rows) {
        os << name;
        for (double v : cells) {
            os << ',';
            if (!std::isnan(v)) os << format_float(v);
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace lambc
