#include "lambc/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "lambc/text.hpp"

namespace lambc {

namespace {

// Parsed scalar or list from the config format. Numbers stay doubles;
// integral fields check that the value is exactly representable.
struct Value {
    enum class Kind { boolean, number, string, list };
    Kind kind = Kind::string;
    bool b = false;
    double num = 0.0;
    std::string str;
    std::vector<Value> items;
};

Value parse_scalar(const std::string& raw_in, const std::string& key);

Value parse_list(const std::string& raw, const std::string& key) {
    Value v;
    v.kind = Value::Kind::list;
    const std::string inner = trim(raw.substr(1, raw.size() - 2));
    if (inner.empty()) return v;
    for (const auto& part : split(inner, ',')) {
        v.items.push_back(parse_scalar(trim(part), key));
    }
    return v;
}

Value parse_scalar(const std::string& raw_in, const std::string& key) {
    const std::string raw = trim(raw_in);
    if (raw.empty()) {
        throw ConfigError("config key '" + key + "': empty value");
    }
    Value v;
    if (raw.front() == '[') {
        if (raw.back() != ']') {
            throw ConfigError("config key '" + key + "': unterminated list");
        }
        return parse_list(raw, key);
    }
    if (raw == "true" || raw == "false") {
        v.kind = Value::Kind::boolean;
        v.b = raw == "true";
        return v;
    }
    if (raw.size() >= 2 && ((raw.front() == '"' && raw.back() == '"') ||
                            (raw.front() == '\'' && raw.back() == '\''))) {
        v.kind = Value::Kind::string;
        v.str = raw.substr(1, raw.size() - 2);
        return v;
    }
    if (const auto num = parse_double(raw)) {
        v.kind = Value::Kind::number;
        v.num = *num;
        return v;
    }
    v.kind = Value::Kind::string;
    v.str = raw;
    return v;
}

std::string canonical_string(const Value& v, const std::string& key) {
    switch (v.kind) {
        case Value::Kind::boolean: return v.b ? "true" : "false";
        case Value::Kind::number: return format_float(v.num);
        case Value::Kind::string: return v.str;
        case Value::Kind::list:
            throw ConfigError("config key '" + key + "': nested lists are not supported");
    }
    return {};
}

bool as_bool(const Value& v, const std::string& key) {
    if (v.kind != Value::Kind::boolean) {
        throw ConfigError("config key '" + key + "': expected true/false");
    }
    return v.b;
}

double as_number(const Value& v, const std::string& key) {
    if (v.kind == Value::Kind::number) return v.num;
    if (v.kind == Value::Kind::string) {
        if (const auto num = parse_double(v.str)) return *num;
    }
    throw ConfigError("config key '" + key + "': expected a number");
}

std::uint64_t as_u64(const Value& v, const std::string& key) {
    const double num = as_number(v, key);
    if (!(num >= 0.0) || num != std::floor(num) || !std::isfinite(num)) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer");
    }
    return static_cast<std::uint64_t>(num);
}

std::size_t as_size(const Value& v, const std::string& key) {
    return static_cast<std::size_t>(as_u64(v, key));
}

std::string as_string(const Value& v, const std::string& key) {
    switch (v.kind) {
        case Value::Kind::string: return v.str;
        case Value::Kind::number: return format_float(v.num);
        case Value::Kind::boolean: return v.b ? "true" : "false";
        case Value::Kind::list:
            throw ConfigError("config key '" + key + "': expected a scalar, got a list");
    }
    return {};
}

std::vector<Value> as_list(const Value& v) {
    if (v.kind == Value::Kind::list) return v.items;
    return {v};  // scalar promotes to a one-element list
}

nlohmann::json json_number(double x) {
    if (std::isfinite(x)) return x;
    return x > 0 ? "inf" : "-inf";  // JSON has no literal for these
}

Value value_from_json(const nlohmann::json& j, const std::string& key) {
    Value v;
    if (j.is_boolean()) {
        v.kind = Value::Kind::boolean;
        v.b = j.get<bool>();
    } else if (j.is_number()) {
        v.kind = Value::Kind::number;
        v.num = j.get<double>();
    } else if (j.is_string()) {
        v.kind = Value::Kind::string;
        v.str = j.get<std::string>();
    } else if (j.is_array()) {
        v.kind = Value::Kind::list;
        for (const auto& item : j) {
            v.items.push_back(value_from_json(item, key));
        }
    } else {
        throw ConfigError("config key '" + key + "': unsupported JSON value");
    }
    return v;
}

struct Field {
    std::string key;
    std::function<void(ExperimentConfig&, const Value&)> set;
    std::function<nlohmann::json(const ExperimentConfig&)> get;
};

const std::vector<Field>& registry() {
    static const std::vector<Field> fields = [] {
        std::vector<Field> f;
        auto add = [&f](std::string key, std::function<void(ExperimentConfig&, const Value&)> set,
                        std::function<nlohmann::json(const ExperimentConfig&)> get) {
            f.push_back({std::move(key), std::move(set), std::move(get)});
        };

        add("task.kind",
            [](ExperimentConfig& c, const Value& v) {
                const std::string kind = as_string(v, "task.kind");
                if (kind != "quadratic" && kind != "linear" && kind != "linear-regression" &&
                    kind != "logistic" && kind != "mlp") {
                    throw ConfigError("task.kind must be quadratic|linear|logistic|mlp, got '" +
                                      kind + "'");
                }
                c.task.kind = kind;
            },
            [](const ExperimentConfig& c) { return c.task.kind; });
        add("task.input_dim",
            [](ExperimentConfig& c, const Value& v) {
                c.task.input_dim = as_size(v, "task.input_dim");
            },
            [](const ExperimentConfig& c) { return c.task.input_dim; });
        add("task.output_dim",
            [](ExperimentConfig& c, const Value& v) {
                c.task.output_dim = as_size(v, "task.output_dim");
            },
            [](const ExperimentConfig& c) { return c.task.output_dim; });
        add("task.hidden",
            [](ExperimentConfig& c, const Value& v) {
                c.task.hidden.clear();
                for (const auto& item : as_list(v)) {
                    c.task.hidden.push_back(as_size(item, "task.hidden"));
                }
            },
            [](const ExperimentConfig& c) { return c.task.hidden; });
        add("task.activation",
            [](ExperimentConfig& c, const Value& v) {
                const std::string act = as_string(v, "task.activation");
                if (act != "relu" && act != "tanh") {
                    throw ConfigError("task.activation must be relu or tanh");
                }
                c.task.activation = act;
            },
            [](const ExperimentConfig& c) { return c.task.activation; });
        add("task.condition",
            [](ExperimentConfig& c, const Value& v) {
                c.task.condition = as_number(v, "task.condition");
                if (!(c.task.condition >= 1.0)) {
                    throw ConfigError("task.condition must be >= 1");
                }
            },
            [](const ExperimentConfig& c) { return json_number(c.task.condition); });

        add("data.source",
            [](ExperimentConfig& c, const Value& v) {
                const std::string s = as_string(v, "data.source");
                if (s != "planted" && s != "two-gaussians") {
                    throw ConfigError("data.source must be planted or two-gaussians");
                }
                c.data.source = s;
            },
            [](const ExperimentConfig& c) { return c.data.source; });
        add("data.n",
            [](ExperimentConfig& c, const Value& v) { c.data.train_n = as_size(v, "data.n"); },
            [](const ExperimentConfig& c) { return c.data.train_n; });
        add("data.test_n",
            [](ExperimentConfig& c, const Value& v) { c.data.test_n = as_size(v, "data.test_n"); },
            [](const ExperimentConfig& c) { return c.data.test_n; });
        add("data.margin",
            [](ExperimentConfig& c, const Value& v) { c.data.margin = as_number(v, "data.margin"); },
            [](const ExperimentConfig& c) { return json_number(c.data.margin); });
        add("data.overlap",
            [](ExperimentConfig& c, const Value& v) {
                c.data.overlap = as_number(v, "data.overlap");
            },
            [](const ExperimentConfig& c) { return json_number(c.data.overlap); });
        add("data.noise",
            [](ExperimentConfig& c, const Value& v) { c.data.noise = as_number(v, "data.noise"); },
            [](const ExperimentConfig& c) { return json_number(c.data.noise); });
        add("data.batch_size",
            [](ExperimentConfig& c, const Value& v) {
                if (v.kind == Value::Kind::string && v.str == "full") {
                    c.batch_size = 0;
                } else {
                    c.batch_size = as_size(v, "data.batch_size");
                }
            },
            [](const ExperimentConfig& c) { return c.batch_size; });
        add("data.drop_last",
            [](ExperimentConfig& c, const Value& v) {
                c.drop_last = as_bool(v, "data.drop_last");
            },
            [](const ExperimentConfig& c) { return c.drop_last; });
        add("data.csv_train",
            [](ExperimentConfig& c, const Value& v) {
                c.csv_train = as_string(v, "data.csv_train");
            },
            [](const ExperimentConfig& c) { return c.csv_train; });
        add("data.csv_test",
            [](ExperimentConfig& c, const Value& v) { c.csv_test = as_string(v, "data.csv_test"); },
            [](const ExperimentConfig& c) { return c.csv_test; });
        add("data.csv_has_header",
            [](ExperimentConfig& c, const Value& v) {
                c.csv_has_header = as_bool(v, "data.csv_has_header");
            },
            [](const ExperimentConfig& c) { return c.csv_has_header; });
        add("data.idx_images",
            [](ExperimentConfig& c, const Value& v) {
                c.idx_images = as_string(v, "data.idx_images");
            },
            [](const ExperimentConfig& c) { return c.idx_images; });
        add("data.idx_labels",
            [](ExperimentConfig& c, const Value& v) {
                c.idx_labels = as_string(v, "data.idx_labels");
            },
            [](const ExperimentConfig& c) { return c.idx_labels; });
        add("data.idx_test_images",
            [](ExperimentConfig& c, const Value& v) {
                c.idx_test_images = as_string(v, "data.idx_test_images");
            },
            [](const ExperimentConfig& c) { return c.idx_test_images; });
        add("data.idx_test_labels",
            [](ExperimentConfig& c, const Value& v) {
                c.idx_test_labels = as_string(v, "data.idx_test_labels");
            },
            [](const ExperimentConfig& c) { return c.idx_test_labels; });

        add("train.epochs",
            [](ExperimentConfig& c, const Value& v) { c.epochs = as_u64(v, "train.epochs"); },
            [](const ExperimentConfig& c) { return c.epochs; });
        add("train.seed",
            [](ExperimentConfig& c, const Value& v) { c.seed = as_u64(v, "train.seed"); },
            [](const ExperimentConfig& c) { return c.seed; });

        add("optimizer.algorithm",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.algorithm = parse_algorithm(as_string(v, "optimizer.algorithm"));
            },
            [](const ExperimentConfig& c) { return to_string(c.optimizer.algorithm); });
        add("optimizer.lr",
            [](ExperimentConfig& c, const Value& v) { c.optimizer.lr = as_number(v, "optimizer.lr"); },
            [](const ExperimentConfig& c) { return json_number(c.optimizer.lr); });
        add("optimizer.warmup_steps",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.warmup_steps = as_u64(v, "optimizer.warmup_steps");
            },
            [](const ExperimentConfig& c) { return c.optimizer.warmup_steps; });
        add("optimizer.beta1",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.beta1 = as_number(v, "optimizer.beta1");
            },
            [](const ExperimentConfig& c) { return json_number(c.optimizer.beta1); });
        add("optimizer.beta2",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.beta2 = as_number(v, "optimizer.beta2");
            },
            [](const ExperimentConfig& c) { return json_number(c.optimizer.beta2); });
        add("optimizer.epsilon",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.epsilon = as_number(v, "optimizer.epsilon");
            },
            [](const ExperimentConfig& c) { return json_number(c.optimizer.epsilon); });
        add("optimizer.weight_decay",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.weight_decay = as_number(v, "optimizer.weight_decay");
            },
            [](const ExperimentConfig& c) { return json_number(c.optimizer.weight_decay); });
        add("optimizer.momentum",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.momentum = as_number(v, "optimizer.momentum");
            },
            [](const ExperimentConfig& c) { return json_number(c.optimizer.momentum); });
        add("optimizer.clip_enabled",
            [](ExperimentConfig& c, const Value& v) {
                if (v.kind == Value::Kind::string && v.str == "auto") {
                    c.clip_mode = ClipMode::automatic;
                } else {
                    c.clip_mode = as_bool(v, "optimizer.clip_enabled") ? ClipMode::on : ClipMode::off;
                }
            },
            [](const ExperimentConfig& c) -> nlohmann::json {
                if (c.clip_mode == ClipMode::automatic) return "auto";
                return c.clip_mode == ClipMode::on;
            });
        add("optimizer.clip_lower",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.clip_lower = as_number(v, "optimizer.clip_lower");
            },
            [](const ExperimentConfig& c) { return json_number(c.optimizer.clip_lower); });
        add("optimizer.clip_upper",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.clip_upper = as_number(v, "optimizer.clip_upper");
            },
            [](const ExperimentConfig& c) { return json_number(c.optimizer.clip_upper); });
        add("optimizer.bias_correction",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.bias_correction =
                    parse_bias_correction(as_string(v, "optimizer.bias_correction"));
            },
            [](const ExperimentConfig& c) { return to_string(c.optimizer.bias_correction); });
        add("optimizer.trust_ratio_denominator",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.trust_ratio_denominator =
                    parse_trust_denominator(as_string(v, "optimizer.trust_ratio_denominator"));
            },
            [](const ExperimentConfig& c) {
                return to_string(c.optimizer.trust_ratio_denominator);
            });
        add("optimizer.bound_policy",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.bound_policy =
                    parse_bound_policy(as_string(v, "optimizer.bound_policy"));
            },
            [](const ExperimentConfig& c) { return to_string(c.optimizer.bound_policy); });
        add("optimizer.bound_rate",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.bound_rate = as_number(v, "optimizer.bound_rate");
            },
            [](const ExperimentConfig& c) { return json_number(c.optimizer.bound_rate); });
        add("optimizer.exclude_from_decay",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.exclude_from_decay.clear();
                for (const auto& item : as_list(v)) {
                    c.optimizer.exclude_from_decay.push_back(
                        as_string(item, "optimizer.exclude_from_decay"));
                }
            },
            [](const ExperimentConfig& c) { return c.optimizer.exclude_from_decay; });

        add("output.dir",
            [](ExperimentConfig& c, const Value& v) { c.out_dir = as_string(v, "output.dir"); },
            [](const ExperimentConfig& c) { return c.out_dir; });
        add("output.run_id",
            [](ExperimentConfig& c, const Value& v) {
                c.run_id = as_string(v, "output.run_id");
                if (c.run_id.empty()) {
                    throw ConfigError("output.run_id must not be empty");
                }
            },
            [](const ExperimentConfig& c) { return c.run_id; });

        add("report.accuracy_threshold",
            [](ExperimentConfig& c, const Value& v) {
                c.accuracy_threshold = as_number(v, "report.accuracy_threshold");
            },
            [](const ExperimentConfig& c) { return json_number(c.accuracy_threshold); });

        add("sweep.max_runs",
            [](ExperimentConfig& c, const Value& v) {
                c.sweep_max_runs = as_size(v, "sweep.max_runs");
            },
            [](const ExperimentConfig& c) { return c.sweep_max_runs; });

        add("debug.force_gamma_one",
            [](ExperimentConfig& c, const Value& v) {
                c.optimizer.force_gamma_one = as_bool(v, "debug.force_gamma_one");
            },
            [](const ExperimentConfig& c) { return c.optimizer.force_gamma_one; });
        add("debug.corrupt_layer",
            [](ExperimentConfig& c, const Value& v) {
                c.corrupt_layer = as_string(v, "debug.corrupt_layer");
            },
            [](const ExperimentConfig& c) { return c.corrupt_layer; });
        return f;
    }();
    return fields;
}

const Field* find_field(const std::string& key) {
    for (const auto& field : registry()) {
        if (field.key == key) return &field;
    }
    return nullptr;
}

// Resolves a sweep/override key: exact match first, then a unique match
// with one of the section prefixes applied.
std::string resolve_key(const std::string& key) {
    if (find_field(key)) return key;
    static const char* kSections[] = {"task", "data", "train", "optimizer",
                                      "output", "report", "debug"};
    std::vector<std::string> matches;
    for (const char* section : kSections) {
        const std::string candidate = std::string(section) + "." + key;
        if (find_field(candidate)) matches.push_back(candidate);
    }
    if (matches.size() == 1) return matches[0];
    if (matches.empty()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    std::string msg = "ambiguous config key '" + key + "' (candidates:";
    for (const auto& m : matches) msg += " " + m;
    throw ConfigError(msg + ")");
}

std::string strip_comment(const std::string& line) {
    bool in_quote = false;
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (in_quote) {
            if (ch == quote) in_quote = false;
        } else if (ch == '"' || ch == '\'') {
            in_quote = true;
            quote = ch;
        } else if (ch == '#') {
            return line.substr(0, i);
        }
    }
    return line;
}

std::string short_key(const std::string& key) {
    const std::size_t dot = key.rfind('.');
    return dot == std::string::npos ? key : key.substr(dot + 1);
}

void set_axis(ExperimentConfig& cfg, const std::string& raw_key, const Value& value) {
    const std::string resolved = resolve_key(raw_key);
    SweepAxis axis;
    axis.key = resolved;
    for (const auto& item : as_list(value)) {
        axis.values.push_back(canonical_string(item, "sweep." + raw_key));
    }
    if (axis.values.empty()) {
        throw ConfigError("sweep axis '" + resolved + "' has no values");
    }
    for (const auto& existing : cfg.sweep) {
        if (existing.key == resolved) {
            throw ConfigError("duplicate sweep axis '" + resolved + "'");
        }
    }
    cfg.sweep.push_back(std::move(axis));
}

void apply_key_value(ExperimentConfig& cfg, const std::string& full_key,
                     const std::string& raw_value, bool& saw_task, bool& saw_algorithm) {
    if (full_key.rfind("sweep.", 0) == 0 && full_key != "sweep.max_runs") {
        set_axis(cfg, full_key.substr(6), parse_scalar(raw_value, full_key));
        return;
    }
    const Field* field = find_field(full_key);
    if (!field) {
        throw ConfigError("unknown config key '" + full_key + "'");
    }
    field->set(cfg, parse_scalar(raw_value, full_key));
    if (full_key == "task.kind") saw_task = true;
    if (full_key == "optimizer.algorithm") saw_algorithm = true;
}

}  // namespace

OptimizerConfig ExperimentConfig::resolved_optimizer() const {
    OptimizerConfig cfg = optimizer;
    cfg.clip_enabled = clip_mode == ClipMode::automatic ? cfg.algorithm == Algorithm::lambc
                                                        : clip_mode == ClipMode::on;
    return cfg;
}

std::string ExperimentConfig::resolved_out_dir() const {
    if (!out_dir.empty()) return out_dir;
    if (const char* env = std::getenv("LAMBC_OUT_DIR"); env && *env) return env;
    return "out";
}

void ExperimentConfig::validate() const {
    if (task.input_dim == 0 || task.output_dim == 0) {
        throw ConfigError("task dimensions must be positive");
    }
    for (std::size_t h : task.hidden) {
        if (h == 0) throw ConfigError("task.hidden entries must be positive");
    }
    if (data.train_n < 2) {
        throw ConfigError("data.n must be >= 2");
    }
    if (data.test_n < 1) {
        throw ConfigError("data.test_n must be >= 1");
    }
    if (epochs == 0) {
        throw ConfigError("train.epochs must be >= 1");
    }
    if (!(accuracy_threshold > 0.0 && accuracy_threshold <= 1.0)) {
        throw ConfigError("report.accuracy_threshold must be in (0, 1]");
    }
    if (run_id.empty()) {
        throw ConfigError("output.run_id must not be empty");
    }
    const bool synthetic = csv_train.empty() && idx_images.empty();
    if (synthetic && batch_size > data.train_n) {
        throw ConfigError("data.batch_size exceeds data.n");
    }
    if (sweep_max_runs == 0) {
        throw ConfigError("sweep.max_runs must be >= 1");
    }
    resolved_optimizer().validate();
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    bool saw_task = false;
    bool saw_algorithm = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string cleaned = trim(strip_comment(line));
        if (cleaned.empty()) continue;
        if (cleaned.front() == '[') {
            if (cleaned.back() != ']') {
                throw ConfigError(origin + " line " + std::to_string(line_no) +
                                  ": unterminated section header");
            }
            section = trim(cleaned.substr(1, cleaned.size() - 2));
            continue;
        }
        const std::size_t eq = cleaned.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + " line " + std::to_string(line_no) +
                              ": expected key = value");
        }
        const std::string key = trim(cleaned.substr(0, eq));
        const std::string value = trim(cleaned.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(origin + " line " + std::to_string(line_no) + ": empty key");
        }
        const std::string full_key = section.empty() ? key : section + "." + key;
        try {
            apply_key_value(cfg, full_key, value, saw_task, saw_algorithm);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!saw_task || !saw_algorithm) {
        throw ConfigError(origin + ": config must set task.kind and optimizer.algorithm");
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), path);
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must look like key=value, got '" + assignment + "'");
    }
    const std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    bool dummy_task = false, dummy_algo = false;
    if (key.rfind("sweep.", 0) == 0 && key != "sweep.max_runs") {
        // Replace an existing axis with the override.
        const std::string resolved = resolve_key(key.substr(6));
        std::erase_if(cfg.sweep, [&](const SweepAxis& a) { return a.key == resolved; });
        apply_key_value(cfg, key, value, dummy_task, dummy_algo);
        return;
    }
    apply_key_value(cfg, resolve_key(key), value, dummy_task, dummy_algo);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json echo = nlohmann::json::object();
    for (const auto& field : registry()) {
        echo[field.key] = field.get(cfg);
    }
    nlohmann::json axes = nlohmann::json::array();
    for (const auto& axis : cfg.sweep) {
        axes.push_back({{"key", axis.key}, {"values", axis.values}});
    }
    echo["sweep"] = std::move(axes);
    return echo;
}

ExperimentConfig parse_config_json(const nlohmann::json& echo) {
    if (!echo.is_object()) {
        throw ConfigError("config echo must be a JSON object");
    }
    ExperimentConfig cfg;
    for (const auto& [key, value] : echo.items()) {
        if (key == "sweep") {
            if (!value.is_array()) {
                throw ConfigError("config echo: sweep must be an array");
            }
            for (const auto& axis_json : value) {
                SweepAxis axis;
                axis.key = axis_json.at("key").get<std::string>();
                if (!find_field(axis.key)) {
                    throw ConfigError("config echo: unknown sweep axis '" + axis.key + "'");
                }
                for (const auto& v : axis_json.at("values")) {
                    axis.values.push_back(v.get<std::string>());
                }
                cfg.sweep.push_back(std::move(axis));
            }
            continue;
        }
        const Field* field = find_field(key);
        if (!field) {
            throw ConfigError("config echo: unknown key '" + key + "'");
        }
        field->set(cfg, value_from_json(value, key));
    }
    cfg.validate();
    return cfg;
}

std::string config_value_string(const ExperimentConfig& cfg, const std::string& key) {
    const Field* field = find_field(resolve_key(key));
    const nlohmann::json j = field->get(cfg);
    if (j.is_boolean()) return j.get<bool>() ? "true" : "false";
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number_float()) return format_float(j.get<double>());
    if (j.is_number()) return std::to_string(j.get<std::uint64_t>());
    return j.dump();
}

std::vector<std::pair<std::string, ExperimentConfig>> expand_sweep(const ExperimentConfig& cfg) {
    if (cfg.sweep.empty()) {
        throw ConfigError("sweep requires at least one axis");
    }
    std::size_t total = 1;
    for (const auto& axis : cfg.sweep) {
        if (axis.values.empty()) {
            throw ConfigError("sweep axis '" + axis.key + "' has no values");
        }
        total *= axis.values.size();
    }
    if (total > cfg.sweep_max_runs) {
        throw ConfigError("sweep would produce " + std::to_string(total) +
                          " runs, above the cap of " + std::to_string(cfg.sweep_max_runs) +
                          " (raise sweep.max_runs to allow)");
    }

    const std::string parent = cfg.resolved_out_dir();
    std::vector<std::pair<std::string, ExperimentConfig>> arms;
    std::vector<std::size_t> counter(cfg.sweep.size(), 0);
    for (std::size_t idx = 0; idx < total; ++idx) {
        ExperimentConfig arm = cfg;
        arm.sweep.clear();
        char buf[24];
        std::snprintf(buf, sizeof(buf), "%03zu", idx);
        std::string label = buf;
        bool dummy_task = false, dummy_algo = false;
        for (std::size_t a = 0; a < cfg.sweep.size(); ++a) {
            const auto& axis = cfg.sweep[a];
            const std::string& value = axis.values[counter[a]];
            apply_key_value(arm, axis.key, value, dummy_task, dummy_algo);
            label += "_" + short_key(axis.key) + "=" + value;
        }
        arm.run_id = label;
        arm.out_dir = parent + "/" + label;
        arm.validate();
        arms.emplace_back(label, std::move(arm));

        // Odometer: last axis spins fastest, so output order is axis order
        // then value order.
        for (std::size_t a = cfg.sweep.size(); a-- > 0;) {
            if (++counter[a] < cfg.sweep[a].values.size()) break;
            counter[a] = 0;
        }
    }
    return arms;
}

}  // namespace lambc
