#include "lambc/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lambc/rng.hpp"
#include "lambc/text.hpp"

namespace lambc {

void BatchPlan::validate(std::size_t n) const {
    if (n == 0) {
        throw ConfigError("dataset is empty");
    }
    if (epochs == 0) {
        throw ConfigError("epochs must be >= 1");
    }
    const std::size_t b = effective_batch_size(n);
    if (b == 0 || b > n) {
        throw ConfigError("batch size " + std::to_string(b) + " must be in [1, " +
                          std::to_string(n) + "]");
    }
}

namespace {

constexpr double kClusterRadius = 2.0;

// Gaussian vector scaled to unit expected norm, rejected outside the
// cluster radius so class supports can be made disjoint.
std::vector<double> truncated_gaussian(std::size_t d, Rng& rng) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> x(d);
    while (true) {
        double norm_sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = rng.normal() * inv_sqrt_d;
            norm_sq += x[i] * x[i];
        }
        if (norm_sq <= kClusterRadius * kClusterRadius) return x;
    }
}

std::vector<double> random_unit_vector(std::size_t d, Rng& rng) {
    std::vector<double> u(d);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            u[i] = rng.normal();
            norm += u[i] * u[i];
        }
        norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (double& v : u) v /= norm;
    return u;
}

// Labels alternate 0/1 so every prefix is balanced within one sample.
void fill_planted(Dataset& out, std::size_t n, std::size_t d, const std::vector<double>& plane,
                  double margin, Rng& rng) {
    out.features = Tensor::zeros({n, d});
    out.labels = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % 2;
        std::vector<double> x(d);
        double along = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            x[j] = rng.normal();
            along += x[j] * plane[j];
        }
        // Replace the component along the plane normal with a signed one of
        // magnitude >= margin, so the plant separates the classes exactly.
        const double target = (label == 1 ? 1.0 : -1.0) * (margin + std::fabs(rng.normal()));
        for (std::size_t j = 0; j < d; ++j) {
            x[j] += (target - along) * plane[j];
            out.features.data[i * d + j] = x[j];
        }
        out.labels.data[i] = static_cast<double>(label);
    }
}

void fill_two_gaussians(Dataset& out, std::size_t n, std::size_t d,
                        const std::vector<double>& axis, double overlap, Rng& rng) {
    out.features = Tensor::zeros({n, d});
    out.labels = Tensor::zeros({n});
    const double half_gap = 2.0 * kClusterRadius * (1.0 - overlap);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % 2;
        const double sign = label == 1 ? 1.0 : -1.0;
        std::vector<double> x = truncated_gaussian(d, rng);
        for (std::size_t j = 0; j < d; ++j) {
            out.features.data[i * d + j] = x[j] + sign * half_gap * axis[j];
        }
        out.labels.data[i] = static_cast<double>(label);
    }
}

void fill_linear(Dataset& out, std::size_t n, std::size_t in_w, std::size_t out_w,
                 const std::vector<double>& planted, double noise, Rng& rng) {
    out.features = Tensor::zeros({n, in_w});
    out.labels = Tensor::zeros({n, out_w});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < in_w; ++j) {
            out.features.data[i * in_w + j] = rng.normal();
        }
        for (std::size_t k = 0; k < out_w; ++k) {
            double y = planted[k * (in_w + 1) + in_w];  // planted bias
            for (std::size_t j = 0; j < in_w; ++j) {
                y += planted[k * (in_w + 1) + j] * out.features.data[i * in_w + j];
            }
            if (noise > 0.0) y += noise * rng.normal();
            out.labels.data[i * out_w + k] = y;
        }
    }
}

}  // namespace

std::pair<Dataset, Dataset> synth_dataset(const TaskSpec& task, const DataSpec& data,
                                          std::uint64_t seed) {
    if (data.train_n < 2) {
        throw ConfigError("train_n must be >= 2");
    }
    if (data.test_n < 1) {
        throw ConfigError("test_n must be >= 1");
    }
    Rng rng(mix64(seed, 7));
    Dataset train, test;
    train.split = "train";
    test.split = "test";

    const bool classification = task.kind == "logistic" || task.kind == "mlp";
    if (task.kind == "quadratic") {
        // The quadratic loss ignores sample values; the placeholder batches
        // only drive the step count.
        train.features = Tensor::zeros({data.train_n, task.input_dim});
        train.labels = Tensor::zeros({data.train_n});
        test.features = Tensor::zeros({data.test_n, task.input_dim});
        test.labels = Tensor::zeros({data.test_n});
        train.provenance = test.provenance = "synthetic:quadratic";
    } else if (task.kind == "linear" || task.kind == "linear-regression") {
        std::vector<double> planted((task.input_dim + 1) * task.output_dim);
        for (double& v : planted) v = rng.uniform(-1.0, 1.0);
        fill_linear(train, data.train_n, task.input_dim, task.output_dim, planted, data.noise,
                    rng);
        fill_linear(test, data.test_n, task.input_dim, task.output_dim, planted, data.noise, rng);
        train.provenance = test.provenance = "synthetic:planted-linear";
    } else if (classification) {
        if (task.output_dim != 2) {
            throw ConfigError("synthetic classification data supports exactly 2 classes, got " +
                              std::to_string(task.output_dim));
        }
        if (data.train_n < task.output_dim) {
            throw ConfigError("train_n too small for requested class count");
        }
        const std::vector<double> axis = random_unit_vector(task.input_dim, rng);
        if (data.source == "planted") {
            if (!(data.margin > 0.0)) {
                throw ConfigError("planted margin must be positive");
            }
            fill_planted(train, data.train_n, task.input_dim, axis, data.margin, rng);
            fill_planted(test, data.test_n, task.input_dim, axis, data.margin, rng);
            train.provenance = test.provenance = "synthetic:planted-hyperplane";
        } else if (data.source == "two-gaussians") {
            if (!(data.overlap >= 0.0 && data.overlap <= 1.0)) {
                throw ConfigError("overlap must be in [0, 1]");
            }
            fill_two_gaussians(train, data.train_n, task.input_dim, axis, data.overlap, rng);
            fill_two_gaussians(test, data.test_n, task.input_dim, axis, data.overlap, rng);
            train.provenance = test.provenance = "synthetic:two-gaussians";
        } else {
            throw ConfigError("unknown data source '" + data.source + "'");
        }
    } else {
        throw ConfigError("no synthetic data generator for task kind '" + task.kind + "'");
    }
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// CSV

Dataset load_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open CSV file: " + path);
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (has_header && line_no == 1) continue;
        std::vector<double> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string cell =
                line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            char* end = nullptr;
            const double value = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0') {
                throw FormatError("CSV " + path + " line " + std::to_string(line_no) +
                                  ": cannot parse '" + cell + "' as a number");
            }
            cells.push_back(value);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cells.size() < 2) {
            throw FormatError("CSV " + path + " line " + std::to_string(line_no) +
                              ": need at least one feature column plus a label");
        }
        if (width == 0) {
            width = cells.size();
        } else if (cells.size() != width) {
            throw FormatError("CSV " + path + " line " + std::to_string(line_no) + ": ragged row (" +
                              std::to_string(cells.size()) + " columns, expected " +
                              std::to_string(width) + ")");
        }
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) {
        throw FormatError("CSV " + path + ": no data rows");
    }
    Dataset out;
    const std::size_t n = rows.size();
    const std::size_t d = width - 1;
    out.features = Tensor::zeros({n, d});
    out.labels = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out.features.data[i * d + j] = rows[i][j];
        }
        out.labels.data[i] = rows[i][d];
    }
    out.split = "train";
    out.provenance = "csv:" + path;
    return out;
}

void write_csv(const Dataset& dataset, const std::string& path) {
    const std::size_t n = dataset.size();
    const bool flat = dataset.labels.shape.size() == 1;
    if (!(flat ? dataset.labels.size() == n
               : dataset.labels.shape.size() == 2 && dataset.labels.shape[0] == n &&
                     dataset.labels.shape[1] == 1)) {
        throw ArgumentError("write_csv needs one label per sample");
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    const std::size_t d = dataset.feature_width();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out << format_float(dataset.features.data[i * d + j]) << ',';
        }
        out << format_float(dataset.labels.data[i]) << '\n';
    }
    if (!out) {
        throw IoError("write failed: " + path);
    }
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::uint32_t read_be_u32(const std::vector<unsigned char>& bytes, std::size_t offset,
                          const std::string& path) {
    if (offset + 4 > bytes.size()) {
        throw FormatError("IDX " + path + ": truncated header at byte offset " +
                          std::to_string(offset));
    }
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[offset + 3]);
}

}  // namespace

Dataset load_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open IDX file: " + path);
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    const std::uint32_t magic = read_be_u32(bytes, 0, path);
    const bool images = magic == 0x00000803u;
    const bool labels = magic == 0x00000801u;
    if (!images && !labels) {
        std::ostringstream os;
        os << "IDX " << path << ": bad magic 0x" << std::hex << magic << " at byte offset 0";
        throw FormatError(os.str());
    }
    const std::size_t ndim = images ? 3 : 1;
    std::vector<std::size_t> dims(ndim);
    for (std::size_t i = 0; i < ndim; ++i) {
        dims[i] = read_be_u32(bytes, 4 + 4 * i, path);
        if (dims[i] == 0) {
            throw FormatError("IDX " + path + ": zero dimension at byte offset " +
                              std::to_string(4 + 4 * i));
        }
    }
    const std::size_t data_offset = 4 + 4 * ndim;
    std::size_t count = 1;
    for (std::size_t d : dims) count *= d;
    if (bytes.size() != data_offset + count) {
        throw FormatError("IDX " + path + ": expected " + std::to_string(data_offset + count) +
                          " bytes, file has " + std::to_string(bytes.size()) +
                          " (data begins at byte offset " + std::to_string(data_offset) + ")");
    }
    Dataset out;
    out.split = "train";
    out.provenance = "idx:" + path;
    if (images) {
        const std::size_t n = dims[0];
        const std::size_t w = dims[1] * dims[2];
        out.features = Tensor::zeros({n, w});
        for (std::size_t i = 0; i < n * w; ++i) {
            out.features.data[i] = static_cast<double>(bytes[data_offset + i]) / 255.0;
        }
    } else {
        const std::size_t n = dims[0];
        out.labels = Tensor::zeros({n});
        for (std::size_t i = 0; i < n; ++i) {
            out.labels.data[i] = static_cast<double>(bytes[data_offset + i]);
        }
    }
    return out;
}

Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path) {
    Dataset images = load_idx(images_path);
    Dataset labels = load_idx(labels_path);
    if (images.features.empty() || labels.labels.empty()) {
        throw FormatError("IDX pair: " + images_path + " must be an image file and " +
                          labels_path + " a label file");
    }
    if (images.size() != labels.labels.size()) {
        throw FormatError("IDX pair: " + std::to_string(images.size()) + " images vs " +
                          std::to_string(labels.labels.size()) + " labels");
    }
    images.labels = std::move(labels.labels);
    images.provenance = "idx:" + images_path + "+" + labels_path;
    return images;
}

// ---------------------------------------------------------------------------
// Batching

std::vector<std::size_t> epoch_indices(std::size_t n, std::uint64_t shuffle_seed,
                                       std::size_t epoch) {
    Rng rng(mix64(shuffle_seed, epoch));
    return permutation(n, rng);
}

BatchStream::BatchStream(const Dataset& dataset, const BatchPlan& plan)
    : dataset_(dataset), plan_(plan) {
    plan_.validate(dataset.size());
    const std::size_t n = dataset.size();
    const std::size_t b = plan_.effective_batch_size(n);
    batches_per_epoch_ = plan_.drop_last ? n / b : (n + b - 1) / b;
    if (batches_per_epoch_ == 0) {
        throw ConfigError("batch plan yields zero batches per epoch");
    }
}

Batch BatchStream::get(std::size_t epoch, std::size_t batch_index) const {
    if (batch_index >= batches_per_epoch_) {
        throw ArgumentError("batch index out of range");
    }
    const std::size_t n = dataset_.size();
    const std::size_t b = plan_.effective_batch_size(n);
    if (epoch != cached_epoch_) {
        cached_perm_ = epoch_indices(n, plan_.shuffle_seed, epoch);
        cached_epoch_ = epoch;
    }
    const std::size_t start = batch_index * b;
    const std::size_t end = std::min(start + b, n);
    const std::size_t count = end - start;
    const std::size_t d = dataset_.feature_width();

    Batch batch;
    batch.inputs = Tensor::zeros({count, d});
    const bool flat = dataset_.labels.shape.size() == 1;
    if (dataset_.labels.empty()) {
        throw ArgumentError("dataset has no labels; cannot form training batches");
    }
    const std::size_t out_w = flat ? 1 : dataset_.labels.shape[1];
    batch.targets = flat ? Tensor::zeros({count}) : Tensor::zeros({count, out_w});
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = cached_perm_[start + i];
        for (std::size_t j = 0; j < d; ++j) {
            batch.inputs.data[i * d + j] = dataset_.features.data[src * d + j];
        }
        if (flat) {
            batch.targets.data[i] = dataset_.labels.data[src];
        } else {
            for (std::size_t k = 0; k < out_w; ++k) {
                batch.targets.data[i * out_w + k] = dataset_.labels.data[src * out_w + k];
            }
        }
    }
    return batch;
}

}  // namespace lambc
