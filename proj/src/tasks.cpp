#include "lambc/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "lambc/rng.hpp"

namespace lambc {

namespace {

void check_batch(const Batch& batch, std::size_t expected_width, const std::string& kind) {
    if (batch.inputs.shape.size() != 2) {
        throw ShapeError(kind + ": batch inputs must be [n_samples, n_features], got " +
                         shape_to_string(batch.inputs.shape));
    }
    if (batch.inputs.shape[1] != expected_width) {
        throw ShapeError(kind + ": batch feature width " + std::to_string(batch.inputs.shape[1]) +
                         " does not match model input width " + std::to_string(expected_width));
    }
}

std::size_t class_target(const Tensor& targets, std::size_t i, std::size_t n_classes) {
    const double raw = targets.data[i];
    const auto cls = static_cast<long long>(raw);
    if (static_cast<double>(cls) != raw || cls < 0 || static_cast<std::size_t>(cls) >= n_classes) {
        throw ArgumentError("target class " + std::to_string(raw) + " out of range for " +
                            std::to_string(n_classes) + " classes");
    }
    return static_cast<std::size_t>(cls);
}

void check_class_targets(const Batch& batch, const std::string& kind) {
    const std::size_t n = batch.size();
    if (batch.targets.size() != n) {
        throw ShapeError(kind + ": expected one class index per sample, got " +
                         shape_to_string(batch.targets.shape));
    }
}

// y = W x + b for one sample row.
void affine_row(const Tensor& weight, const Tensor& bias, const Tensor& inputs, std::size_t row,
                std::size_t in_w, std::vector<double>& out) {
    const std::size_t out_w = weight.shape[0];
    const double* x = inputs.data.data() + row * in_w;
    out.assign(out_w, 0.0);
    for (std::size_t k = 0; k < out_w; ++k) {
        const double* wk = weight.data.data() + k * in_w;
        double acc = bias.empty() ? 0.0 : bias.data[k];
        for (std::size_t j = 0; j < in_w; ++j) {
            acc += wk[j] * x[j];
        }
        out[k] = acc;
    }
}

// Max-subtracted softmax, in place.
void softmax_inplace(std::vector<double>& z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (double& v : z) {
        v /= sum;
    }
}

std::size_t argmax(const std::vector<double>& z) {
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

}  // namespace

// ---------------------------------------------------------------------------
// Quadratic: loss(w) = 0.5 ||A w - target||^2, single layer "w".

QuadraticTask::QuadraticTask(Tensor a_matrix, Tensor target)
    : a_(std::move(a_matrix)), target_(std::move(target)) {
    if (a_.shape.size() != 2 || a_.shape[0] != a_.shape[1]) {
        throw ShapeError("quadratic matrix must be square, got " + shape_to_string(a_.shape));
    }
    dim_ = a_.shape[0];
    if (target_.size() != dim_) {
        throw ShapeError("quadratic target length must match matrix dimension");
    }
    check_finite(a_, "quadratic matrix");
    check_finite(target_, "quadratic target");
}

const std::string& QuadraticTask::kind() const {
    static const std::string k = "quadratic";
    return k;
}

LossValue QuadraticTask::forward(const Model& model, const Batch& batch) const {
    check_batch(batch, dim_, kind());
    const Tensor& w = model.layer("w").weights;
    double loss = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
        double r = -target_.data[i];
        const double* ai = a_.data.data() + i * dim_;
        for (std::size_t j = 0; j < dim_; ++j) {
            r += ai[j] * w.data[j];
        }
        loss += 0.5 * r * r;
    }
    check_finite(loss, "quadratic loss");
    return {loss, std::nullopt};
}

GradMap QuadraticTask::backward(const Model& model, const Batch& batch) const {
    check_batch(batch, dim_, kind());
    const Tensor& w = model.layer("w").weights;
    std::vector<double> residual(dim_, 0.0);
    for (std::size_t i = 0; i < dim_; ++i) {
        double r = -target_.data[i];
        const double* ai = a_.data.data() + i * dim_;
        for (std::size_t j = 0; j < dim_; ++j) {
            r += ai[j] * w.data[j];
        }
        residual[i] = r;
    }
    Tensor grad = Tensor::zeros({dim_});
    for (std::size_t i = 0; i < dim_; ++i) {
        const double* ai = a_.data.data() + i * dim_;
        for (std::size_t j = 0; j < dim_; ++j) {
            grad.data[j] += ai[j] * residual[i];
        }
    }
    check_finite(grad, "quadratic gradient");
    GradMap grads;
    grads.emplace("w", std::move(grad));
    return grads;
}

double QuadraticTask::max_hessian_eigenvalue() const {
    // Power iteration on A^T A; deterministic start vector.
    std::vector<double> x(dim_, 1.0 / std::sqrt(static_cast<double>(dim_)));
    std::vector<double> ax(dim_), hx(dim_);
    double lambda = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
        for (std::size_t i = 0; i < dim_; ++i) {
            double acc = 0.0;
            const double* ai = a_.data.data() + i * dim_;
            for (std::size_t j = 0; j < dim_; ++j) acc += ai[j] * x[j];
            ax[i] = acc;
        }
        for (std::size_t j = 0; j < dim_; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < dim_; ++i) acc += a_.data[i * dim_ + j] * ax[i];
            hx[j] = acc;
        }
        double norm = 0.0;
        for (double v : hx) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        lambda = norm;
        for (std::size_t j = 0; j < dim_; ++j) x[j] = hx[j] / norm;
    }
    return lambda;
}

// ---------------------------------------------------------------------------
// Linear regression: loss = mean_i 0.5 ||W x_i + b - y_i||^2.

class LinearTask : public Task {
public:
    LinearTask(std::size_t in_w, std::size_t out_w) : in_w_(in_w), out_w_(out_w) {}

    const std::string& kind() const override {
        static const std::string k = "linear";
        return k;
    }
    std::size_t input_width() const override { return in_w_; }
    bool classification() const override { return false; }

    LossValue forward(const Model& model, const Batch& batch) const override {
        check_batch(batch, in_w_, kind());
        const std::size_t n = batch.size();
        const Tensor& weight = model.layer("linear.weight").weights;
        const Tensor& bias = model.layer("linear.bias").weights;
        const bool flat_targets = batch.targets.shape.size() == 1;
        if (flat_targets ? (out_w_ != 1 || batch.targets.size() != n)
                         : (batch.targets.shape[0] != n || batch.targets.shape[1] != out_w_)) {
            throw ShapeError("linear: target shape " + shape_to_string(batch.targets.shape) +
                             " does not match [" + std::to_string(n) + ", " +
                             std::to_string(out_w_) + "]");
        }
        double loss = 0.0;
        std::vector<double> yhat;
        for (std::size_t i = 0; i < n; ++i) {
            affine_row(weight, bias, batch.inputs, i, in_w_, yhat);
            for (std::size_t k = 0; k < out_w_; ++k) {
                const double e = yhat[k] - batch.targets.data[i * out_w_ + k];
                loss += 0.5 * e * e;
            }
        }
        loss /= static_cast<double>(n);
        check_finite(loss, "linear loss");
        return {loss, std::nullopt};
    }

    GradMap backward(const Model& model, const Batch& batch) const override {
        forward_shape_check(model, batch);
        const std::size_t n = batch.size();
        const Tensor& weight = model.layer("linear.weight").weights;
        const Tensor& bias = model.layer("linear.bias").weights;
        Tensor dw = Tensor::zeros_like(weight);
        Tensor db = Tensor::zeros_like(bias);
        std::vector<double> yhat;
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            affine_row(weight, bias, batch.inputs, i, in_w_, yhat);
            const double* x = batch.inputs.data.data() + i * in_w_;
            for (std::size_t k = 0; k < out_w_; ++k) {
                const double e = (yhat[k] - batch.targets.data[i * out_w_ + k]) * inv_n;
                db.data[k] += e;
                double* dwk = dw.data.data() + k * in_w_;
                for (std::size_t j = 0; j < in_w_; ++j) {
                    dwk[j] += e * x[j];
                }
            }
        }
        check_finite(dw, "linear weight gradient");
        check_finite(db, "linear bias gradient");
        GradMap grads;
        grads.emplace("linear.weight", std::move(dw));
        grads.emplace("linear.bias", std::move(db));
        return grads;
    }

private:
    void forward_shape_check(const Model& model, const Batch& batch) const {
        // Reuse forward's validation without paying for the loss.
        check_batch(batch, in_w_, kind());
        const std::size_t n = batch.size();
        const bool flat_targets = batch.targets.shape.size() == 1;
        if (flat_targets ? (out_w_ != 1 || batch.targets.size() != n)
                         : (batch.targets.shape[0] != n || batch.targets.shape[1] != out_w_)) {
            throw ShapeError("linear: target shape " + shape_to_string(batch.targets.shape) +
                             " does not match batch");
        }
        (void)model.layer("linear.weight");
        (void)model.layer("linear.bias");
    }

    std::size_t in_w_;
    std::size_t out_w_;
};

// ---------------------------------------------------------------------------
// Logistic: linear logits + max-subtracted softmax cross-entropy.

class LogisticTask : public Task {
public:
    LogisticTask(std::size_t in_w, std::size_t classes) : in_w_(in_w), classes_(classes) {}

    const std::string& kind() const override {
        static const std::string k = "logistic";
        return k;
    }
    std::size_t input_width() const override { return in_w_; }
    bool classification() const override { return true; }

    LossValue forward(const Model& model, const Batch& batch) const override {
        check_batch(batch, in_w_, kind());
        check_class_targets(batch, kind());
        const std::size_t n = batch.size();
        const Tensor& weight = model.layer("linear.weight").weights;
        const Tensor& bias = model.layer("linear.bias").weights;
        double loss = 0.0;
        std::size_t correct = 0;
        std::vector<double> z;
        for (std::size_t i = 0; i < n; ++i) {
            affine_row(weight, bias, batch.inputs, i, in_w_, z);
            const std::size_t y = class_target(batch.targets, i, classes_);
            if (argmax(z) == y) ++correct;
            softmax_inplace(z);
            loss -= std::log(z[y]);
        }
        loss /= static_cast<double>(n);
        check_finite(loss, "logistic loss");
        return {loss, static_cast<double>(correct) / static_cast<double>(n)};
    }

    GradMap backward(const Model& model, const Batch& batch) const override {
        check_batch(batch, in_w_, kind());
        check_class_targets(batch, kind());
        const std::size_t n = batch.size();
        const Tensor& weight = model.layer("linear.weight").weights;
        const Tensor& bias = model.layer("linear.bias").weights;
        Tensor dw = Tensor::zeros_like(weight);
        Tensor db = Tensor::zeros_like(bias);
        std::vector<double> z;
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            affine_row(weight, bias, batch.inputs, i, in_w_, z);
            const std::size_t y = class_target(batch.targets, i, classes_);
            softmax_inplace(z);
            const double* x = batch.inputs.data.data() + i * in_w_;
            for (std::size_t k = 0; k < classes_; ++k) {
                const double dz = (z[k] - (k == y ? 1.0 : 0.0)) * inv_n;
                db.data[k] += dz;
                double* dwk = dw.data.data() + k * in_w_;
                for (std::size_t j = 0; j < in_w_; ++j) {
                    dwk[j] += dz * x[j];
                }
            }
        }
        check_finite(dw, "logistic weight gradient");
        check_finite(db, "logistic bias gradient");
        GradMap grads;
        grads.emplace("linear.weight", std::move(dw));
        grads.emplace("linear.bias", std::move(db));
        return grads;
    }

private:
    std::size_t in_w_;
    std::size_t classes_;
};

// ---------------------------------------------------------------------------
// MLP: fully connected layers with relu/tanh, softmax cross-entropy output.

enum class Activation { relu, tanh };

class MlpTask : public Task {
public:
    MlpTask(std::vector<std::size_t> sizes, Activation act)
        : sizes_(std::move(sizes)), act_(act) {
        if (sizes_.size() < 2) {
            throw ArgumentError("mlp needs at least input and output widths");
        }
    }

    const std::string& kind() const override {
        static const std::string k = "mlp";
        return k;
    }
    std::size_t input_width() const override { return sizes_.front(); }
    bool classification() const override { return true; }

    std::size_t depth() const { return sizes_.size() - 1; }

    LossValue forward(const Model& model, const Batch& batch) const override {
        check_batch(batch, sizes_.front(), kind());
        check_class_targets(batch, kind());
        const std::size_t n = batch.size();
        const std::size_t classes = sizes_.back();
        double loss = 0.0;
        std::size_t correct = 0;
        std::vector<double> a, z;
        for (std::size_t i = 0; i < n; ++i) {
            a = batch.inputs.row(i);
            for (std::size_t l = 1; l <= depth(); ++l) {
                const auto& weight = model.layer(layer_name(l, true)).weights;
                const auto& bias = model.layer(layer_name(l, false)).weights;
                Tensor a_t({1, a.size()}, a);
                affine_row(weight, bias, a_t, 0, a.size(), z);
                if (l < depth()) activate(z);
                a = z;
            }
            const std::size_t y = class_target(batch.targets, i, classes);
            if (argmax(a) == y) ++correct;
            softmax_inplace(a);
            loss -= std::log(a[y]);
        }
        loss /= static_cast<double>(n);
        check_finite(loss, "mlp loss");
        return {loss, static_cast<double>(correct) / static_cast<double>(n)};
    }

    GradMap backward(const Model& model, const Batch& batch) const override {
        check_batch(batch, sizes_.front(), kind());
        check_class_targets(batch, kind());
        const std::size_t n = batch.size();
        const std::size_t classes = sizes_.back();
        const std::size_t L = depth();

        GradMap grads;
        for (std::size_t l = 1; l <= L; ++l) {
            grads.emplace(layer_name(l, true),
                          Tensor::zeros_like(model.layer(layer_name(l, true)).weights));
            grads.emplace(layer_name(l, false),
                          Tensor::zeros_like(model.layer(layer_name(l, false)).weights));
        }

        const double inv_n = 1.0 / static_cast<double>(n);
        std::vector<std::vector<double>> acts(L + 1);   // post-activation per layer
        std::vector<std::vector<double>> preact(L + 1); // pre-activation per layer
        for (std::size_t i = 0; i < n; ++i) {
            acts[0] = batch.inputs.row(i);
            for (std::size_t l = 1; l <= L; ++l) {
                const auto& weight = model.layer(layer_name(l, true)).weights;
                const auto& bias = model.layer(layer_name(l, false)).weights;
                Tensor a_t({1, acts[l - 1].size()}, acts[l - 1]);
                affine_row(weight, bias, a_t, 0, acts[l - 1].size(), preact[l]);
                acts[l] = preact[l];
                if (l < L) activate(acts[l]);
            }
            const std::size_t y = class_target(batch.targets, i, classes);
            std::vector<double> delta = acts[L];
            softmax_inplace(delta);
            delta[y] -= 1.0;
            for (double& d : delta) d *= inv_n;

            for (std::size_t l = L; l >= 1; --l) {
                Tensor& dw = grads.at(layer_name(l, true));
                Tensor& db = grads.at(layer_name(l, false));
                const std::vector<double>& below = acts[l - 1];
                const std::size_t out_w = dw.shape[0];
                const std::size_t in_w = dw.shape[1];
                for (std::size_t k = 0; k < out_w; ++k) {
                    db.data[k] += delta[k];
                    double* dwk = dw.data.data() + k * in_w;
                    for (std::size_t j = 0; j < in_w; ++j) {
                        dwk[j] += delta[k] * below[j];
                    }
                }
                if (l == 1) break;
                const auto& weight = model.layer(layer_name(l, true)).weights;
                std::vector<double> next(in_w, 0.0);
                for (std::size_t j = 0; j < in_w; ++j) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < out_w; ++k) {
                        acc += weight.data[k * in_w + j] * delta[k];
                    }
                    next[j] = acc * activation_grad(preact[l - 1][j]);
                }
                delta = std::move(next);
            }
        }
        for (auto& [name, g] : grads) {
            check_finite(g, "mlp gradient of " + name);
        }
        return grads;
    }

    static std::string layer_name(std::size_t l, bool weight) {
        return "fc" + std::to_string(l) + (weight ? ".weight" : ".bias");
    }

private:
    void activate(std::vector<double>& z) const {
        if (act_ == Activation::relu) {
            for (double& v : z) v = v > 0.0 ? v : 0.0;
        } else {
            for (double& v : z) v = std::tanh(v);
        }
    }

    double activation_grad(double pre) const {
        if (act_ == Activation::relu) {
            return pre > 0.0 ? 1.0 : 0.0;
        }
        const double t = std::tanh(pre);
        return 1.0 - t * t;
    }

    std::vector<std::size_t> sizes_;
    Activation act_;
};

// ---------------------------------------------------------------------------
// Builders.

namespace {

Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out,
                    Rng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& x : t.data) {
        x = rng.uniform(-s, s);
    }
    return t;
}

// Random orthogonal matrix via modified Gram-Schmidt on a Gaussian matrix.
Tensor random_orthogonal(std::size_t dim, Rng& rng) {
    std::vector<std::vector<double>> cols(dim, std::vector<double>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
        for (std::size_t i = 0; i < dim; ++i) {
            cols[j][i] = rng.normal();
        }
    }
    for (std::size_t j = 0; j < dim; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim; ++i) dot += cols[j][i] * cols[k][i];
            for (std::size_t i = 0; i < dim; ++i) cols[j][i] -= dot * cols[k][i];
        }
        double norm = 0.0;
        for (double v : cols[j]) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
            throw NumericalError("degenerate column while orthogonalizing");
        }
        for (double& v : cols[j]) v /= norm;
    }
    Tensor q = Tensor::zeros({dim, dim});
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            q.data[i * dim + j] = cols[j][i];
        }
    }
    return q;
}

// Symmetric PSD square root A = Q diag(sqrt(lambda)) Q^T, with Hessian
// A^T A = Q diag(lambda) Q^T. Eigenvalues log-spaced in [1/condition, 1]
// so the largest Hessian eigenvalue is exactly 1.
Tensor quadratic_matrix(std::size_t dim, double condition, Rng& rng) {
    if (condition < 1.0) {
        throw ConfigError("quadratic condition number must be >= 1");
    }
    Tensor q = random_orthogonal(dim, rng);
    std::vector<double> sqrt_eig(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        const double t = dim == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(dim - 1);
        sqrt_eig[i] = std::sqrt(std::pow(condition, -t));
    }
    Tensor a = Tensor::zeros({dim, dim});
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                acc += q.data[i * dim + k] * sqrt_eig[k] * q.data[j * dim + k];
            }
            a.data[i * dim + j] = acc;
        }
    }
    return a;
}

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw ConfigError("unsupported mlp activation '" + name + "' (relu or tanh)");
}

}  // namespace

TaskBundle make_task(const TaskSpec& spec, std::uint64_t seed) {
    if (spec.input_dim == 0 || spec.output_dim == 0) {
        throw ConfigError("task dimensions must be positive");
    }
    Rng rng(seed);
    TaskBundle bundle;
    if (spec.kind == "quadratic") {
        const std::size_t d = spec.input_dim;
        Tensor a = quadratic_matrix(d, spec.condition, rng);
        // Target zero places the minimizer at the origin, where layerwise
        // normalized steps (length eta * ||w||) can actually converge.
        bundle.task = std::make_shared<QuadraticTask>(std::move(a), Tensor::zeros({d}));
        Model model;
        model.architecture = "quadratic";
        model.layers.push_back(LayerParams::make("w", uniform_init({d}, d, d, rng)));
        bundle.model = std::move(model);
    } else if (spec.kind == "linear" || spec.kind == "linear-regression") {
        bundle.task = std::make_shared<LinearTask>(spec.input_dim, spec.output_dim);
        Model model;
        model.architecture = "linear";
        model.layers.push_back(LayerParams::make(
            "linear.weight",
            uniform_init({spec.output_dim, spec.input_dim}, spec.input_dim, spec.output_dim, rng)));
        model.layers.push_back(
            LayerParams::make("linear.bias", Tensor::zeros({spec.output_dim})));
        bundle.model = std::move(model);
    } else if (spec.kind == "logistic") {
        if (spec.output_dim < 2) {
            throw ConfigError("logistic task needs at least 2 classes");
        }
        bundle.task = std::make_shared<LogisticTask>(spec.input_dim, spec.output_dim);
        Model model;
        model.architecture = "logistic";
        model.layers.push_back(LayerParams::make(
            "linear.weight",
            uniform_init({spec.output_dim, spec.input_dim}, spec.input_dim, spec.output_dim, rng)));
        model.layers.push_back(
            LayerParams::make("linear.bias", Tensor::zeros({spec.output_dim})));
        bundle.model = std::move(model);
    } else if (spec.kind == "mlp") {
        if (spec.output_dim < 2) {
            throw ConfigError("mlp task needs at least 2 classes");
        }
        const Activation act = parse_activation(spec.activation);
        std::vector<std::size_t> sizes;
        sizes.push_back(spec.input_dim);
        for (std::size_t h : spec.hidden) {
            if (h == 0) throw ConfigError("mlp hidden widths must be positive");
            sizes.push_back(h);
        }
        sizes.push_back(spec.output_dim);
        auto task = std::make_shared<MlpTask>(sizes, act);
        Model model;
        model.architecture = "mlp";
        for (std::size_t l = 1; l < sizes.size(); ++l) {
            const std::size_t in_w = sizes[l - 1];
            const std::size_t out_w = sizes[l];
            model.layers.push_back(LayerParams::make(MlpTask::layer_name(l, true),
                                                     uniform_init({out_w, in_w}, in_w, out_w, rng)));
            model.layers.push_back(
                LayerParams::make(MlpTask::layer_name(l, false), Tensor::zeros({out_w})));
        }
        bundle.task = std::move(task);
        bundle.model = std::move(model);
    } else {
        throw ConfigError("unsupported task kind '" + spec.kind + "'");
    }
    bundle.model.validate();
    return bundle;
}

GradMap finite_diff_grad(const Task& task, const Model& model, const Batch& batch, double h) {
    if (!(h > 0.0)) {
        throw ArgumentError("finite difference step must be positive");
    }
    Model probe = snapshot(model);
    GradMap grads;
    for (auto& layer : probe.layers) {
        Tensor g = Tensor::zeros_like(layer.weights);
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
            const double saved = layer.weights.data[i];
            layer.weights.data[i] = saved + h;
            const double up = task.forward(probe, batch).loss;
            layer.weights.data[i] = saved - h;
            const double down = task.forward(probe, batch).loss;
            layer.weights.data[i] = saved;
            g.data[i] = (up - down) / (2.0 * h);
        }
        grads.emplace(layer.name, std::move(g));
    }
    return grads;
}

}  // namespace lambc
