#include "lambc/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lambc {

Algorithm parse_algorithm(const std::string& name) {
    if (name == "sgd") return Algorithm::sgd;
    if (name == "sgd-momentum") return Algorithm::sgd_momentum;
    if (name == "adam") return Algorithm::adam;
    if (name == "lars") return Algorithm::lars;
    if (name == "lamb") return Algorithm::lamb;
    if (name == "lambc") return Algorithm::lambc;
    throw ConfigError("unknown algorithm '" + name + "'");
}

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::sgd: return "sgd";
        case Algorithm::sgd_momentum: return "sgd-momentum";
        case Algorithm::adam: return "adam";
        case Algorithm::lars: return "lars";
        case Algorithm::lamb: return "lamb";
        case Algorithm::lambc: return "lambc";
    }
    return "?";
}

BiasCorrectionMode parse_bias_correction(const std::string& name) {
    if (name == "paper-constant") return BiasCorrectionMode::paper_constant;
    if (name == "power-t") return BiasCorrectionMode::power_t;
    throw ConfigError("unknown bias correction mode '" + name + "'");
}

std::string to_string(BiasCorrectionMode m) {
    return m == BiasCorrectionMode::paper_constant ? "paper-constant" : "power-t";
}

TrustRatioDenominator parse_trust_denominator(const std::string& name) {
    if (name == "ratio-only") return TrustRatioDenominator::ratio_only;
    if (name == "ratio-plus-decay") return TrustRatioDenominator::ratio_plus_decay;
    throw ConfigError("unknown trust ratio denominator '" + name + "'");
}

std::string to_string(TrustRatioDenominator d) {
    return d == TrustRatioDenominator::ratio_only ? "ratio-only" : "ratio-plus-decay";
}

BoundPolicy parse_bound_policy(const std::string& name) {
    if (name == "constant") return BoundPolicy::constant;
    if (name == "envelope") return BoundPolicy::envelope;
    throw ConfigError("unknown bound policy '" + name + "'");
}

std::string to_string(BoundPolicy p) {
    return p == BoundPolicy::constant ? "constant" : "envelope";
}

bool OptimizerConfig::layer_decays(const std::string& layer_name) const {
    for (const auto& n : exclude_from_decay) {
        if (n == layer_name) return false;
    }
    return true;
}

double OptimizerConfig::lr_at(std::uint64_t t) const {
    if (warmup_steps == 0 || t >= warmup_steps) return lr;
    return lr * static_cast<double>(t) / static_cast<double>(warmup_steps);
}

void OptimizerConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw ConfigError("lr must be a positive finite scalar");
    }
    const bool adam_family = algorithm == Algorithm::adam || algorithm == Algorithm::lamb ||
                             algorithm == Algorithm::lambc;
    if (adam_family) {
        // The Adam-family recurrences require 0 < beta < 1.
        if (!(beta1 > 0.0 && beta1 < 1.0)) {
            throw ConfigError("beta1 must satisfy 0 < beta1 < 1");
        }
        if (!(beta2 > 0.0 && beta2 < 1.0)) {
            throw ConfigError("beta2 must satisfy 0 < beta2 < 1");
        }
    } else {
        // Momentum factors may be 0 (plain SGD reduction) but not 1.
        if (!(beta1 >= 0.0 && beta1 < 1.0)) {
            throw ConfigError("beta1 must satisfy 0 <= beta1 < 1");
        }
        if (!(momentum >= 0.0 && momentum < 1.0)) {
            throw ConfigError("momentum must satisfy 0 <= momentum < 1");
        }
    }
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw ConfigError("epsilon must be a non-negative finite scalar");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw ConfigError("weight_decay must be non-negative");
    }
    if (!(clip_lower >= 0.0)) {
        throw ConfigError("clip_lower must be non-negative");
    }
    if (!(clip_upper > 0.0)) {
        throw ConfigError("clip_upper must be positive (or +inf)");
    }
    if (clip_lower > clip_upper) {
        throw ConfigError("clip_lower must not exceed clip_upper");
    }
    if (algorithm == Algorithm::lambc && !clip_enabled) {
        throw ConfigError("lambc requires clip_enabled = true");
    }
    if (algorithm == Algorithm::lamb && clip_enabled) {
        throw ConfigError("lamb requires clip_enabled = false (use lambc to clip)");
    }
    if (bound_policy == BoundPolicy::envelope && !(bound_rate > 0.0)) {
        throw ConfigError("envelope bound_rate must be positive");
    }
}

void adam_moment_update(LayerParams& layer, const Tensor& grad, double beta1, double beta2) {
    if (!layer.weights.same_shape(grad)) {
        throw ShapeError("layer '" + layer.name + "': gradient shape " +
                         shape_to_string(grad.shape) + " does not match weights " +
                         shape_to_string(layer.weights.shape));
    }
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double g = grad.data[i];
        layer.m.data[i] = beta1 * layer.m.data[i] + (1.0 - beta1) * g;
        layer.v.data[i] = beta2 * layer.v.data[i] + (1.0 - beta2) * g * g;
    }
    check_finite(layer.m, "first moment of layer '" + layer.name + "'");
    check_finite(layer.v, "second moment of layer '" + layer.name + "'");
}

std::pair<Tensor, Tensor> bias_correct(const Tensor& m, const Tensor& v, double beta1,
                                       double beta2, std::uint64_t t, BiasCorrectionMode mode) {
    if (t < 1) {
        throw ArgumentError("bias correction requires step t >= 1");
    }
    double denom1 = 1.0 - beta1;
    double denom2 = 1.0 - beta2;
    if (mode == BiasCorrectionMode::power_t) {
        denom1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        denom2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    }
    Tensor m_hat = scale(m, 1.0 / denom1);
    Tensor v_hat = scale(v, 1.0 / denom2);
    return {std::move(m_hat), std::move(v_hat)};
}

Tensor adam_ratio(const Tensor& m_hat, const Tensor& v_hat, double epsilon) {
    if (!m_hat.same_shape(v_hat)) {
        throw ShapeError("adam_ratio: m and v must share a shape");
    }
    Tensor r;
    r.shape = m_hat.shape;
    r.data.resize(m_hat.size());
    for (std::size_t i = 0; i < m_hat.size(); ++i) {
        const double vh = v_hat.data[i];
        if (vh < 0.0) {
            throw NumericalError("adam_ratio: negative second moment");
        }
        const double mh = m_hat.data[i];
        r.data[i] = mh == 0.0 ? 0.0 : mh / (std::sqrt(vh) + epsilon);
    }
    check_finite(r, "adam ratio");
    return r;
}

double trust_ratio_from_norms(double weight_norm, double denom_norm) {
    if (weight_norm == 0.0 || denom_norm == 0.0) {
        return 1.0;  // zero-norm policy: degrade to a plain adaptive step
    }
    return weight_norm / denom_norm;  // phi = identity
}

double trust_ratio(const LayerParams& layer, const Tensor& update, const OptimizerConfig& cfg) {
    const double lambda =
        cfg.layer_decays(layer.name) ? cfg.weight_decay : 0.0;
    const double weight_norm = l2_norm(layer.weights);
    double denom_norm;
    if (cfg.trust_ratio_denominator == TrustRatioDenominator::ratio_plus_decay && lambda != 0.0) {
        denom_norm = l2_norm(scale_and_add(update, layer.weights, lambda));
    } else {
        denom_norm = l2_norm(update);
    }
    return trust_ratio_from_norms(weight_norm, denom_norm);
}

double clip_trust_ratio(double gamma, double clip_lower, double clip_upper) {
    if (!(clip_lower >= 0.0)) {
        throw ConfigError("clip_lower must be non-negative");
    }
    if (clip_lower > clip_upper) {
        throw ConfigError("clip_lower must not exceed clip_upper");
    }
    return std::min(std::max(gamma, clip_lower), clip_upper);
}

std::pair<double, double> bound_schedule(std::uint64_t t, const OptimizerConfig& cfg) {
    if (cfg.bound_policy == BoundPolicy::constant) {
        return {cfg.clip_lower, cfg.clip_upper};
    }
    if (!(cfg.bound_rate > 0.0)) {
        throw ConfigError("envelope bound_rate must be positive");
    }
    if (t < 1) {
        throw ArgumentError("bound schedule requires step t >= 1");
    }
    const double rho = cfg.bound_rate;
    const double td = static_cast<double>(t);
    const double lower = cfg.clip_lower * (1.0 - 1.0 / (rho * td + 1.0));
    const double upper = cfg.clip_upper * (1.0 + 1.0 / (rho * td));
    return {lower, upper};
}

namespace {

const Tensor& grad_for(const Model& model, const GradMap& grads, const LayerParams& layer) {
    auto it = grads.find(layer.name);
    if (it == grads.end()) {
        throw ArgumentError("missing gradient for layer '" + layer.name + "'");
    }
    (void)model;
    return it->second;
}

void apply_update(LayerParams& layer, const Tensor& direction, double step_scale,
                  std::uint64_t t) {
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
        layer.weights.data[i] -= step_scale * direction.data[i];
    }
    for (double x : layer.weights.data) {
        if (!std::isfinite(x)) {
            throw DivergenceError(layer.name, t,
                                  "non-finite weights in layer '" + layer.name + "' after step " +
                                      std::to_string(t));
        }
    }
}

}  // namespace

StepOutcome sgd_step(Model& model, const GradMap& grads, const OptimizerConfig& cfg,
                     std::uint64_t t) {
    const double eta = cfg.lr_at(t);
    StepOutcome outcome;
    outcome.step = t;
    for (auto& layer : model.layers) {
        const Tensor& g = grad_for(model, grads, layer);
        if (!layer.weights.same_shape(g)) {
            throw ShapeError("layer '" + layer.name + "': gradient shape mismatch");
        }
        if (cfg.algorithm == Algorithm::sgd_momentum) {
            // Heavy-ball velocity: m <- momentum * m + g.
            for (std::size_t i = 0; i < g.size(); ++i) {
                layer.m.data[i] = cfg.momentum * layer.m.data[i] + g.data[i];
            }
            check_finite(layer.m, "velocity of layer '" + layer.name + "'");
            apply_update(layer, layer.m, eta, t);
        } else {
            apply_update(layer, g, eta, t);
        }
        layer.step_count += 1;
    }
    return outcome;
}

StepOutcome lamb_step(Model& model, const GradMap& grads, const OptimizerConfig& cfg,
                      std::uint64_t t) {
    const double eta = cfg.lr_at(t);
    const bool adam_only = cfg.algorithm == Algorithm::adam || cfg.force_gamma_one;
    const auto [band_lower, band_upper] =
        cfg.clip_enabled ? bound_schedule(t, cfg) : std::pair<double, double>{0.0, 0.0};

    StepOutcome outcome;
    outcome.step = t;
    for (auto& layer : model.layers) {
        const Tensor& g = grad_for(model, grads, layer);
        adam_moment_update(layer, g, cfg.beta1, cfg.beta2);
        layer.step_count += 1;

        auto [m_hat, v_hat] = bias_correct(layer.m, layer.v, cfg.beta1, cfg.beta2, t,
                                           cfg.bias_correction);
        Tensor r = adam_ratio(m_hat, v_hat, cfg.epsilon);

        const double lambda = cfg.layer_decays(layer.name) ? cfg.weight_decay : 0.0;
        const double ratio_norm = adam_only ? 0.0 : l2_norm(r);
        Tensor update = lambda != 0.0 ? scale_and_add(r, layer.weights, lambda) : std::move(r);

        double gamma = 1.0;
        if (!adam_only) {
            const double weight_norm = l2_norm(layer.weights);
            const double denom_norm =
                cfg.trust_ratio_denominator == TrustRatioDenominator::ratio_plus_decay
                    ? l2_norm(update)
                    : ratio_norm;
            const double raw_gamma = trust_ratio_from_norms(weight_norm, denom_norm);
            gamma = cfg.clip_enabled ? clip_trust_ratio(raw_gamma, band_lower, band_upper)
                                     : raw_gamma;
            outcome.records.push_back({layer.name, t, weight_norm, denom_norm, raw_gamma, gamma,
                                       gamma != raw_gamma});
        }
        apply_update(layer, update, eta * gamma, t);
    }
    return outcome;
}

StepOutcome lars_step(Model& model, const GradMap& grads, const OptimizerConfig& cfg,
                      std::uint64_t t) {
    const double eta = cfg.lr_at(t);
    const auto [band_lower, band_upper] =
        cfg.clip_enabled ? bound_schedule(t, cfg) : std::pair<double, double>{0.0, 0.0};

    StepOutcome outcome;
    outcome.step = t;
    for (auto& layer : model.layers) {
        const Tensor& g = grad_for(model, grads, layer);
        if (!layer.weights.same_shape(g)) {
            throw ShapeError("layer '" + layer.name + "': gradient shape mismatch");
        }
        // First moment only; no second moment and no bias correction.
        for (std::size_t i = 0; i < g.size(); ++i) {
            layer.m.data[i] = cfg.beta1 * layer.m.data[i] + (1.0 - cfg.beta1) * g.data[i];
        }
        check_finite(layer.m, "first moment of layer '" + layer.name + "'");
        layer.step_count += 1;

        const double lambda = cfg.layer_decays(layer.name) ? cfg.weight_decay : 0.0;
        Tensor update =
            lambda != 0.0 ? scale_and_add(layer.m, layer.weights, lambda) : layer.m;

        const double weight_norm = l2_norm(layer.weights);
        const double denom_norm =
            cfg.trust_ratio_denominator == TrustRatioDenominator::ratio_plus_decay
                ? l2_norm(update)
                : l2_norm(layer.m);
        const double raw_gamma = trust_ratio_from_norms(weight_norm, denom_norm);
        const double gamma = cfg.clip_enabled
                                 ? clip_trust_ratio(raw_gamma, band_lower, band_upper)
                                 : raw_gamma;
        outcome.records.push_back(
            {layer.name, t, weight_norm, denom_norm, raw_gamma, gamma, gamma != raw_gamma});
        apply_update(layer, update, eta * gamma, t);
    }
    return outcome;
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
}

StepOutcome Optimizer::step(Model& model, const GradMap& grads) {
    const std::uint64_t t = ++t_;
    switch (cfg_.algorithm) {
        case Algorithm::sgd:
        case Algorithm::sgd_momentum:
            return sgd_step(model, grads, cfg_, t);
        case Algorithm::adam:
        case Algorithm::lamb:
        case Algorithm::lambc:
            return lamb_step(model, grads, cfg_, t);
        case Algorithm::lars:
            return lars_step(model, grads, cfg_, t);
    }
    throw ConfigError("unknown algorithm");
}

}  // namespace lambc
