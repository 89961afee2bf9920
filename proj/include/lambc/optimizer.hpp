#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lambc/model.hpp"
#include "lambc/tensor.hpp"

namespace lambc {

enum class Algorithm { sgd, sgd_momentum, adam, lars, lamb, lambc };
enum class BiasCorrectionMode { paper_constant, power_t };
enum class TrustRatioDenominator { ratio_only, ratio_plus_decay };
enum class BoundPolicy { constant, envelope };

Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm a);
BiasCorrectionMode parse_bias_correction(const std::string& name);
std::string to_string(BiasCorrectionMode m);
TrustRatioDenominator parse_trust_denominator(const std::string& name);
std::string to_string(TrustRatioDenominator d);
BoundPolicy parse_bound_policy(const std::string& name);
std::string to_string(BoundPolicy p);

struct OptimizerConfig {
    Algorithm algorithm = Algorithm::lamb;

    double lr = 1e-2;
    std::uint64_t warmup_steps = 0;  // linear warm-up from 0 to lr; 0 disables

    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-6;
    double weight_decay = 0.0;
    double momentum = 0.9;  // sgd-momentum velocity factor

    bool clip_enabled = false;  // implied true for lambc, false for lamb
    double clip_lower = 0.0;
    double clip_upper = 1.0;  // may be +infinity

    BiasCorrectionMode bias_correction = BiasCorrectionMode::paper_constant;
    TrustRatioDenominator trust_ratio_denominator = TrustRatioDenominator::ratio_only;

    // Bound schedule for the clip band. `constant` keeps (clip_lower,
    // clip_upper) forever; `envelope` starts wide and converges toward them
    // with rate bound_rate (experimental).
    BoundPolicy bound_policy = BoundPolicy::constant;
    double bound_rate = 1.0;

    std::vector<std::string> exclude_from_decay;  // layer names with decay off

    // Debug: force the trust ratio to 1 (turns lamb into adam; no trust
    // telemetry is emitted in this mode).
    bool force_gamma_one = false;

    bool uses_trust_ratio() const {
        return algorithm == Algorithm::lars || algorithm == Algorithm::lamb ||
               algorithm == Algorithm::lambc;
    }
    bool layer_decays(const std::string& layer_name) const;

    // Learning rate at 1-based step t under the warm-up schedule.
    double lr_at(std::uint64_t t) const;

    // Throws ConfigError on any invariant violation (beta ranges, band
    // ordering, algorithm/clip consistency).
    void validate() const;

    bool operator==(const OptimizerConfig&) const = default;
};

// Per-step, per-layer telemetry row. update_norm is the trust-ratio
// denominator norm (||r|| for lamb, ||m|| for lars; the decay term is
// included when the denominator mode asks for it), so raw_gamma is always
// reproducible from the stored norms.
struct TrustRatioRecord {
    std::string layer;
    std::uint64_t step = 0;
    double weight_norm = 0.0;
    double update_norm = 0.0;
    double raw_gamma = 0.0;
    double clipped_gamma = 0.0;
    bool clipped = false;

    bool operator==(const TrustRatioRecord&) const = default;
};

struct StepOutcome {
    std::uint64_t step = 0;
    double loss_before = 0.0;  // filled by the caller that ran forward()
    std::vector<TrustRatioRecord> records;
};

// --- Algorithm pieces (Adam/LAMB building blocks) --------------------------

// m <- beta1 m + (1-beta1) g; v <- beta2 v + (1-beta2) g^2, in place.
void adam_moment_update(LayerParams& layer, const Tensor& grad, double beta1, double beta2);

// paper_constant divides by (1-beta); power_t divides by (1-beta^t).
std::pair<Tensor, Tensor> bias_correct(const Tensor& m, const Tensor& v, double beta1,
                                       double beta2, std::uint64_t t, BiasCorrectionMode mode);

// Elementwise m_hat / (sqrt(v_hat) + epsilon); exact 0 where m_hat is 0,
// so epsilon = 0 stays well defined at fresh state.
Tensor adam_ratio(const Tensor& m_hat, const Tensor& v_hat, double epsilon);

// gamma = ||w|| / denom with the zero-norm policy: 1 when either side is 0.
double trust_ratio_from_norms(double weight_norm, double denom_norm);

// Raw trust ratio of one layer for a candidate update vector, honoring the
// configured denominator mode (||update|| or ||update + lambda w||).
double trust_ratio(const LayerParams& layer, const Tensor& update, const OptimizerConfig& cfg);

// min(max(gamma, lower), upper). Pure; requires 0 <= lower <= upper.
double clip_trust_ratio(double gamma, double clip_lower, double clip_upper);

// Clip band at 1-based step t under the configured policy.
std::pair<double, double> bound_schedule(std::uint64_t t, const OptimizerConfig& cfg);

// --- Whole steps ------------------------------------------------------------

StepOutcome sgd_step(Model& model, const GradMap& grads, const OptimizerConfig& cfg,
                     std::uint64_t t);
StepOutcome lamb_step(Model& model, const GradMap& grads, const OptimizerConfig& cfg,
                      std::uint64_t t);  // adam, lamb, lambc
StepOutcome lars_step(Model& model, const GradMap& grads, const OptimizerConfig& cfg,
                      std::uint64_t t);

// Owns the step counter and dispatches on the configured algorithm. One
// instance per run; moment state lives in the model's layers.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg);

    StepOutcome step(Model& model, const GradMap& grads);

    const OptimizerConfig& config() const noexcept { return cfg_; }
    std::uint64_t steps_taken() const noexcept { return t_; }

private:
    OptimizerConfig cfg_;
    std::uint64_t t_ = 0;
};

}  // namespace lambc
