#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lambc/model.hpp"
#include "lambc/tensor.hpp"

namespace lambc {

// One minibatch. inputs is [n_samples, n_features]; targets is either
// [n_samples] of class indices (classification) or [n_samples, n_outputs]
// (regression). The quadratic task ignores the batch contents.
struct Batch {
    Tensor inputs;
    Tensor targets;

    std::size_t size() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
};

struct LossValue {
    double loss = 0.0;
    std::optional<double> accuracy;
};

// A training task: a loss with exact hand-derived gradients. forward and
// backward are pure; they never touch model weights or moment state.
class Task {
public:
    virtual ~Task() = default;

    virtual const std::string& kind() const = 0;
    virtual std::size_t input_width() const = 0;
    virtual bool classification() const = 0;

    // Mean loss over the batch; accuracy populated for classification.
    virtual LossValue forward(const Model& model, const Batch& batch) const = 0;

    // Gradient of the mean batch loss w.r.t. every layer.
    virtual GradMap backward(const Model& model, const Batch& batch) const = 0;
};

struct TaskSpec {
    std::string kind = "mlp";  // quadratic | linear | logistic | mlp
    std::size_t input_dim = 16;
    std::size_t output_dim = 2;  // class count, or regression outputs
    std::vector<std::size_t> hidden = {32, 32};
    std::string activation = "relu";  // relu | tanh (mlp only)
    double condition = 100.0;         // quadratic Hessian condition number

    bool operator==(const TaskSpec&) const = default;
};

struct TaskBundle {
    std::shared_ptr<Task> task;
    Model model;
};

// Builds the task and a deterministically initialized model: weights
// uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)), biases zero.
TaskBundle make_task(const TaskSpec& spec, std::uint64_t seed);

// Central differences (L(w + h e_i) - L(w - h e_i)) / 2h per coordinate.
// Independent oracle for Task::backward; h must be positive.
GradMap finite_diff_grad(const Task& task, const Model& model, const Batch& batch,
                         double h = 1e-5);

// Quadratic task internals are exposed so tests can place the minimizer
// anywhere: loss(w) = 0.5 * ||A w - target||^2 over layer "w".
class QuadraticTask : public Task {
public:
    QuadraticTask(Tensor a_matrix, Tensor target);

    const std::string& kind() const override;
    std::size_t input_width() const override { return dim_; }
    bool classification() const override { return false; }
    LossValue forward(const Model& model, const Batch& batch) const override;
    GradMap backward(const Model& model, const Batch& batch) const override;

    const Tensor& matrix() const { return a_; }
    const Tensor& target() const { return target_; }
    // Largest eigenvalue of the Hessian A^T A.
    double max_hessian_eigenvalue() const;

private:
    Tensor a_;       // [dim, dim]
    Tensor target_;  // [dim]
    std::size_t dim_;
};

}  // namespace lambc
