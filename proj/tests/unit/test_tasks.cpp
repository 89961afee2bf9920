#include <doctest.h>

#include <cmath>
#include <vector>

#include "lambc/rng.hpp"
#include "lambc/tasks.hpp"

using namespace lambc;

namespace {

Batch make_batch(std::vector<std::size_t> shape, std::vector<double> inputs,
                 std::vector<std::size_t> tshape, std::vector<double> targets) {
    return Batch{Tensor(std::move(shape), std::move(inputs)),
                 Tensor(std::move(tshape), std::move(targets))};
}

Batch random_classification_batch(std::size_t n, std::size_t d, std::size_t classes,
                                  std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::zeros({n, d});
    for (double& v : x.data) v = rng.normal();
    Tensor y = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
        y.data[i] = static_cast<double>(i % classes);
    }
    return Batch{std::move(x), std::move(y)};
}

void randomize_weights(Model& model, std::uint64_t seed) {
    Rng rng(seed);
    for (auto& layer : model.layers) {
        for (double& w : layer.weights.data) {
            w = rng.uniform(-0.8, 0.8);
        }
    }
}

// Re-implementation of the mlp forward pass with its own layout and loop
// structure, used as a straight-line oracle.
double mlp_forward_oracle(const Model& model, const Batch& batch,
                          const std::vector<std::size_t>& sizes, bool use_tanh) {
    const std::size_t n = batch.size();
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<double> act = batch.inputs.row(s);
        for (std::size_t l = 1; l + 1 < sizes.size(); ++l) {
            const auto& w = model.layer("fc" + std::to_string(l) + ".weight").weights;
            const auto& b = model.layer("fc" + std::to_string(l) + ".bias").weights;
            std::vector<double> next(sizes[l], 0.0);
            for (std::size_t i = 0; i < sizes[l]; ++i) {
                double z = b.data[i];
                for (std::size_t j = 0; j < sizes[l - 1]; ++j) {
                    z += w.data[i * sizes[l - 1] + j] * act[j];
                }
                next[i] = use_tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
            }
            act = next;
        }
        const std::size_t last = sizes.size() - 1;
        const auto& w = model.layer("fc" + std::to_string(last) + ".weight").weights;
        const auto& b = model.layer("fc" + std::to_string(last) + ".bias").weights;
        std::vector<double> logits(sizes[last], 0.0);
        for (std::size_t i = 0; i < sizes[last]; ++i) {
            double z = b.data[i];
            for (std::size_t j = 0; j < sizes[last - 1]; ++j) {
                z += w.data[i * sizes[last - 1] + j] * act[j];
            }
            logits[i] = z;
        }
        double zmax = logits[0];
        for (double z : logits) zmax = std::max(zmax, z);
        double denom = 0.0;
        for (double z : logits) denom += std::exp(z - zmax);
        const auto y = static_cast<std::size_t>(batch.targets.data[s]);
        total -= (logits[y] - zmax) - std::log(denom);
    }
    return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("quadratic loss and gradient vanish at the minimizer") {
    // Identity A with a nonzero target: minimizer is w* = target.
    QuadraticTask task(Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}), Tensor::vector({1.0, -2.0}));
    Model model;
    model.architecture = "quadratic";
    model.layers.push_back(LayerParams::make("w", Tensor::vector({1.0, -2.0})));
    const Batch batch = make_batch({1, 2}, {0.0, 0.0}, {1}, {0.0});
    CHECK(task.forward(model, batch).loss == 0.0);
    const GradMap grads = task.backward(model, batch);
    for (double g : grads.at("w").data) {
        CHECK(std::fabs(g) <= 1e-12);
    }
}

TEST_CASE("built quadratic task has its minimizer at the origin") {
    TaskSpec spec;
    spec.kind = "quadratic";
    spec.input_dim = 10;
    spec.condition = 100.0;
    auto bundle = make_task(spec, 7);
    Model at_min = snapshot(bundle.model);
    for (double& w : at_min.layer("w").weights.data) w = 0.0;
    const Batch batch = Batch{Tensor::zeros({1, 10}), Tensor::zeros({1})};
    CHECK(bundle.task->forward(at_min, batch).loss == 0.0);
}

TEST_CASE("quadratic finite differences match the analytic A^T(Aw-b) gradient") {
    TaskSpec spec;
    spec.kind = "quadratic";
    spec.input_dim = 8;
    spec.condition = 50.0;
    auto bundle = make_task(spec, 21);
    const Batch batch = Batch{Tensor::zeros({1, 8}), Tensor::zeros({1})};
    const GradMap analytic = bundle.task->backward(bundle.model, batch);
    const GradMap numeric = finite_diff_grad(*bundle.task, bundle.model, batch);
    const Tensor& a = analytic.at("w");
    const Tensor& f = numeric.at("w");
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a.data[i] - f.data[i]) * (a.data[i] - f.data[i]);
        ref += a.data[i] * a.data[i];
    }
    CHECK(std::sqrt(diff) <= 1e-8 * std::max(1.0, std::sqrt(ref)));
}

TEST_CASE("quadratic construction is deterministic and conditioned as asked") {
    TaskSpec spec;
    spec.kind = "quadratic";
    spec.input_dim = 10;
    spec.condition = 100.0;
    auto a = make_task(spec, 7);
    auto b = make_task(spec, 7);
    const auto* qa = dynamic_cast<const QuadraticTask*>(a.task.get());
    const auto* qb = dynamic_cast<const QuadraticTask*>(b.task.get());
    REQUIRE(qa != nullptr);
    REQUIRE(qb != nullptr);
    CHECK(qa->matrix() == qb->matrix());
    CHECK(qa->target() == qb->target());
    CHECK(a.model.layer("w").weights == b.model.layer("w").weights);
    // Hessian eigenvalues are log-spaced in [1/condition, 1].
    CHECK(qa->max_hessian_eigenvalue() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("linear regression single-sample gradient by hand") {
    // w = [1], x = [2], target 0: loss = 0.5 (wx)^2 = 2, dL/dw = (wx) x = 4.
    Model model;
    model.architecture = "linear";
    model.layers.push_back(LayerParams::make("linear.weight", Tensor({1, 1}, {1.0})));
    model.layers.push_back(LayerParams::make("linear.bias", Tensor::vector({0.0})));
    TaskSpec spec;
    spec.kind = "linear";
    spec.input_dim = 1;
    spec.output_dim = 1;
    auto bundle = make_task(spec, 1);  // task object only; weights replaced
    const Batch batch = make_batch({1, 1}, {2.0}, {1, 1}, {0.0});
    CHECK(bundle.task->forward(model, batch).loss == doctest::Approx(2.0).epsilon(1e-15));
    const GradMap grads = bundle.task->backward(model, batch);
    CHECK(grads.at("linear.weight").data[0] == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(grads.at("linear.bias").data[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("logistic with zero weights on a balanced batch gives ln 2 per sample") {
    TaskSpec spec;
    spec.kind = "logistic";
    spec.input_dim = 4;
    spec.output_dim = 2;
    auto bundle = make_task(spec, 3);
    for (auto& layer : bundle.model.layers) {
        for (double& w : layer.weights.data) w = 0.0;
    }
    const Batch batch = random_classification_batch(10, 4, 2, 55);
    const LossValue loss = bundle.task->forward(bundle.model, batch);
    CHECK(loss.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    REQUIRE(loss.accuracy.has_value());
    CHECK(*loss.accuracy == doctest::Approx(0.5));
}

TEST_CASE("mlp forward matches an independent straight-line re-implementation") {
    TaskSpec spec;
    spec.kind = "mlp";
    spec.input_dim = 3;
    spec.hidden = {8, 5};
    spec.output_dim = 2;
    for (const char* act : {"relu", "tanh"}) {
        spec.activation = act;
        auto bundle = make_task(spec, 11);
        const Batch batch = random_classification_batch(6, 3, 2, 77);
        const double expected =
            mlp_forward_oracle(bundle.model, batch, {3, 8, 5, 2}, spec.activation == "tanh");
        const double got = bundle.task->forward(bundle.model, batch).loss;
        CHECK(std::fabs(got - expected) <= 1e-12 * std::max(1.0, std::fabs(expected)));
    }
}

TEST_CASE("mlp layer count matches: 2->16->2 has 4 parameter tensors") {
    TaskSpec spec;
    spec.kind = "mlp";
    spec.input_dim = 2;
    spec.hidden = {16};
    spec.output_dim = 2;
    auto bundle = make_task(spec, 3);
    CHECK(bundle.model.layer_count() == 4);
}

TEST_CASE("backward agrees with central differences at random parameter points") {
    struct Case {
        TaskSpec spec;
        std::uint64_t batch_seed;
    };
    std::vector<Case> cases;
    {
        TaskSpec q;
        q.kind = "quadratic";
        q.input_dim = 6;
        q.condition = 30.0;
        cases.push_back({q, 1});
        TaskSpec lin;
        lin.kind = "linear";
        lin.input_dim = 5;
        lin.output_dim = 3;
        cases.push_back({lin, 2});
        TaskSpec log;
        log.kind = "logistic";
        log.input_dim = 5;
        log.output_dim = 2;
        cases.push_back({log, 3});
        TaskSpec mlp;
        mlp.kind = "mlp";
        mlp.input_dim = 2;
        mlp.hidden = {16};
        mlp.output_dim = 2;
        mlp.activation = "tanh";
        cases.push_back({mlp, 4});
    }
    for (const auto& c : cases) {
        auto bundle = make_task(c.spec, 123);
        Batch batch;
        if (c.spec.kind == "quadratic") {
            batch = Batch{Tensor::zeros({4, c.spec.input_dim}), Tensor::zeros({4})};
        } else if (c.spec.kind == "linear") {
            Rng rng(c.batch_seed);
            Tensor x = Tensor::zeros({4, c.spec.input_dim});
            for (double& v : x.data) v = rng.normal();
            Tensor y = Tensor::zeros({4, c.spec.output_dim});
            for (double& v : y.data) v = rng.normal();
            batch = Batch{std::move(x), std::move(y)};
        } else {
            batch = random_classification_batch(8, c.spec.input_dim, c.spec.output_dim,
                                                c.batch_seed);
        }
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Model probe = snapshot(bundle.model);
            randomize_weights(probe, 1000 + seed);
            const GradMap analytic = bundle.task->backward(probe, batch);
            const GradMap numeric = finite_diff_grad(*bundle.task, probe, batch);
            for (const auto& [name, a] : analytic) {
                const Tensor& f = numeric.at(name);
                REQUIRE(a.same_shape(f));
                for (std::size_t i = 0; i < a.size(); ++i) {
                    if (std::fabs(a.data[i]) > 1e-8) {
                        const double rel = std::fabs(a.data[i] - f.data[i]) / std::fabs(a.data[i]);
                        INFO(c.spec.kind, " layer ", name, " coord ", i, " analytic ", a.data[i],
                             " numeric ", f.data[i]);
                        CHECK(rel <= 1e-6);
                    }
                }
            }
        }
    }
}

TEST_CASE("mean batch gradient equals the average of per-sample gradients") {
    TaskSpec spec;
    spec.kind = "logistic";
    spec.input_dim = 4;
    spec.output_dim = 2;
    auto bundle = make_task(spec, 9);
    const std::size_t n = 6;
    const Batch batch = random_classification_batch(n, 4, 2, 99);
    const GradMap full = bundle.task->backward(bundle.model, batch);

    GradMap accumulated;
    for (std::size_t i = 0; i < n; ++i) {
        Batch single;
        single.inputs = Tensor({1, 4}, batch.inputs.row(i));
        single.targets = Tensor::vector({batch.targets.data[i]});
        const GradMap g = bundle.task->backward(bundle.model, single);
        for (const auto& [name, tensor] : g) {
            auto [it, inserted] = accumulated.emplace(name, tensor);
            if (!inserted) {
                it->second = add(it->second, tensor);
            }
        }
    }
    for (const auto& [name, tensor] : full) {
        const Tensor avg = scale(accumulated.at(name), 1.0 / static_cast<double>(n));
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            CHECK(std::fabs(tensor.data[i] - avg.data[i]) <= 1e-12);
        }
    }
}

TEST_CASE("forward and backward never mutate the model") {
    TaskSpec spec;
    spec.kind = "mlp";
    spec.input_dim = 3;
    spec.hidden = {4};
    spec.output_dim = 2;
    auto bundle = make_task(spec, 31);
    const Model before = snapshot(bundle.model);
    const Batch batch = random_classification_batch(5, 3, 2, 8);
    (void)bundle.task->forward(bundle.model, batch);
    (void)bundle.task->backward(bundle.model, batch);
    (void)finite_diff_grad(*bundle.task, bundle.model, batch);
    for (std::size_t l = 0; l < before.layers.size(); ++l) {
        CHECK(bundle.model.layers[l].weights == before.layers[l].weights);
        CHECK(bundle.model.layers[l].m == before.layers[l].m);
        CHECK(bundle.model.layers[l].v == before.layers[l].v);
        CHECK(bundle.model.layers[l].step_count == before.layers[l].step_count);
    }
}

TEST_CASE("finite_diff_grad rejects non-positive step sizes") {
    TaskSpec spec;
    spec.kind = "quadratic";
    spec.input_dim = 2;
    spec.condition = 1.0;
    auto bundle = make_task(spec, 1);
    const Batch batch = Batch{Tensor::zeros({1, 2}), Tensor::zeros({1})};
    CHECK_THROWS_AS(finite_diff_grad(*bundle.task, bundle.model, batch, 0.0), ArgumentError);
    CHECK_THROWS_AS(finite_diff_grad(*bundle.task, bundle.model, batch, -1e-5), ArgumentError);
}

TEST_CASE("shape and spec validation errors") {
    TaskSpec spec;
    spec.kind = "mlp";
    spec.input_dim = 3;
    spec.hidden = {4};
    spec.output_dim = 2;
    auto bundle = make_task(spec, 2);
    // Wrong feature width.
    const Batch bad = random_classification_batch(5, 7, 2, 1);
    CHECK_THROWS_AS(bundle.task->forward(bundle.model, bad), ShapeError);
    TaskSpec unknown;
    unknown.kind = "transformer";
    CHECK_THROWS_AS(make_task(unknown, 1), ConfigError);
    TaskSpec bad_act = spec;
    bad_act.activation = "gelu";
    CHECK_THROWS_AS(make_task(bad_act, 1), ConfigError);
}
