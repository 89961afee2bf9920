#include "lambc/model.hpp"

#include <set>

namespace lambc {

LayerParams LayerParams::make(std::string name, Tensor weights) {
    LayerParams layer;
    layer.name = std::move(name);
    layer.m = Tensor::zeros_like(weights);
    layer.v = Tensor::zeros_like(weights);
    layer.weights = std::move(weights);
    return layer;
}

void LayerParams::validate() const {
    if (name.empty()) {
        throw ArgumentError("layer name must not be empty");
    }
    if (!weights.same_shape(m) || !weights.same_shape(v)) {
        throw ShapeError("layer '" + name + "': weights, m, v must share a shape");
    }
    for (double x : v.data) {
        if (x < 0.0) {
            throw NumericalError("layer '" + name + "': second moment has a negative entry");
        }
    }
    if (step_count == 0) {
        for (double x : m.data) {
            if (x != 0.0) {
                throw NumericalError("layer '" + name + "': first moment nonzero before any step");
            }
        }
        for (double x : v.data) {
            if (x != 0.0) {
                throw NumericalError("layer '" + name + "': second moment nonzero before any step");
            }
        }
    }
}

LayerParams& Model::layer(std::string_view name) {
    for (auto& l : layers) {
        if (l.name == name) return l;
    }
    throw ArgumentError("no layer named '" + std::string(name) + "'");
}

const LayerParams& Model::layer(std::string_view name) const {
    for (const auto& l : layers) {
        if (l.name == name) return l;
    }
    throw ArgumentError("no layer named '" + std::string(name) + "'");
}

bool Model::has_layer(std::string_view name) const noexcept {
    for (const auto& l : layers) {
        if (l.name == name) return true;
    }
    return false;
}

std::size_t Model::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size();
    return n;
}

void Model::validate() const {
    if (layers.empty()) {
        throw ArgumentError("model must have at least one layer");
    }
    std::set<std::string> names;
    for (const auto& l : layers) {
        l.validate();
        if (!names.insert(l.name).second) {
            throw ArgumentError("duplicate layer name '" + l.name + "'");
        }
    }
}

Model snapshot(const Model& model) {
    return model;  // value semantics: vector/string copies are deep
}

}  // namespace lambc
