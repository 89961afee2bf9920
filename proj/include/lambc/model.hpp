#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lambc/tensor.hpp"

namespace lambc {

// One named parameter tensor plus its optimizer moment state. Weight
// matrices and bias vectors are separate entries, each normalized
// independently by the layerwise optimizers.
struct LayerParams {
    std::string name;
    Tensor weights;
    Tensor m;  // first moment / momentum buffer
    Tensor v;  // second moment, elementwise non-negative
    std::uint64_t step_count = 0;
    bool decay_exempt = false;  // excluded from weight decay when set

    static LayerParams make(std::string name, Tensor weights);

    // Checks the shape agreement between weights/m/v, non-negative v,
    // and zero moments while step_count == 0.
    void validate() const;
};

struct Model {
    std::vector<LayerParams> layers;
    std::string architecture;  // quadratic | linear | logistic | mlp

    std::size_t layer_count() const noexcept { return layers.size(); }

    LayerParams& layer(std::string_view name);
    const LayerParams& layer(std::string_view name) const;
    bool has_layer(std::string_view name) const noexcept;

    std::size_t parameter_count() const noexcept;

    // Unique layer names, at least one layer, per-layer validate().
    void validate() const;
};

// Deep, independent copy; mutating the copy never touches the original.
Model snapshot(const Model& model);

// Per-layer gradients keyed by layer name. Ordered map so iteration is
// deterministic everywhere it leaks into output.
using GradMap = std::map<std::string, Tensor>;

}  // namespace lambc
