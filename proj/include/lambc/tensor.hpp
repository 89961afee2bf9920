#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lambc/errors.hpp"

namespace lambc {

// Dense tensor of 64-bit floats. `data` is flat, row-major, and its length
// always equals the product of `shape`. Every public operation in this
// library keeps tensor elements finite; violations throw NumericalError.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in);

    static Tensor zeros(std::vector<std::size_t> shape_in);
    static Tensor zeros_like(const Tensor& other);
    static Tensor vector(std::vector<double> values);

    std::size_t size() const noexcept { return data.size(); }
    bool empty() const noexcept { return data.empty(); }
    bool same_shape(const Tensor& other) const noexcept { return shape == other.shape; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // Row `r` of a rank-2 tensor, copied out.
    std::vector<double> row(std::size_t r) const;
    std::size_t rows() const;
    std::size_t cols() const;

    bool operator==(const Tensor& other) const = default;
};

// Product of dimensions; rejects zero or absent dimensions.
std::size_t shape_numel(const std::vector<std::size_t>& shape);

std::string shape_to_string(const std::vector<std::size_t>& shape);

// Throws NumericalError if any element is NaN or Inf. `what` names the
// value in the error message.
void check_finite(const Tensor& t, const std::string& what);
void check_finite(double x, const std::string& what);

// L2 norm over all elements (the layer norm used by the trust ratio).
double l2_norm(const Tensor& t);

enum class CombineOp { add, sub, mul, div, scale_and_add };

// Elementwise combination of two tensors of identical shape; `b` may also
// be a single-element tensor, which broadcasts. For scale_and_add the
// result is a + alpha * b; the other ops ignore alpha.
Tensor elementwise_combine(const Tensor& a, const Tensor& b, CombineOp op, double alpha = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale_and_add(const Tensor& a, const Tensor& b, double alpha);
Tensor scale(const Tensor& a, double c);

}  // namespace lambc
