#include "lambc/tensor.hpp"

#include <cmath>
#include <sstream>

namespace lambc {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must have at least one dimension");
    }
    std::size_t n = 1;
    for (std::size_t dim : shape) {
        if (dim == 0) {
            throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
        }
        n *= dim;
    }
    return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape_in) {
    std::size_t n = shape_numel(shape_in);
    return Tensor(std::move(shape_in), std::vector<double>(n, 0.0));
}

Tensor Tensor::zeros_like(const Tensor& other) {
    return zeros(other.shape);
}

Tensor Tensor::vector(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

std::vector<double> Tensor::row(std::size_t r) const {
    if (shape.size() != 2) {
        throw ShapeError("row() requires a rank-2 tensor, shape is " + shape_to_string(shape));
    }
    if (r >= shape[0]) {
        throw ArgumentError("row index " + std::to_string(r) + " out of range");
    }
    const std::size_t w = shape[1];
    return std::vector<double>(data.begin() + static_cast<std::ptrdiff_t>(r * w),
                               data.begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
}

std::size_t Tensor::rows() const {
    if (shape.size() != 2) {
        throw ShapeError("rows() requires a rank-2 tensor, shape is " + shape_to_string(shape));
    }
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (shape.size() != 2) {
        throw ShapeError("cols() requires a rank-2 tensor, shape is " + shape_to_string(shape));
    }
    return shape[1];
}

void check_finite(double x, const std::string& what) {
    if (!std::isfinite(x)) {
        throw NumericalError("non-finite value in " + what);
    }
}

void check_finite(const Tensor& t, const std::string& what) {
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        if (!std::isfinite(t.data[i])) {
            throw NumericalError("non-finite value in " + what + " at index " + std::to_string(i));
        }
    }
}

double l2_norm(const Tensor& t) {
    check_finite(t, "l2_norm input");
    double sum = 0.0;
    for (double x : t.data) {
        sum += x * x;
    }
    double norm = std::sqrt(sum);
    check_finite(norm, "l2_norm result");
    return norm;
}

namespace {

double combine_one(double a, double b, CombineOp op, double alpha) {
    switch (op) {
        case CombineOp::add: return a + b;
        case CombineOp::sub: return a - b;
        case CombineOp::mul: return a * b;
        case CombineOp::div: return a / b;
        case CombineOp::scale_and_add: return a + alpha * b;
    }
    throw ArgumentError("unknown combine op");
}

}  // namespace

Tensor elementwise_combine(const Tensor& a, const Tensor& b, CombineOp op, double alpha) {
    const bool broadcast = b.size() == 1 && !a.same_shape(b);
    if (!broadcast && !a.same_shape(b)) {
        throw ShapeError("shape mismatch: " + shape_to_string(a.shape) + " vs " +
                         shape_to_string(b.shape));
    }
    if (op == CombineOp::div) {
        for (double d : b.data) {
            if (d == 0.0) {
                throw NumericalError("division by zero in elementwise div");
            }
        }
    }
    Tensor out;
    out.shape = a.shape;
    out.data.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data[i] = combine_one(a.data[i], broadcast ? b.data[0] : b.data[i], op, alpha);
    }
    check_finite(out, "elementwise_combine result");
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_combine(a, b, CombineOp::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_combine(a, b, CombineOp::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_combine(a, b, CombineOp::mul); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise_combine(a, b, CombineOp::div); }

Tensor scale_and_add(const Tensor& a, const Tensor& b, double alpha) {
    return elementwise_combine(a, b, CombineOp::scale_and_add, alpha);
}

Tensor scale(const Tensor& a, double c) {
    Tensor out;
    out.shape = a.shape;
    out.data.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data[i] = c * a.data[i];
    }
    check_finite(out, "scale result");
    return out;
}

}  // namespace lambc
