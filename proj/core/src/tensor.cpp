#include "vogcl/tensor.hpp"

#include <cmath>
#include <sstream>

#include "vogcl/errors.hpp"

namespace vogcl {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

static void check_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("tensor shape " + shape_to_string(shape) + " has a zero extent");
    }
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("shape " + shape_to_string(shape_) + " needs " +
                             std::to_string(shape_numel(shape_)) + " values, got " +
                             std::to_string(data_.size()));
    }
}

double Tensor::item() const {
    if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape_));
    return data_[0];
}

std::span<double> Tensor::grad() {
    if (!grad_) throw ContractError("tensor has no gradient buffer");
    return *grad_;
}

std::span<const double> Tensor::grad() const {
    if (!grad_) throw ContractError("tensor has no gradient buffer");
    return *grad_;
}

void Tensor::zero_grad() {
    if (grad_) {
        std::fill(grad_->begin(), grad_->end(), 0.0);
    } else {
        grad_.emplace(data_.size(), 0.0);
    }
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace vogcl
