#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vogcl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major array of doubles with an optional gradient buffer.
// Scalars are represented with shape {1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double item() const;

    bool requires_grad() const noexcept { return requires_grad_; }
    void set_requires_grad(bool flag) { requires_grad_ = flag; }

    bool has_grad() const noexcept { return grad_.has_value(); }
    std::span<double> grad();
    std::span<const double> grad() const;
    void zero_grad();
    void clear_grad() { grad_.reset(); }

    // Same data, new shape; numel must match.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_{};
    std::vector<double> data_{};
    bool requires_grad_ = false;
    std::optional<std::vector<double>> grad_{};
};

}  // namespace vogcl
