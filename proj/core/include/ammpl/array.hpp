#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ammpl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of 64-bit reals.
///
/// The element count always equals the product of the shape. Dimensions are
/// strictly positive; a scalar is represented with shape {1}.
class Array {
public:
    Array() = default;
    explicit Array(Shape shape, double fill = 0.0);
    Array(Shape shape, std::vector<double> values);

    static Array zeros(Shape shape) { return Array(std::move(shape), 0.0); }
    static Array ones(Shape shape) { return Array(std::move(shape), 1.0); }
    static Array scalar(double v) { return Array(Shape{1}, v); }
    static Array from(Shape shape, std::initializer_list<double> values);
    static Array identity(std::size_t n);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t ndim() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double item() const;

    /// Same values, new shape with identical element count.
    Array reshaped(Shape shape) const;
    void fill(double v);

    bool all_finite() const noexcept;

    /// Bitwise equality of shape and values (distinguishes -0.0, NaN payloads).
    bool bitwise_equal(const Array& other) const noexcept;

    friend bool operator==(const Array& a, const Array& b) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Array& a, const Array& b);

}  // namespace ammpl
