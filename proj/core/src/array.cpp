#include "ammpl/array.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "ammpl/errors.hpp"

namespace ammpl {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("array: empty shape (use {1} for scalars)");
    for (auto d : shape) {
        if (d == 0) throw ShapeError("array: zero-sized dimension in " + shape_str(shape));
    }
}

}  // namespace

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Array::Array(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    validate_shape(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("array: shape " + shape_str(shape_) + " needs " +
                         std::to_string(shape_numel(shape_)) + " values, got " +
                         std::to_string(data_.size()));
    }
}

Array Array::from(Shape shape, std::initializer_list<double> values) {
    return Array(std::move(shape), std::vector<double>(values));
}

Array Array::identity(std::size_t n) {
    Array out({n, n});
    for (std::size_t i = 0; i < n; ++i) out[i * n + i] = 1.0;
    return out;
}

double Array::item() const {
    if (data_.size() != 1) throw ShapeError("item: array " + shape_str(shape_) + " is not a scalar");
    return data_[0];
}

Array Array::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    }
    return Array(std::move(shape), data_);
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Array::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Array::bitwise_equal(const Array& other) const noexcept {
    return shape_ == other.shape_ && data_.size() == other.data_.size() &&
           std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Array& a, const Array& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace ammpl
