#include "dyntex/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dyntex/error.hpp"

namespace dyntex {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

void check_extents(const Shape& shape) {
    for (std::size_t axis = 0; axis < shape.size(); ++axis) {
        if (shape[axis] == 0)
            throw ShapeError("Tensor", "axis " + std::to_string(axis), "extent must be >= 1");
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents(shape_);
    if (data_.size() != shape_size(shape_))
        throw ShapeError("Tensor", "element count", shape_size(shape_), data_.size());
}

Tensor Tensor::reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
    check_extents(shape);
    if (shape_size(shape) != data_.size())
        throw ShapeError("Tensor::reshaped", "element count", data_.size(), shape_size(shape));
    shape_ = std::move(shape);
    return std::move(*this);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
    if (other.shape_ != shape_)
        throw ShapeError("Tensor::operator+=", "shape", shape_string(shape_) + " vs " + shape_string(other.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double scale) {
    for (double& v : data_) v *= scale;
    return *this;
}

bool Tensor::operator==(const Tensor& other) const {
    return shape_ == other.shape_ &&
           std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size())
        throw ShapeError("Tensor::at", "rank", shape_.size(), index.size());
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= shape_[axis])
            throw ShapeError("Tensor::at", "axis " + std::to_string(axis), "index out of range");
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("max_abs_difference", "shape", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace dyntex
