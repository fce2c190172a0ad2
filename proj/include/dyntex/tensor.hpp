#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dyntex {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Every extent is at least 1 and the element count always equals the product
/// of the extents. A default-constructed tensor is a rank-0 scalar holding 0.
class Tensor {
public:
    Tensor() : data_(1, 0.0) {}
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
    double at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

    /// Same data viewed with a different shape of equal element count.
    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    void fill(double value);
    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(double scale);

    /// Bit-identical comparison of shape and values.
    bool operator==(const Tensor& other) const;

private:
    std::size_t offset(std::initializer_list<std::size_t> index) const;

    Shape shape_;
    std::vector<double> data_;
};

double max_abs_difference(const Tensor& a, const Tensor& b);

}  // namespace dyntex
