#pragma once

#include <array>
#include <cstddef>

#include "dyntex/tensor.hpp"

namespace dyntex {

/// frames x height x width x 3 intensities; the optimization variable and
/// the exemplar. Values are nominally in [0, 1] and always finite.
class VideoTensor {
public:
    static constexpr std::size_t kChannels = 3;

    VideoTensor(std::size_t frames, std::size_t height, std::size_t width, double fill = 0.0);
    /// Takes a (F, H, W, 3) tensor; throws ShapeError on other shapes and
    /// Error on non-finite values.
    explicit VideoTensor(Tensor data);

    std::size_t frames() const { return data_.extent(0); }
    std::size_t height() const { return data_.extent(1); }
    std::size_t width() const { return data_.extent(2); }
    std::size_t frame_size() const { return height() * width() * kChannels; }

    const Tensor& tensor() const noexcept { return data_; }
    Tensor& tensor() noexcept { return data_; }

    /// Copy of frame i as an (H, W, 3) tensor.
    Tensor frame(std::size_t i) const;
    void set_frame(std::size_t i, const Tensor& frame);

    double& at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) {
        return data_[((f * height() + y) * width() + x) * kChannels + c];
    }
    double at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) const {
        return data_[((f * height() + y) * width() + x) * kChannels + c];
    }

    std::array<double, 3> channel_mean() const;

    bool operator==(const VideoTensor& other) const { return data_ == other.data_; }

private:
    Tensor data_;
};

}  // namespace dyntex
