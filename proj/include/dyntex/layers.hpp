#pragma once

#include <cstddef>
#include <vector>

#include "dyntex/tensor.hpp"

// Forward and input-gradient (vector-Jacobian) kernels for the layer
// primitives used by both feature streams. Feature maps are laid out
// channel-major: (C, H, W). Parameter gradients are never produced.

namespace dyntex {

enum class Padding { Same, Valid };

struct ConvSpec {
    std::size_t kernel_t = 1;  // 1 for per-frame convs, 2 for frame-pair convs
    std::size_t kernel_h = 3;
    std::size_t kernel_w = 3;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t stride = 1;
    Padding padding = Padding::Same;

    /// Throws ShapeError when an invariant is violated.
    void validate() const;
    /// (out_channels, kernel_t, in_channels, kernel_h, kernel_w)
    Shape weight_shape() const { return {out_channels, kernel_t, in_channels, kernel_h, kernel_w}; }
    Shape bias_shape() const { return {out_channels}; }
    /// Expected input shape for a map of the given spatial size.
    Shape input_shape(std::size_t height, std::size_t width) const;
    std::size_t fan_in() const { return kernel_t * in_channels * kernel_h * kernel_w; }
    std::size_t fan_out() const { return kernel_t * out_channels * kernel_h * kernel_w; }
};

/// Output extent and leading padding along one spatial axis.
struct AxisGeometry {
    std::size_t out = 0;
    std::size_t pad_before = 0;
};
AxisGeometry axis_geometry(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);

/// `input` is (C, H, W) when kernel_t == 1, otherwise (kernel_t, C, H, W):
/// a frame pair is collapsed into a single (out_channels, H', W') map.
Tensor conv_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, const ConvSpec& spec);

/// Gradient of conv_forward with respect to its input.
Tensor conv_backward(const Shape& input_shape, const Tensor& weights, const ConvSpec& spec,
                     const Tensor& upstream);
inline Tensor conv_backward(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                            const Tensor& upstream) {
    return conv_backward(input.shape(), weights, spec, upstream);
}

struct MaxPoolResult {
    Tensor output;
    /// Flat input offset of the selected element, one per output element.
    std::vector<std::size_t> argmax;
};

/// Spatial max pooling over a (C, H, W) map. With Padding::Same the window
/// is clipped at the border instead of padded. Ties go to the first element
/// in row-major scan order.
MaxPoolResult maxpool_forward(const Tensor& input, std::size_t window, std::size_t stride,
                              Padding padding = Padding::Valid);
Tensor maxpool_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                        const Tensor& upstream);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

Tensor square_forward(const Tensor& input);
Tensor square_backward(const Tensor& input, const Tensor& upstream);

inline constexpr double kDivNormEpsilon = 1e-6;

/// y_c(p) = x_c(p) / (sum_c' |x_c'(p)| + eps) over the channel axis of (C, H, W).
Tensor divnorm_l1_forward(const Tensor& input);
Tensor divnorm_l1_backward(const Tensor& input, const Tensor& upstream);

/// 2x2 mean pooling with stride 2 over the last two axes; an odd trailing
/// row or column is dropped.
Tensor downsample2x(const Tensor& input);
Tensor downsample2x_backward(const Shape& input_shape, const Tensor& upstream);

/// Nearest-neighbour upsampling of a (C, h, w) map onto an (C, H, W) grid:
/// output (y, x) reads input (min(y >> level, h-1), min(x >> level, w-1)).
Tensor upsample_nearest(const Tensor& input, unsigned level, std::size_t height, std::size_t width);
Tensor upsample_nearest_backward(const Shape& input_shape, unsigned level, const Tensor& upstream);

}  // namespace dyntex
