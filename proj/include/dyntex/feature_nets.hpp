#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dyntex/network.hpp"
#include "dyntex/tensor.hpp"

namespace dyntex {

// ---------------------------------------------------------------------------
// Appearance stream: VGG19 prefix up to pool4 (3x3 convs + ReLU, 2x2/2 pools).
// ---------------------------------------------------------------------------

inline constexpr std::size_t kAppearanceTapCount = 5;
inline const std::array<std::string, kAppearanceTapCount> kAppearanceTapLabels = {"conv1", "pool1", "pool2",
                                                                                  "pool3", "pool4"};
inline constexpr std::array<std::size_t, kAppearanceTapCount> kAppearanceTapStrides = {1, 2, 4, 8, 16};
inline constexpr std::size_t kMinAppearanceExtent = 16;

std::vector<LayerSpec> appearance_topology();
Network build_appearance_net(std::uint64_t seed);
/// Throws ShapeError naming the layer when `weights` does not fit the topology.
Network build_appearance_net(WeightStore weights);

struct AppearanceTaps {
    /// (C, H/stride, W/stride) per tap, ordered as kAppearanceTapLabels.
    std::array<Tensor, kAppearanceTapCount> maps;
    std::array<std::size_t, kAppearanceTapCount> strides = kAppearanceTapStrides;
};

struct AppearanceForward {
    AppearanceTaps taps;
    Network::Trace trace;
    Shape frame_shape;
};

/// Runs one (H, W, 3) frame through the appearance stream after subtracting
/// `channel_mean` per colour channel.
AppearanceForward extract_appearance(const Tensor& frame, const Network& net,
                                     const std::array<double, 3>& channel_mean = {0.0, 0.0, 0.0});

/// Gradient with respect to the (H, W, 3) frame. `tap_grads[k]` may be a
/// default-constructed tensor to mark tap k as unused.
Tensor appearance_backward(const AppearanceForward& fwd, const Network& net,
                           const std::array<Tensor, kAppearanceTapCount>& tap_grads);

// ---------------------------------------------------------------------------
// Dynamics stream: frame-pair 11x11 conv (32) -> square -> 5x5/1 max-pool ->
// 1x1 conv (64) -> L1 divisive normalization, applied per pyramid scale.
// ---------------------------------------------------------------------------

inline const std::string kDynamicsTapLabel = "dynamics";
inline constexpr std::size_t kDynamicsFirstChannels = 32;
inline constexpr std::size_t kDynamicsChannels = 64;
inline constexpr std::size_t kDynamicsKernel = 11;
inline constexpr std::size_t kDynamicsPoolWindow = 5;
inline constexpr std::size_t kDynamicsPoolStride = 1;
inline constexpr std::array<double, 3> kLumaWeights = {0.299, 0.587, 0.114};

std::vector<LayerSpec> dynamics_topology();
Network build_dynamics_net(std::uint64_t seed);
Network build_dynamics_net(WeightStore weights);

/// Largest pyramid depth whose coarsest level is still at least 11x11.
unsigned max_pyramid_scales(std::size_t height, std::size_t width);

struct DynamicsFeatures {
    /// (64, H_s, W_s) per pyramid scale, finest first.
    std::vector<Tensor> per_scale;
    /// Scales upsampled (nearest) to the finest grid and stacked: (64*S, H, W).
    Tensor combined;
    std::size_t scale_count() const { return per_scale.size(); }
};

struct DynamicsForward {
    DynamicsFeatures features;
    std::vector<Network::Trace> traces;
    std::vector<Shape> level_shapes;  // (H_s, W_s) luma shape per scale
    Shape frame_shape;
};

/// Processes the frame pair (first, second), each (H, W, 3).
DynamicsForward extract_dynamics(const Tensor& first, const Tensor& second, const Network& net, unsigned scales);

struct FramePairGradient {
    Tensor first;
    Tensor second;
};

/// Gradient of a loss on `features.combined` with respect to both frames.
FramePairGradient dynamics_backward(const DynamicsForward& fwd, const Network& net, const Tensor& combined_grad);

}  // namespace dyntex
