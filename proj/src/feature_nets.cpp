#include "dyntex/feature_nets.hpp"

#include <cstring>

#include "dyntex/error.hpp"

namespace dyntex {

namespace {

ConvSpec conv3x3(std::size_t in, std::size_t out) {
    ConvSpec s;
    s.kernel_h = s.kernel_w = 3;
    s.in_channels = in;
    s.out_channels = out;
    return s;
}

void check_frame(const Tensor& frame, const char* where) {
    if (frame.rank() != 3) throw ShapeError(where, "frame rank", 3, frame.rank());
    if (frame.extent(2) != 3) throw ShapeError(where, "frame channels", 3, frame.extent(2));
}

// (H, W) luma plane of an (H, W, 3) frame.
Tensor luma(const Tensor& frame) {
    const std::size_t h = frame.extent(0), w = frame.extent(1);
    Tensor out({h, w});
    for (std::size_t p = 0; p < h * w; ++p) {
        const double* px = frame.data() + 3 * p;
        out[p] = kLumaWeights[0] * px[0] + kLumaWeights[1] * px[1] + kLumaWeights[2] * px[2];
    }
    return out;
}

}  // namespace

std::vector<LayerSpec> appearance_topology() {
    std::vector<LayerSpec> l;
    auto block = [&l](int stage, std::size_t in, std::size_t out, int convs) {
        for (int i = 1; i <= convs; ++i) {
            l.push_back(LayerSpec::convolution("conv" + std::to_string(stage) + "_" + std::to_string(i),
                                               conv3x3(i == 1 ? in : out, out)));
            l.push_back(LayerSpec::relu());
            if (stage == 1 && i == 1) l.push_back(LayerSpec::tap("conv1"));
        }
        l.push_back(LayerSpec::maxpool(2, 2));
        l.push_back(LayerSpec::tap("pool" + std::to_string(stage)));
    };
    block(1, 3, 64, 2);
    block(2, 64, 128, 2);
    block(3, 128, 256, 4);
    block(4, 256, 512, 4);
    return l;
}

Network build_appearance_net(std::uint64_t seed) {
    auto topology = appearance_topology();
    WeightStore w = random_weights(topology, seed);
    return Network(std::move(topology), std::move(w));
}

Network build_appearance_net(WeightStore weights) {
    weights.set_provenance(WeightProvenance::Loaded);
    return Network(appearance_topology(), std::move(weights));
}

AppearanceForward extract_appearance(const Tensor& frame, const Network& net,
                                     const std::array<double, 3>& channel_mean) {
    check_frame(frame, "extract_appearance");
    const std::size_t h = frame.extent(0), w = frame.extent(1);
    if (h < kMinAppearanceExtent) throw ShapeError("extract_appearance", "frame height", "must be >= 16");
    if (w < kMinAppearanceExtent) throw ShapeError("extract_appearance", "frame width", "must be >= 16");

    Tensor chw({3, h, w});
    for (std::size_t p = 0; p < h * w; ++p)
        for (std::size_t c = 0; c < 3; ++c) chw[c * h * w + p] = frame[3 * p + c] - channel_mean[c];

    AppearanceForward fwd;
    fwd.frame_shape = frame.shape();
    fwd.trace = net.forward(chw);
    for (std::size_t k = 0; k < kAppearanceTapCount; ++k) {
        auto it = fwd.trace.taps.find(kAppearanceTapLabels[k]);
        if (it == fwd.trace.taps.end())
            throw Error("extract_appearance: network has no tap '" + kAppearanceTapLabels[k] + "'");
        fwd.taps.maps[k] = it->second;
    }
    return fwd;
}

Tensor appearance_backward(const AppearanceForward& fwd, const Network& net,
                           const std::array<Tensor, kAppearanceTapCount>& tap_grads) {
    std::map<std::string, Tensor> grads;
    for (std::size_t k = 0; k < kAppearanceTapCount; ++k) {
        if (tap_grads[k].rank() == 0) continue;
        grads[kAppearanceTapLabels[k]] = tap_grads[k];
    }
    const Tensor chw = net.backward(fwd.trace, grads);
    const std::size_t h = fwd.frame_shape[0], w = fwd.frame_shape[1];
    Tensor out(fwd.frame_shape);
    for (std::size_t p = 0; p < h * w; ++p)
        for (std::size_t c = 0; c < 3; ++c) out[3 * p + c] = chw[c * h * w + p];
    return out;
}

std::vector<LayerSpec> dynamics_topology() {
    ConvSpec motion;
    motion.kernel_t = 2;
    motion.kernel_h = motion.kernel_w = kDynamicsKernel;
    motion.in_channels = 1;
    motion.out_channels = kDynamicsFirstChannels;

    ConvSpec project;
    project.kernel_h = project.kernel_w = 1;
    project.in_channels = kDynamicsFirstChannels;
    project.out_channels = kDynamicsChannels;

    return {
        LayerSpec::convolution("motion_conv", motion),
        LayerSpec::square(),
        LayerSpec::maxpool(kDynamicsPoolWindow, kDynamicsPoolStride, Padding::Same),
        LayerSpec::convolution("motion_project", project),
        LayerSpec::divnorm(),
        LayerSpec::tap(kDynamicsTapLabel),
    };
}

Network build_dynamics_net(std::uint64_t seed) {
    auto topology = dynamics_topology();
    WeightStore w = random_weights(topology, seed);
    return Network(std::move(topology), std::move(w));
}

Network build_dynamics_net(WeightStore weights) {
    weights.set_provenance(WeightProvenance::Loaded);
    return Network(dynamics_topology(), std::move(weights));
}

unsigned max_pyramid_scales(std::size_t height, std::size_t width) {
    unsigned n = 0;
    while (height >= kDynamicsKernel && width >= kDynamicsKernel) {
        ++n;
        height /= 2;
        width /= 2;
    }
    return n;
}

DynamicsForward extract_dynamics(const Tensor& first, const Tensor& second, const Network& net, unsigned scales) {
    check_frame(first, "extract_dynamics");
    check_frame(second, "extract_dynamics");
    if (first.shape() != second.shape())
        throw ShapeError("extract_dynamics", "frame pair shape",
                         shape_string(first.shape()) + " vs " + shape_string(second.shape()));
    const std::size_t h = first.extent(0), w = first.extent(1);
    if (scales < 1) throw ShapeError("extract_dynamics", "pyramid scales", "must be >= 1");
    if (scales > max_pyramid_scales(h, w))
        throw ShapeError("extract_dynamics", "pyramid scales",
                         std::to_string(scales) + " scales need the coarsest level of a " + std::to_string(h) + "x" +
                             std::to_string(w) + " frame to stay >= 11x11 (max " +
                             std::to_string(max_pyramid_scales(h, w)) + ")");

    DynamicsForward fwd;
    fwd.frame_shape = first.shape();
    Tensor a = luma(first), b = luma(second);
    std::vector<Tensor> outputs;
    for (unsigned s = 0; s < scales; ++s) {
        if (s > 0) {
            a = downsample2x(a);
            b = downsample2x(b);
        }
        const std::size_t hs = a.extent(0), ws = a.extent(1);
        fwd.level_shapes.push_back({hs, ws});
        Tensor pair({2, 1, hs, ws});
        std::memcpy(pair.data(), a.data(), hs * ws * sizeof(double));
        std::memcpy(pair.data() + hs * ws, b.data(), hs * ws * sizeof(double));
        fwd.traces.push_back(net.forward(pair));
        fwd.features.per_scale.push_back(fwd.traces.back().taps.at(kDynamicsTapLabel));
    }

    const std::size_t c = fwd.features.per_scale.front().extent(0);
    fwd.features.combined = Tensor({c * scales, h, w});
    for (unsigned s = 0; s < scales; ++s) {
        const Tensor up = upsample_nearest(fwd.features.per_scale[s], s, h, w);
        std::memcpy(fwd.features.combined.data() + s * up.size(), up.data(), up.size() * sizeof(double));
    }
    return fwd;
}

FramePairGradient dynamics_backward(const DynamicsForward& fwd, const Network& net, const Tensor& combined_grad) {
    if (combined_grad.shape() != fwd.features.combined.shape())
        throw ShapeError("dynamics_backward", "feature gradient shape",
                         shape_string(fwd.features.combined.shape()) + " vs " + shape_string(combined_grad.shape()));
    const std::size_t h = fwd.frame_shape[0], w = fwd.frame_shape[1];
    const std::size_t scales = fwd.traces.size();
    const std::size_t c = fwd.features.per_scale.front().extent(0);

    std::vector<Tensor> grad_a(scales), grad_b(scales);
    for (std::size_t s = 0; s < scales; ++s) {
        Tensor slice({c, h, w});
        std::memcpy(slice.data(), combined_grad.data() + s * slice.size(), slice.size() * sizeof(double));
        Tensor g = upsample_nearest_backward(fwd.features.per_scale[s].shape(), static_cast<unsigned>(s), slice);
        const Tensor pair_grad = net.backward(fwd.traces[s], {{kDynamicsTapLabel, std::move(g)}});
        const std::size_t plane = fwd.level_shapes[s][0] * fwd.level_shapes[s][1];
        grad_a[s] = Tensor(fwd.level_shapes[s]);
        grad_b[s] = Tensor(fwd.level_shapes[s]);
        std::memcpy(grad_a[s].data(), pair_grad.data(), plane * sizeof(double));
        std::memcpy(grad_b[s].data(), pair_grad.data() + plane, plane * sizeof(double));
    }
    for (std::size_t s = scales; s-- > 1;) {
        grad_a[s - 1] += downsample2x_backward(fwd.level_shapes[s - 1], grad_a[s]);
        grad_b[s - 1] += downsample2x_backward(fwd.level_shapes[s - 1], grad_b[s]);
    }

    FramePairGradient out{Tensor(fwd.frame_shape), Tensor(fwd.frame_shape)};
    for (std::size_t p = 0; p < h * w; ++p) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
            out.first[3 * p + ch] = kLumaWeights[ch] * grad_a[0][p];
            out.second[3 * p + ch] = kLumaWeights[ch] * grad_b[0][p];
        }
    }
    return out;
}

}  // namespace dyntex
