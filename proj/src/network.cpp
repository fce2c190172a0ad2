#include "dyntex/network.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include "dyntex/error.hpp"

namespace dyntex {

LayerSpec LayerSpec::convolution(std::string name, ConvSpec spec) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.name = std::move(name);
    l.conv = spec;
    return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::maxpool(std::size_t window, std::size_t stride, Padding padding) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.window = window;
    l.stride = stride;
    l.pool_padding = padding;
    return l;
}

LayerSpec LayerSpec::square() {
    LayerSpec l;
    l.kind = LayerKind::Square;
    return l;
}

LayerSpec LayerSpec::divnorm() {
    LayerSpec l;
    l.kind = LayerKind::DivNorm;
    return l;
}

LayerSpec LayerSpec::tap(std::string label) {
    LayerSpec l;
    l.kind = LayerKind::Tap;
    l.name = std::move(label);
    return l;
}

const Tensor& WeightStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("weight store: no entry named '" + name + "'");
    return it->second;
}

std::uint64_t WeightStore::checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& [name, t] : entries_) {
        mix(name.data(), name.size());
        for (std::size_t e : t.shape()) mix(&e, sizeof e);
        mix(t.data(), t.size() * sizeof(double));
    }
    return h;
}

std::string weight_name(const std::string& layer) { return layer + ".weight"; }
std::string bias_name(const std::string& layer) { return layer + ".bias"; }

WeightStore random_weights(const std::vector<LayerSpec>& layers, std::uint64_t seed) {
    WeightStore store(WeightProvenance::SeededRandom);
    std::mt19937_64 rng(seed);
    for (const LayerSpec& l : layers) {
        if (l.kind != LayerKind::Conv) continue;
        const double a = std::sqrt(6.0 / static_cast<double>(l.conv.fan_in() + l.conv.fan_out()));
        std::uniform_real_distribution<double> dist(-a, a);
        Tensor w(l.conv.weight_shape());
        for (double& v : w.values()) v = dist(rng);
        store.set(weight_name(l.name), std::move(w));
        store.set(bias_name(l.name), Tensor(l.conv.bias_shape()));
    }
    return store;
}

Network::Network(std::vector<LayerSpec> layers, WeightStore weights)
    : layers_(std::move(layers)), weights_(std::move(weights)) {
    std::set<std::string> taps, used;
    for (const LayerSpec& l : layers_) {
        if (l.kind == LayerKind::Tap) {
            if (!taps.insert(l.name).second) throw Error("network: duplicate tap label '" + l.name + "'");
            continue;
        }
        if (l.kind == LayerKind::MaxPool && (l.window < 1 || l.stride < 1))
            throw ShapeError("network", "max-pool window", "window and stride must be >= 1");
        if (l.kind != LayerKind::Conv) continue;
        l.conv.validate();
        const std::string wn = weight_name(l.name), bn = bias_name(l.name);
        if (!weights_.contains(wn)) throw ShapeError("network layer " + l.name, "weight", "missing entry " + wn);
        if (!weights_.contains(bn)) throw ShapeError("network layer " + l.name, "bias", "missing entry " + bn);
        if (weights_.get(wn).shape() != l.conv.weight_shape())
            throw ShapeError("network layer " + l.name, "weight shape",
                             "expected " + shape_string(l.conv.weight_shape()) + ", got " +
                                 shape_string(weights_.get(wn).shape()));
        if (weights_.get(bn).shape() != l.conv.bias_shape())
            throw ShapeError("network layer " + l.name, "bias shape",
                             "expected " + shape_string(l.conv.bias_shape()) + ", got " +
                                 shape_string(weights_.get(bn).shape()));
        used.insert(wn);
        used.insert(bn);
    }
    for (const auto& [name, t] : weights_.entries()) {
        if (!used.count(name)) throw Error("network: weight entry '" + name + "' matches no layer");
    }
}

std::vector<std::string> Network::tap_labels() const {
    std::vector<std::string> out;
    for (const LayerSpec& l : layers_)
        if (l.kind == LayerKind::Tap) out.push_back(l.name);
    return out;
}

Network::Trace Network::forward(const Tensor& input) const {
    Trace trace;
    trace.input_shape = input.shape();
    trace.layer_inputs.reserve(layers_.size());
    trace.argmax.resize(layers_.size());
    Tensor x = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        if (l.kind == LayerKind::Tap) {
            trace.layer_inputs.emplace_back();
            trace.taps[l.name] = x;
            continue;
        }
        Tensor y;
        switch (l.kind) {
            case LayerKind::Conv:
                y = conv_forward(x, weights_.get(weight_name(l.name)), weights_.get(bias_name(l.name)), l.conv);
                break;
            case LayerKind::Relu: y = relu_forward(x); break;
            case LayerKind::Square: y = square_forward(x); break;
            case LayerKind::DivNorm: y = divnorm_l1_forward(x); break;
            case LayerKind::MaxPool: {
                MaxPoolResult r = maxpool_forward(x, l.window, l.stride, l.pool_padding);
                y = std::move(r.output);
                trace.argmax[i] = std::move(r.argmax);
                break;
            }
            case LayerKind::Tap: break;
        }
        trace.layer_inputs.push_back(std::move(x));
        x = std::move(y);
    }
    return trace;
}

Tensor Network::backward(const Trace& trace, const std::map<std::string, Tensor>& tap_grads) const {
    // `grad` stays unset until the first (deepest) tap with a gradient is met;
    // layers beyond it are skipped.
    Tensor grad;
    bool live = false;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const LayerSpec& l = layers_[i];
        if (l.kind == LayerKind::Tap) {
            auto it = tap_grads.find(l.name);
            if (it == tap_grads.end()) continue;
            const Tensor& tapped = trace.taps.at(l.name);
            if (it->second.shape() != tapped.shape())
                throw ShapeError("network backward", "tap '" + l.name + "' gradient shape",
                                 shape_string(tapped.shape()) + " vs " + shape_string(it->second.shape()));
            if (live) {
                grad += it->second;
            } else {
                grad = it->second;
                live = true;
            }
            continue;
        }
        if (!live) continue;
        const Tensor& x = trace.layer_inputs[i];
        switch (l.kind) {
            case LayerKind::Conv:
                grad = conv_backward(x.shape(), weights_.get(weight_name(l.name)), l.conv, grad);
                break;
            case LayerKind::Relu: grad = relu_backward(x, grad); break;
            case LayerKind::Square: grad = square_backward(x, grad); break;
            case LayerKind::DivNorm: grad = divnorm_l1_backward(x, grad); break;
            case LayerKind::MaxPool: grad = maxpool_backward(x.shape(), trace.argmax[i], grad); break;
            case LayerKind::Tap: break;
        }
    }
    if (!live) return Tensor(trace.input_shape);
    return grad;
}

}  // namespace dyntex
