#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dyntex/layers.hpp"
#include "dyntex/tensor.hpp"

namespace dyntex {

enum class LayerKind { Conv, Relu, MaxPool, Square, DivNorm, Tap };

/// One entry of a declarative, strictly sequential network description.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    /// Parameter prefix for Conv ("<name>.weight", "<name>.bias"), label for Tap.
    std::string name;
    ConvSpec conv;
    std::size_t window = 0;
    std::size_t stride = 1;
    Padding pool_padding = Padding::Valid;

    static LayerSpec convolution(std::string name, ConvSpec spec);
    static LayerSpec relu();
    static LayerSpec maxpool(std::size_t window, std::size_t stride, Padding padding = Padding::Valid);
    static LayerSpec square();
    static LayerSpec divnorm();
    static LayerSpec tap(std::string label);
};

enum class WeightProvenance { SeededRandom, Loaded };

/// Named parameter tensors of one network.
class WeightStore {
public:
    WeightStore() = default;
    explicit WeightStore(WeightProvenance provenance) : provenance_(provenance) {}

    WeightProvenance provenance() const noexcept { return provenance_; }
    void set_provenance(WeightProvenance p) noexcept { provenance_ = p; }

    /// Inserts or replaces an entry.
    void set(const std::string& name, Tensor value) { entries_[name] = std::move(value); }
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    /// Throws Error when the entry is missing.
    const Tensor& get(const std::string& name) const;
    std::size_t size() const noexcept { return entries_.size(); }
    const std::map<std::string, Tensor>& entries() const noexcept { return entries_; }

    /// FNV-1a over names, shapes and raw values; detects any mutation.
    std::uint64_t checksum() const;

    bool operator==(const WeightStore& other) const { return entries_ == other.entries_; }

private:
    WeightProvenance provenance_ = WeightProvenance::SeededRandom;
    std::map<std::string, Tensor> entries_;
};

std::string weight_name(const std::string& layer);
std::string bias_name(const std::string& layer);

/// Fills every conv layer of `layers` with uniform weights in [-a, a],
/// a = sqrt(6 / (fan_in + fan_out)), and zero biases. Deterministic in `seed`.
WeightStore random_weights(const std::vector<LayerSpec>& layers, std::uint64_t seed);

/// Immutable sequential network with labelled taps and an input-gradient pass.
class Network {
public:
    /// Everything needed by backward(): per-layer inputs, max-pool argmax
    /// records and the tapped activations.
    struct Trace {
        Shape input_shape;
        std::vector<Tensor> layer_inputs;
        std::vector<std::vector<std::size_t>> argmax;
        std::map<std::string, Tensor> taps;
    };

    /// Throws ShapeError naming the layer when a conv has no matching weight
    /// or bias, and Error on duplicate tap labels or unused weight entries.
    Network(std::vector<LayerSpec> layers, WeightStore weights);

    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    const WeightStore& weights() const noexcept { return weights_; }
    std::vector<std::string> tap_labels() const;

    Trace forward(const Tensor& input) const;

    /// Propagates per-tap gradients back to the network input. Taps missing
    /// from `tap_grads` contribute nothing.
    Tensor backward(const Trace& trace, const std::map<std::string, Tensor>& tap_grads) const;

private:
    std::vector<LayerSpec> layers_;
    WeightStore weights_;
};

}  // namespace dyntex
