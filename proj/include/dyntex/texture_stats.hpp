#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "dyntex/feature_nets.hpp"
#include "dyntex/tensor.hpp"

namespace dyntex {

enum class ShiftAxis { Horizontal, Vertical };

const char* axis_name(ShiftAxis axis);

/// A translation of a feature map by a signed number of cells.
struct CellShift {
    ShiftAxis axis = ShiftAxis::Horizontal;
    long cells = 0;

    CellShift reversed() const { return {axis, -cells}; }
    bool operator==(const CellShift&) const = default;
};

/// A configured shift, measured in input pixels.
struct ShiftSpec {
    ShiftAxis axis = ShiftAxis::Horizontal;
    std::size_t distance = 1;

    bool operator==(const ShiftSpec&) const = default;
};

/// Horizontal and vertical ShiftSpecs for each distance.
std::vector<ShiftSpec> both_axes(const std::vector<std::size_t>& distances);

/// Channel-by-channel second-order statistic of one feature map.
struct GramMatrix {
    Tensor values;            // (C, C)
    std::size_t count = 0;    // positions the products were averaged over
    std::optional<CellShift> shift;

    std::size_t channels() const { return values.extent(0); }
};

/// G_ij = (1/M) sum_k F_ik F_jk over a (C, H, W) or (C, M) map. Exactly symmetric.
GramMatrix gram(const Tensor& features);

/// Pixel distance to feature cells at a layer with the given cumulative stride:
/// round(distance / stride).
long shift_cells(std::size_t distance, std::size_t layer_stride);

/// Shifted Gram for a ShiftSpec at a layer; std::nullopt when the cell shift
/// rounds below 1 or reaches the map extent along the axis.
std::optional<GramMatrix> shifted_gram(const Tensor& features, const ShiftSpec& shift, std::size_t layer_stride);

/// G_ij = (1/|O|) sum_{p in O} F_i(p) F_j(p + shift) over the overlap region O
/// of a (C, H, W) map. Requires |cells| < extent along the axis; a zero shift
/// spans the whole map. G(+d)_ij == G(-d)_ji bit for bit.
GramMatrix shifted_gram(const Tensor& features, const CellShift& shift);

/// Frame- or pair-average of Grams with identical shape and shift.
GramMatrix mean_gram(const std::vector<GramMatrix>& grams);

/// (1/M) sum_ij (target_ij - synth_ij)^2. Throws on shape or shift mismatch.
double appearance_layer_loss(const GramMatrix& target, const GramMatrix& synth, std::size_t positions);
double dynamics_layer_loss(const GramMatrix& target, const GramMatrix& synth, std::size_t positions);

/// d loss / d synth for the layer loss above: (2/M) (synth - target).
Tensor layer_loss_gradient(const GramMatrix& target, const GramMatrix& synth, std::size_t positions);

/// Gradient with respect to the features given dL/dG for a (shifted) Gram of
/// those features, scaled by `scale` (e.g. 1/frames for frame averaging).
/// Accumulates into `out`, which must have the features' shape.
void gram_backward(const Tensor& features, const Tensor& gram_grad, std::size_t count,
                   const std::optional<CellShift>& shift, double scale, Tensor& out);

/// Loss weights and statistic selection.
struct LossConfig {
    /// w_l for conv1, pool1..pool4.
    std::array<double, kAppearanceTapCount> layer_weights{0.2, 0.2, 0.2, 0.2, 0.2};
    std::vector<ShiftSpec> shifts = both_axes({8, 16, 32, 128});
    std::vector<std::size_t> intervals{1, 2, 4};
    /// alpha_t, parallel to `intervals`.
    std::vector<double> interval_weights{1.0 / 3, 1.0 / 3, 1.0 / 3};
    /// beta for the single dynamics tap.
    double dynamics_layer_weight = 1.0;
    /// Multiplier on the total dynamics loss.
    double lambda = 1.0;
    unsigned pyramid_scales = 3;

    /// No shifts, intervals {1}.
    static LossConfig baseline();

    /// Throws ConfigError naming the field ("layer_weights", "intervals", ...).
    void validate() const;
    /// Also checks every interval against the frame count.
    void validate(std::size_t frames) const;

    double interval_weight(std::size_t interval) const;
};

}  // namespace dyntex
