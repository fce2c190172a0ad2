#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "dyntex/feature_nets.hpp"
#include "dyntex/texture_stats.hpp"
#include "dyntex/video.hpp"

namespace dyntex {

/// Frame-averaged appearance Grams for every tap, plain and shifted.
struct AppearanceGrams {
    std::array<GramMatrix, kAppearanceTapCount> plain;
    /// Parallel to LossConfig::shifts; std::nullopt where the shift is skipped
    /// at that tap.
    std::array<std::vector<std::optional<GramMatrix>>, kAppearanceTapCount> shifted;
    /// Spatial positions M_l of each tap.
    std::array<std::size_t, kAppearanceTapCount> positions{};
};

AppearanceGrams appearance_grams(std::span<const AppearanceTaps> frames, const std::vector<ShiftSpec>& shifts);

/// Targets computed once from the exemplar and reused on every evaluation.
struct ExemplarStats {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::array<double, 3> channel_mean{};
    std::vector<ShiftSpec> shifts;
    AppearanceGrams appearance;
    /// Pair-averaged dynamics Gram per interval (only intervals < frames).
    std::map<std::size_t, GramMatrix> dynamics;
    std::size_t dynamics_positions = 0;
    unsigned pyramid_scales = 0;

    std::size_t active_shift_count(std::size_t tap) const;
    std::size_t gram_count() const;
};

/// Requires at least two frames. Intervals not shorter than the exemplar are
/// left out of the bundle.
ExemplarStats precompute_exemplar_stats(const VideoTensor& exemplar, const Network& appearance,
                                        const Network& dynamics, const LossConfig& config);

/// Pair-averaged Gram of the combined dynamics features over pairs (i, i+t).
GramMatrix dynamics_gram(const VideoTensor& video, std::size_t interval, const Network& dynamics, unsigned scales);

/// sum_l w_l [plain_l + mean over active shifts of shifted_l]; Grams are
/// frame-averaged on each side before differencing.
double appearance_loss(std::span<const AppearanceTaps> exemplar, std::span<const AppearanceTaps> synth,
                       const LossConfig& config);

/// beta * dynamics_layer_loss between pair-averaged interval-t Grams.
double dynamics_loss_interval(const VideoTensor& exemplar, const VideoTensor& synth, std::size_t interval,
                              const Network& dynamics, const LossConfig& config);

/// sum_t alpha_t * dynamics_loss_interval(t).
double total_dynamics_loss(const VideoTensor& exemplar, const VideoTensor& synth, const Network& dynamics,
                           const LossConfig& config);

struct IntervalLoss {
    std::size_t interval = 0;
    /// Unweighted interval loss; left at 0 when its total weight is 0.
    double loss = 0.0;
    /// lambda * alpha_t * loss, the share of the total.
    double weighted = 0.0;
};

struct LossBreakdown {
    double appearance_plain = 0.0;    // sum_l w_l plain_l
    double appearance_shifted = 0.0;  // sum_l w_l mean_s shifted_l,s
    std::vector<IntervalLoss> dynamics;
    double total = 0.0;

    double dynamics_total() const;
    /// appearance_plain + appearance_shifted + sum of weighted interval terms.
    double sum() const;
};

struct ObjectiveResult {
    LossBreakdown loss;
    /// dLoss/dPixel with the video's shape; scalar when not requested.
    Tensor gradient;
};

/// appearance_loss + lambda * total_dynamics_loss against precomputed
/// targets, with its gradient for every pixel.
class TextureObjective {
public:
    /// The networks must outlive the objective.
    TextureObjective(ExemplarStats stats, const Network& appearance, const Network& dynamics, LossConfig config);

    const ExemplarStats& stats() const noexcept { return stats_; }
    const LossConfig& config() const noexcept { return config_; }

    /// Throws ConfigError / ShapeError when the video does not fit the
    /// targets or the configured intervals.
    ObjectiveResult evaluate(const VideoTensor& synth, bool with_gradient = true) const;

private:
    void check(const VideoTensor& synth) const;

    ExemplarStats stats_;
    const Network* appearance_;
    const Network* dynamics_;
    LossConfig config_;
};

}  // namespace dyntex
