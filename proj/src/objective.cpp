#include "dyntex/objective.hpp"

#include <algorithm>

#include "dyntex/error.hpp"

namespace dyntex {

namespace {

struct ShiftTerm {
    std::size_t index;  // into the shift list
    CellShift cells;
};

// Shifts that survive the pixel-to-cell rule at one tap.
std::vector<ShiftTerm> active_shifts(const std::vector<ShiftSpec>& shifts, std::size_t stride, std::size_t height,
                                     std::size_t width) {
    std::vector<ShiftTerm> out;
    for (std::size_t s = 0; s < shifts.size(); ++s) {
        const long d = shift_cells(shifts[s].distance, stride);
        const std::size_t extent = shifts[s].axis == ShiftAxis::Horizontal ? width : height;
        if (d >= 1 && static_cast<std::size_t>(d) < extent) out.push_back({s, CellShift{shifts[s].axis, d}});
    }
    return out;
}

double appearance_terms(const AppearanceGrams& target, const AppearanceGrams& synth, const LossConfig& config,
                        double& plain_sum, double& shifted_sum) {
    plain_sum = 0.0;
    shifted_sum = 0.0;
    for (std::size_t l = 0; l < kAppearanceTapCount; ++l) {
        const double w = config.layer_weights[l];
        const std::size_t m = target.positions[l];
        plain_sum += w * appearance_layer_loss(target.plain[l], synth.plain[l], m);
        double shifted = 0.0;
        std::size_t active = 0;
        for (std::size_t s = 0; s < target.shifted[l].size(); ++s) {
            if (!target.shifted[l][s]) continue;
            shifted += appearance_layer_loss(*target.shifted[l][s], *synth.shifted[l][s], m);
            ++active;
        }
        if (active > 0) shifted_sum += w * (shifted / static_cast<double>(active));
    }
    return plain_sum + shifted_sum;
}

std::vector<AppearanceTaps> appearance_taps(const VideoTensor& video, const Network& net,
                                            const std::array<double, 3>& mean) {
    std::vector<AppearanceTaps> taps;
    taps.reserve(video.frames());
    for (std::size_t f = 0; f < video.frames(); ++f) taps.push_back(extract_appearance(video.frame(f), net, mean).taps);
    return taps;
}

void check_interval(std::size_t interval, std::size_t frames, const char* where) {
    if (interval == 0) throw ConfigError("intervals", std::string(where) + ": interval must be >= 1");
    if (interval >= frames)
        throw ConfigError("intervals", std::string(where) + ": interval " + std::to_string(interval) +
                                           " needs more than " + std::to_string(frames) + " frames");
}

}  // namespace

AppearanceGrams appearance_grams(std::span<const AppearanceTaps> frames, const std::vector<ShiftSpec>& shifts) {
    if (frames.empty()) throw Error("appearance_grams: no frames");
    AppearanceGrams out;
    for (std::size_t l = 0; l < kAppearanceTapCount; ++l) {
        const Tensor& first = frames.front().maps[l];
        const std::size_t h = first.extent(1), w = first.extent(2);
        out.positions[l] = h * w;
        std::vector<GramMatrix> per_frame;
        for (const AppearanceTaps& t : frames) {
            if (t.maps[l].shape() != first.shape())
                throw ShapeError("appearance_grams", "tap " + kAppearanceTapLabels[l] + " shape",
                                 shape_string(first.shape()) + " vs " + shape_string(t.maps[l].shape()));
            per_frame.push_back(gram(t.maps[l]));
        }
        out.plain[l] = mean_gram(per_frame);

        out.shifted[l].assign(shifts.size(), std::nullopt);
        for (const ShiftTerm& term : active_shifts(shifts, kAppearanceTapStrides[l], h, w)) {
            per_frame.clear();
            for (const AppearanceTaps& t : frames) per_frame.push_back(shifted_gram(t.maps[l], term.cells));
            out.shifted[l][term.index] = mean_gram(per_frame);
        }
    }
    return out;
}

std::size_t ExemplarStats::active_shift_count(std::size_t tap) const {
    return static_cast<std::size_t>(std::count_if(appearance.shifted.at(tap).begin(), appearance.shifted.at(tap).end(),
                                                  [](const auto& g) { return g.has_value(); }));
}

std::size_t ExemplarStats::gram_count() const {
    std::size_t n = dynamics.size();
    for (std::size_t l = 0; l < kAppearanceTapCount; ++l) n += 1 + active_shift_count(l);
    return n;
}

GramMatrix dynamics_gram(const VideoTensor& video, std::size_t interval, const Network& dynamics, unsigned scales) {
    check_interval(interval, video.frames(), "dynamics_gram");
    std::vector<GramMatrix> per_pair;
    for (std::size_t i = 0; i + interval < video.frames(); ++i) {
        const DynamicsForward fwd = extract_dynamics(video.frame(i), video.frame(i + interval), dynamics, scales);
        per_pair.push_back(gram(fwd.features.combined));
    }
    return mean_gram(per_pair);
}

ExemplarStats precompute_exemplar_stats(const VideoTensor& exemplar, const Network& appearance,
                                        const Network& dynamics, const LossConfig& config) {
    config.validate();
    if (exemplar.frames() < 2) throw ShapeError("precompute_exemplar_stats", "exemplar frames", "must be >= 2");
    ExemplarStats stats;
    stats.frames = exemplar.frames();
    stats.height = exemplar.height();
    stats.width = exemplar.width();
    stats.channel_mean = exemplar.channel_mean();
    stats.shifts = config.shifts;
    stats.pyramid_scales = config.pyramid_scales;

    const auto taps = appearance_taps(exemplar, appearance, stats.channel_mean);
    stats.appearance = appearance_grams(taps, config.shifts);

    stats.dynamics_positions = exemplar.height() * exemplar.width();
    for (std::size_t t : config.intervals) {
        if (t >= exemplar.frames()) continue;
        stats.dynamics.emplace(t, dynamics_gram(exemplar, t, dynamics, config.pyramid_scales));
    }
    return stats;
}

double appearance_loss(std::span<const AppearanceTaps> exemplar, std::span<const AppearanceTaps> synth,
                       const LossConfig& config) {
    config.validate();
    const AppearanceGrams target = appearance_grams(exemplar, config.shifts);
    const AppearanceGrams candidate = appearance_grams(synth, config.shifts);
    double plain = 0.0, shifted = 0.0;
    return appearance_terms(target, candidate, config, plain, shifted);
}

double dynamics_loss_interval(const VideoTensor& exemplar, const VideoTensor& synth, std::size_t interval,
                              const Network& dynamics, const LossConfig& config) {
    check_interval(interval, exemplar.frames(), "dynamics_loss_interval");
    check_interval(interval, synth.frames(), "dynamics_loss_interval");
    const GramMatrix target = dynamics_gram(exemplar, interval, dynamics, config.pyramid_scales);
    const GramMatrix candidate = dynamics_gram(synth, interval, dynamics, config.pyramid_scales);
    return config.dynamics_layer_weight *
           dynamics_layer_loss(target, candidate, exemplar.height() * exemplar.width());
}

double total_dynamics_loss(const VideoTensor& exemplar, const VideoTensor& synth, const Network& dynamics,
                           const LossConfig& config) {
    config.validate();
    double total = 0.0;
    for (std::size_t k = 0; k < config.intervals.size(); ++k) {
        if (config.interval_weights[k] == 0.0) continue;
        total += config.interval_weights[k] *
                 dynamics_loss_interval(exemplar, synth, config.intervals[k], dynamics, config);
    }
    return total;
}

double LossBreakdown::dynamics_total() const {
    double s = 0.0;
    for (const IntervalLoss& t : dynamics) s += t.weighted;
    return s;
}

double LossBreakdown::sum() const { return appearance_plain + appearance_shifted + dynamics_total(); }

TextureObjective::TextureObjective(ExemplarStats stats, const Network& appearance, const Network& dynamics,
                                   LossConfig config)
    : stats_(std::move(stats)), appearance_(&appearance), dynamics_(&dynamics), config_(std::move(config)) {
    config_.validate();
    if (config_.shifts != stats_.shifts) throw ConfigError("shifts", "do not match the precomputed exemplar statistics");
    if (config_.pyramid_scales != stats_.pyramid_scales)
        throw ConfigError("pyramid_scales", "does not match the precomputed exemplar statistics");
    for (std::size_t t : config_.intervals)
        if (!stats_.dynamics.count(t))
            throw ConfigError("intervals", "interval " + std::to_string(t) + " needs more than " +
                                               std::to_string(stats_.frames) + " exemplar frames");
}

void TextureObjective::check(const VideoTensor& synth) const {
    if (synth.height() != stats_.height) throw ShapeError("TextureObjective", "frame height", stats_.height, synth.height());
    if (synth.width() != stats_.width) throw ShapeError("TextureObjective", "frame width", stats_.width, synth.width());
    config_.validate(synth.frames());
}

ObjectiveResult TextureObjective::evaluate(const VideoTensor& synth, bool with_gradient) const {
    check(synth);
    const std::size_t n = synth.frames();
    ObjectiveResult result;
    if (with_gradient) result.gradient = Tensor(synth.tensor().shape());

    // Appearance stream.
    std::vector<AppearanceForward> forwards;
    forwards.reserve(n);
    std::vector<AppearanceTaps> taps;
    taps.reserve(n);
    for (std::size_t f = 0; f < n; ++f) {
        forwards.push_back(extract_appearance(synth.frame(f), *appearance_, stats_.channel_mean));
        taps.push_back(forwards.back().taps);
    }
    const AppearanceGrams current = appearance_grams(taps, stats_.shifts);
    appearance_terms(stats_.appearance, current, config_, result.loss.appearance_plain,
                     result.loss.appearance_shifted);

    if (with_gradient) {
        const double frame_scale = 1.0 / static_cast<double>(n);
        std::vector<std::array<Tensor, kAppearanceTapCount>> tap_grads(n);
        for (std::size_t l = 0; l < kAppearanceTapCount; ++l) {
            const double w = config_.layer_weights[l];
            if (w == 0.0) continue;
            const std::size_t m = stats_.appearance.positions[l];
            for (std::size_t f = 0; f < n; ++f) tap_grads[f][l] = Tensor(taps[f].maps[l].shape());

            Tensor g = layer_loss_gradient(stats_.appearance.plain[l], current.plain[l], m);
            g *= w;
            for (std::size_t f = 0; f < n; ++f)
                gram_backward(taps[f].maps[l], g, current.plain[l].count, std::nullopt, frame_scale, tap_grads[f][l]);

            const std::size_t active = stats_.active_shift_count(l);
            for (std::size_t s = 0; s < stats_.shifts.size(); ++s) {
                const auto& target = stats_.appearance.shifted[l][s];
                if (!target) continue;
                const GramMatrix& cur = *current.shifted[l][s];
                Tensor gs = layer_loss_gradient(*target, cur, m);
                gs *= w / static_cast<double>(active);
                for (std::size_t f = 0; f < n; ++f)
                    gram_backward(taps[f].maps[l], gs, cur.count, cur.shift, frame_scale, tap_grads[f][l]);
            }
        }
        for (std::size_t f = 0; f < n; ++f) {
            const Tensor g = appearance_backward(forwards[f], *appearance_, tap_grads[f]);
            std::copy(g.data(), g.data() + g.size(), result.gradient.data() + f * synth.frame_size());
        }
    }
    forwards.clear();

    // Dynamics stream.
    for (std::size_t k = 0; k < config_.intervals.size(); ++k) {
        const std::size_t t = config_.intervals[k];
        IntervalLoss term{t, 0.0, 0.0};
        const double weight = config_.lambda * config_.interval_weights[k] * config_.dynamics_layer_weight;
        if (weight == 0.0) {
            result.loss.dynamics.push_back(term);
            continue;
        }
        const std::size_t pairs = n - t;
        std::vector<DynamicsForward> pair_fwd;
        std::vector<GramMatrix> grams;
        pair_fwd.reserve(pairs);
        for (std::size_t i = 0; i < pairs; ++i) {
            pair_fwd.push_back(extract_dynamics(synth.frame(i), synth.frame(i + t), *dynamics_, config_.pyramid_scales));
            grams.push_back(gram(pair_fwd.back().features.combined));
        }
        const GramMatrix current = mean_gram(grams);
        const GramMatrix& target = stats_.dynamics.at(t);
        term.loss = config_.dynamics_layer_weight * dynamics_layer_loss(target, current, stats_.dynamics_positions);
        term.weighted = config_.lambda * config_.interval_weights[k] * term.loss;
        result.loss.dynamics.push_back(term);

        if (!with_gradient) continue;
        Tensor g = layer_loss_gradient(target, current, stats_.dynamics_positions);
        g *= weight;
        const double pair_scale = 1.0 / static_cast<double>(pairs);
        for (std::size_t i = 0; i < pairs; ++i) {
            const Tensor& features = pair_fwd[i].features.combined;
            Tensor feature_grad(features.shape());
            gram_backward(features, g, current.count, std::nullopt, pair_scale, feature_grad);
            const FramePairGradient pg = dynamics_backward(pair_fwd[i], *dynamics_, feature_grad);
            double* a = result.gradient.data() + i * synth.frame_size();
            double* b = result.gradient.data() + (i + t) * synth.frame_size();
            for (std::size_t p = 0; p < synth.frame_size(); ++p) {
                a[p] += pg.first[p];
                b[p] += pg.second[p];
            }
        }
    }

    result.loss.total = result.loss.sum();
    return result;
}

}  // namespace dyntex
