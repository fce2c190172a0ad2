#include <gtest/gtest.h>

#include "dyntex/error.hpp"
#include "dyntex/objective.hpp"
#include "dyntex/synthesizer.hpp"
#include "dyntex/video_io.hpp"
#include "oracles.hpp"

using namespace dyntex;

namespace {

// Hand-built taps: small random maps with the real stride layout, so the
// Gram and loss assembly can be checked without running the networks.
AppearanceTaps random_taps(std::uint64_t seed, std::size_t extent = 16, std::size_t channels = 2) {
    AppearanceTaps t;
    for (std::size_t l = 0; l < kAppearanceTapCount; ++l) {
        const std::size_t e = std::max<std::size_t>(1, extent / kAppearanceTapStrides[l]);
        t.maps[l] = oracle::random_tensor({channels, e, e}, seed * 10 + l);
    }
    return t;
}

std::vector<std::vector<Tensor>> as_lists(const std::vector<AppearanceTaps>& frames) {
    std::vector<std::vector<Tensor>> out;
    for (const AppearanceTaps& f : frames) out.emplace_back(f.maps.begin(), f.maps.end());
    return out;
}

VideoTensor random_video(std::size_t frames, std::size_t size, std::uint64_t seed) {
    return VideoTensor(oracle::random_tensor({frames, size, size, 3}, seed, 0.0, 1.0));
}

VideoTensor video_of(const std::vector<Tensor>& frames) {
    VideoTensor v(frames.size(), frames[0].extent(0), frames[0].extent(1));
    for (std::size_t i = 0; i < frames.size(); ++i) v.set_frame(i, frames[i]);
    return v;
}

struct Fixture {
    Network appearance = build_appearance_net(101);
    Network dynamics = build_dynamics_net(202);
};

Fixture& nets() {
    static Fixture f;
    return f;
}

LossConfig small_config() {
    LossConfig c;
    c.shifts = both_axes({8});
    c.intervals = {1, 2};
    c.interval_weights = {0.5, 0.5};
    c.pyramid_scales = 1;
    return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Appearance loss assembly

TEST(AppearanceLoss, MatchesOracleOnRandomInstances) {
    const std::vector<std::size_t> strides(kAppearanceTapStrides.begin(), kAppearanceTapStrides.end());
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::vector<AppearanceTaps> ex{random_taps(4 * seed), random_taps(4 * seed + 1)};
        std::vector<AppearanceTaps> sy{random_taps(4 * seed + 2), random_taps(4 * seed + 3), random_taps(4 * seed + 7)};
        LossConfig c;
        c.shifts = both_axes({4, 8, 16});
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (double& w : c.layer_weights) w = u(rng);
        const double expected = oracle::appearance_loss(as_lists(ex), as_lists(sy),
                                                        {c.layer_weights.begin(), c.layer_weights.end()}, strides,
                                                        c.shifts);
        EXPECT_NEAR(appearance_loss(ex, sy, c), expected, 1e-10 * std::max(1.0, expected)) << "seed " << seed;
    }
}

TEST(AppearanceLoss, HandBuiltOneLayerOneShift) {
    // Two channels on a 4x4 grid at the stride-1 tap; every other tap is
    // weighted out.
    AppearanceTaps ex = random_taps(1, 4), sy = random_taps(2, 4);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) {
            ex.maps[0].at({0, y, x}) = static_cast<double>(x);
            ex.maps[0].at({1, y, x}) = static_cast<double>(y * x) / 3.0;
            sy.maps[0].at({0, y, x}) = static_cast<double>((x + y) % 2);
            sy.maps[0].at({1, y, x}) = 1.0;
        }
    LossConfig c;
    c.layer_weights = {1.0, 0, 0, 0, 0};
    c.shifts = {ShiftSpec{ShiftAxis::Horizontal, 1}};
    // The shifted term pairs each position with x + 1 over 12 overlap cells.
    const Tensor g_ex = oracle::gram(ex.maps[0]), g_sy = oracle::gram(sy.maps[0]);
    const Tensor s_ex = oracle::shifted_gram(ex.maps[0], 0, 1), s_sy = oracle::shifted_gram(sy.maps[0], 0, 1);
    const double expected = oracle::layer_loss(g_ex, g_sy, 16) + oracle::layer_loss(s_ex, s_sy, 16);
    const std::vector<AppearanceTaps> e{ex}, s{sy};
    EXPECT_NEAR(appearance_loss(e, s, c), expected, 1e-10);
}

TEST(AppearanceLoss, ZeroWhenSynthEqualsExemplar) {
    const std::vector<AppearanceTaps> frames{random_taps(5), random_taps(6)};
    EXPECT_EQ(appearance_loss(frames, frames, LossConfig{}), 0.0);
}

TEST(AppearanceLoss, EmptyShiftSetIsBaselineAppearanceLoss) {
    const std::vector<AppearanceTaps> ex{random_taps(7)}, sy{random_taps(8)};
    LossConfig c;
    c.shifts.clear();
    double plain = 0.0;
    for (std::size_t l = 0; l < kAppearanceTapCount; ++l)
        plain += 0.2 * appearance_layer_loss(gram(ex[0].maps[l]), gram(sy[0].maps[l]), ex[0].maps[l].size() / 2);
    EXPECT_EQ(appearance_loss(ex, sy, c), appearance_loss(ex, sy, LossConfig::baseline()));
    EXPECT_NEAR(appearance_loss(ex, sy, c), plain, 1e-15);
}

TEST(AppearanceLoss, NoActiveLayerIsConfigError) {
    const std::vector<AppearanceTaps> f{random_taps(9)};
    LossConfig c;
    c.layer_weights = {0, 0, 0, 0, 0};
    EXPECT_THROW(appearance_loss(f, f, c), ConfigError);
}

// ---------------------------------------------------------------------------
// Dynamics loss

TEST(DynamicsLoss, ZeroForEqualVideosAtEveryInterval) {
    const VideoTensor v = random_video(5, 16, 1);
    LossConfig c = small_config();
    for (std::size_t t = 1; t < 5; ++t) EXPECT_EQ(dynamics_loss_interval(v, v, t, nets().dynamics, c), 0.0);
}

TEST(DynamicsLoss, IntervalNotShorterThanVideoIsError) {
    const VideoTensor v = random_video(3, 16, 2);
    try {
        dynamics_loss_interval(v, v, 3, nets().dynamics, small_config());
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "intervals");
    }
}

TEST(DynamicsLoss, IntervalOneIsConsecutivePairBaseline) {
    const VideoTensor a = random_video(4, 16, 3), b = random_video(4, 16, 4);
    LossConfig c = small_config();
    // Baseline: pair-averaged Grams over consecutive frames.
    auto stats = [&](const VideoTensor& v) {
        std::vector<Tensor> grams;
        for (std::size_t i = 0; i + 1 < v.frames(); ++i)
            grams.push_back(oracle::gram(extract_dynamics(v.frame(i), v.frame(i + 1), nets().dynamics, 1).features.combined));
        return oracle::mean(grams);
    };
    const double expected = oracle::layer_loss(stats(a), stats(b), 16 * 16);
    EXPECT_NEAR(dynamics_loss_interval(a, b, 1, nets().dynamics, c), expected, 1e-10 * std::max(1.0, expected));
}

TEST(DynamicsLoss, MatchesOracleOnRandomInstances) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const VideoTensor a = random_video(4, 16, 10 + seed), b = random_video(4, 16, 20 + seed);
        for (std::size_t t : {1, 2, 3}) {
            std::vector<Tensor> ga, gb;
            for (std::size_t i = 0; i + t < 4; ++i) {
                ga.push_back(oracle::gram(extract_dynamics(a.frame(i), a.frame(i + t), nets().dynamics, 1).features.combined));
                gb.push_back(oracle::gram(extract_dynamics(b.frame(i), b.frame(i + t), nets().dynamics, 1).features.combined));
            }
            const double expected = oracle::layer_loss(oracle::mean(ga), oracle::mean(gb), 256);
            EXPECT_NEAR(dynamics_loss_interval(a, b, t, nets().dynamics, small_config()), expected,
                        1e-10 * std::max(1.0, expected));
        }
    }
}

TEST(DynamicsLoss, PeriodTwoPairsAreStaticPairs) {
    // Frames ABAB: every interval-2 pair is a repeated frame, so its Gram is
    // the static pair's Gram, and the pair average is the average of the
    // static-A and static-B statistics.
    const VideoTensor flicker = make_exemplar(ExemplarKind::Period2Flicker, 16, 4, 3);
    const Tensor a = flicker.frame(0), b = flicker.frame(1);
    const VideoTensor static_a = video_of({a, a, a, a}), static_b = video_of({b, b, b, b});
    const GramMatrix g_flicker = dynamics_gram(flicker, 2, nets().dynamics, 1);
    const GramMatrix g_a = dynamics_gram(static_a, 2, nets().dynamics, 1);
    const GramMatrix g_b = dynamics_gram(static_b, 2, nets().dynamics, 1);
    const GramMatrix pair_a = gram(extract_dynamics(a, a, nets().dynamics, 1).features.combined);
    EXPECT_EQ(gram(extract_dynamics(flicker.frame(0), flicker.frame(2), nets().dynamics, 1).features.combined).values,
              pair_a.values);
    EXPECT_LE(max_abs_difference(g_a.values, pair_a.values), 1e-12);
    EXPECT_LE(max_abs_difference(g_flicker.values, mean_gram({g_a, g_b}).values), 1e-12);
}

TEST(DynamicsLoss, TotalWithSingleIntervalEqualsIntervalLoss) {
    const VideoTensor a = random_video(3, 16, 30), b = random_video(3, 16, 31);
    LossConfig c = small_config();
    c.intervals = {1};
    c.interval_weights = {1.0};
    EXPECT_EQ(total_dynamics_loss(a, b, nets().dynamics, c), dynamics_loss_interval(a, b, 1, nets().dynamics, c));
    c.interval_weights = {0.0};
    EXPECT_EQ(total_dynamics_loss(a, b, nets().dynamics, c), 0.0);
}

// ---------------------------------------------------------------------------
// Exemplar statistics bundle

TEST(ExemplarStats, TwoFrameExemplarHasNoIntervalTwo) {
    const VideoTensor ex = random_video(2, 16, 40);
    const ExemplarStats s = precompute_exemplar_stats(ex, nets().appearance, nets().dynamics, small_config());
    EXPECT_EQ(s.dynamics.count(1), 1u);
    EXPECT_EQ(s.dynamics.count(2), 0u);
}

TEST(ExemplarStats, GramCountMatchesEnumeration) {
    const VideoTensor ex = random_video(5, 32, 41);
    LossConfig c;
    c.pyramid_scales = 2;
    const ExemplarStats s = precompute_exemplar_stats(ex, nets().appearance, nets().dynamics, c);
    // Enumerate active shifts per tap by hand: extents 32, 16, 8, 4, 2.
    std::size_t expected = 0;
    for (std::size_t l = 0; l < kAppearanceTapCount; ++l) {
        const long extent = static_cast<long>(32 / kAppearanceTapStrides[l]);
        std::size_t active = 0;
        for (const ShiftSpec& sh : c.shifts) {
            const long d = oracle::cells(sh.distance, kAppearanceTapStrides[l]);
            if (d >= 1 && d < extent) ++active;
        }
        expected += 1 + active;
    }
    expected += 1 * 3;  // one dynamics tap, intervals {1, 2, 4}
    EXPECT_EQ(s.gram_count(), expected);
}

TEST(ExemplarStats, CachedAndRecomputedStatsAgree) {
    const VideoTensor ex = random_video(3, 16, 42), synth = random_video(3, 16, 43);
    const LossConfig c = small_config();
    const TextureObjective cached(precompute_exemplar_stats(ex, nets().appearance, nets().dynamics, c),
                                  nets().appearance, nets().dynamics, c);
    const double first = cached.evaluate(synth, false).loss.total;
    const double second = cached.evaluate(synth, false).loss.total;
    const TextureObjective fresh(precompute_exemplar_stats(ex, nets().appearance, nets().dynamics, c),
                                 nets().appearance, nets().dynamics, c);
    EXPECT_EQ(first, second);
    EXPECT_EQ(first, fresh.evaluate(synth, false).loss.total);
}

// ---------------------------------------------------------------------------
// Total objective

TEST(Objective, ZeroLossAndGradientAtExemplar) {
    const VideoTensor ex = make_exemplar(ExemplarKind::DriftingGrating, 16, 3, 5);
    const LossConfig c = small_config();
    const TextureObjective obj(precompute_exemplar_stats(ex, nets().appearance, nets().dynamics, c),
                               nets().appearance, nets().dynamics, c);
    const ObjectiveResult r = obj.evaluate(ex);
    EXPECT_EQ(r.loss.total, 0.0);
    for (double g : r.gradient.values()) EXPECT_EQ(g, 0.0);
}

TEST(Objective, TotalMatchesStandaloneTerms) {
    const VideoTensor ex = random_video(3, 16, 50), synth = random_video(3, 16, 51);
    const LossConfig c = small_config();
    const TextureObjective obj(precompute_exemplar_stats(ex, nets().appearance, nets().dynamics, c),
                               nets().appearance, nets().dynamics, c);
    const ObjectiveResult r = obj.evaluate(synth, false);
    std::vector<AppearanceTaps> te, ts;
    for (std::size_t f = 0; f < 3; ++f) {
        te.push_back(extract_appearance(ex.frame(f), nets().appearance, ex.channel_mean()).taps);
        ts.push_back(extract_appearance(synth.frame(f), nets().appearance, ex.channel_mean()).taps);
    }
    const double expected = appearance_loss(te, ts, c) + c.lambda * total_dynamics_loss(ex, synth, nets().dynamics, c);
    EXPECT_NEAR(r.loss.total, expected, 1e-12 * expected);
    EXPECT_NEAR(r.loss.sum(), r.loss.total, 1e-9);
}

TEST(Objective, GradientMatchesFiniteDifferencesOnSampledPixels) {
    const VideoTensor ex = make_exemplar(ExemplarKind::DriftingGrating, 16, 3, 6);
    const LossConfig c = small_config();
    const TextureObjective obj(precompute_exemplar_stats(ex, nets().appearance, nets().dynamics, c),
                               nets().appearance, nets().dynamics, c);
    VideoTensor v = noise_initialization(ex, 3, 7);
    const ObjectiveResult r = obj.evaluate(v);
    double scale = 0.0;
    for (double g : r.gradient.values()) scale = std::max(scale, std::abs(g));
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<std::size_t> pick(0, v.tensor().size() - 1);
    double worst = 0.0;
    for (int k = 0; k < 60; ++k) {
        const std::size_t i = pick(rng);
        const double orig = v.tensor()[i];
        v.tensor()[i] = orig + 1e-6;
        const double plus = obj.evaluate(v, false).loss.total;
        v.tensor()[i] = orig - 1e-6;
        const double minus = obj.evaluate(v, false).loss.total;
        v.tensor()[i] = orig;
        const double numeric = (plus - minus) / 2e-6;
        worst = std::max(worst, std::abs(numeric - r.gradient[i]) /
                                    std::max({std::abs(numeric), std::abs(r.gradient[i]), 1e-6 * scale}));
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(Objective, LambdaZeroIsPureAppearanceMatching) {
    const VideoTensor ex = random_video(3, 16, 60), synth = random_video(3, 16, 61);
    LossConfig c = small_config();
    c.lambda = 0.0;
    const TextureObjective obj(precompute_exemplar_stats(ex, nets().appearance, nets().dynamics, c),
                               nets().appearance, nets().dynamics, c);
    const ObjectiveResult r = obj.evaluate(synth);
    EXPECT_EQ(r.loss.dynamics_total(), 0.0);
    std::vector<AppearanceTaps> te, ts;
    for (std::size_t f = 0; f < 3; ++f) {
        te.push_back(extract_appearance(ex.frame(f), nets().appearance, ex.channel_mean()).taps);
        ts.push_back(extract_appearance(synth.frame(f), nets().appearance, ex.channel_mean()).taps);
    }
    EXPECT_NEAR(r.loss.total, appearance_loss(te, ts, c), 1e-12 * r.loss.total);
    VideoTensor probe = synth;
    const std::size_t i = 2 * synth.frame_size() + 100;
    probe.tensor()[i] += 1e-6;
    const double plus = obj.evaluate(probe, false).loss.total;
    probe.tensor()[i] -= 2e-6;
    const double minus = obj.evaluate(probe, false).loss.total;
    EXPECT_NEAR((plus - minus) / 2e-6, r.gradient[i], 1e-4 * std::abs(r.gradient[i]));
}

TEST(Objective, BaselineConfigMatchesBaselinePath) {
    const VideoTensor ex = random_video(3, 16, 70), synth = random_video(3, 16, 71);
    LossConfig c = LossConfig::baseline();
    c.pyramid_scales = 1;
    const TextureObjective obj(precompute_exemplar_stats(ex, nets().appearance, nets().dynamics, c),
                               nets().appearance, nets().dynamics, c);
    std::vector<AppearanceTaps> te, ts;
    for (std::size_t f = 0; f < 3; ++f) {
        te.push_back(extract_appearance(ex.frame(f), nets().appearance, ex.channel_mean()).taps);
        ts.push_back(extract_appearance(synth.frame(f), nets().appearance, ex.channel_mean()).taps);
    }
    const ObjectiveResult r = obj.evaluate(synth, false);
    EXPECT_EQ(r.loss.appearance_shifted, 0.0);
    ASSERT_EQ(r.loss.dynamics.size(), 1u);
    const double expected = appearance_loss(te, ts, c) + dynamics_loss_interval(ex, synth, 1, nets().dynamics, c);
    EXPECT_NEAR(r.loss.total, expected, 1e-12 * expected);
}

TEST(Objective, WrongGeometryIsShapeError) {
    const VideoTensor ex = random_video(3, 16, 80);
    const LossConfig c = small_config();
    const TextureObjective obj(precompute_exemplar_stats(ex, nets().appearance, nets().dynamics, c),
                               nets().appearance, nets().dynamics, c);
    EXPECT_THROW(obj.evaluate(random_video(3, 20, 81)), ShapeError);
    EXPECT_THROW(obj.evaluate(random_video(2, 16, 82)), ConfigError);  // interval 2 needs 3 frames
}
