#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "dyntex/error.hpp"
#include "dyntex/texture_stats.hpp"
#include "oracles.hpp"

using namespace dyntex;

namespace {

// F_i(x, y) = x in every channel (varies along the horizontal axis only).
Tensor ramp(std::size_t channels, std::size_t n) {
    Tensor f({channels, n, n});
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) f.at({c, y, x}) = static_cast<double>(x);
    return f;
}

Tensor permute_positions(const Tensor& f, std::uint64_t seed) {
    const std::size_t c = f.extent(0), m = f.size() / c;
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor out(f.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t k = 0; k < m; ++k) out[ch * m + k] = f[ch * m + perm[k]];
    return out;
}

}  // namespace

TEST(Gram, ConstantSingleChannel) {
    const GramMatrix g = gram(Tensor({1, 2, 2}, 1.0));
    EXPECT_EQ(g.values.shape(), (Shape{1, 1}));
    EXPECT_EQ(g.values[0], 1.0);
    EXPECT_EQ(g.count, 4u);
}

TEST(Gram, OrthogonalChannels) {
    const GramMatrix g = gram(Tensor({2, 2}, std::vector<double>{1, 0, 0, 1}));
    EXPECT_EQ(g.values, Tensor({2, 2}, std::vector<double>{0.5, 0, 0, 0.5}));
}

TEST(Gram, MatchesOracleOnRandomMaps) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Tensor f = oracle::random_tensor({3, 2, 4}, seed);
        EXPECT_LE(max_abs_difference(gram(f).values, oracle::gram(f)), 1e-12);
    }
}

TEST(Gram, SymmetricAndPositiveSemidefinite) {
    const Tensor f = oracle::random_tensor({6, 5, 5}, 3);
    const GramMatrix g = gram(f);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(g.values.at({i, j}), g.values.at({j, i}));
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Tensor v = oracle::random_tensor({6}, 100 + s);
        double q = 0.0;
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j) q += v[i] * g.values.at({i, j}) * v[j];
        EXPECT_GE(q, -1e-12);
    }
}

TEST(Gram, InvariantUnderSpatialPermutation) {
    const Tensor f = oracle::random_tensor({4, 8, 8}, 9);
    for (std::uint64_t seed = 0; seed < 10; ++seed)
        EXPECT_LE(max_abs_difference(gram(f).values, gram(permute_positions(f, seed)).values), 1e-12);
}

TEST(ShiftedGram, OverlapEnumerationExample) {
    const Tensor f({1, 1, 4}, std::vector<double>{1, 2, 3, 4});
    const GramMatrix g = shifted_gram(f, CellShift{ShiftAxis::Horizontal, 1});
    EXPECT_NEAR(g.values[0], 20.0 / 3.0, 1e-15);
    EXPECT_EQ(g.count, 3u);
}

TEST(ShiftedGram, MatchesOracleOnRandomMaps) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Tensor f = oracle::random_tensor({3, 5, 6}, 1000 + seed);
        for (ShiftAxis axis : {ShiftAxis::Horizontal, ShiftAxis::Vertical})
            for (long d : {-3L, -1L, 1L, 2L, 4L}) {
                const GramMatrix g = shifted_gram(f, CellShift{axis, d});
                EXPECT_LE(max_abs_difference(g.values, oracle::shifted_gram(f, axis, d)), 1e-12);
            }
    }
}

TEST(ShiftedGram, ReversedShiftIsExactTranspose) {
    const Tensor f = oracle::random_tensor({7, 9, 9}, 4);
    for (ShiftAxis axis : {ShiftAxis::Horizontal, ShiftAxis::Vertical})
        for (long d = 1; d < 9; ++d) {
            const GramMatrix plus = shifted_gram(f, CellShift{axis, d});
            const GramMatrix minus = shifted_gram(f, CellShift{axis, -d});
            for (std::size_t i = 0; i < 7; ++i)
                for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(plus.values.at({i, j}), minus.values.at({j, i}));
        }
}

TEST(ShiftedGram, ZeroShiftEqualsPlainGram) {
    const Tensor f = oracle::random_tensor({3, 4, 5}, 6);
    EXPECT_LE(max_abs_difference(shifted_gram(f, CellShift{ShiftAxis::Vertical, 0}).values, gram(f).values), 1e-15);
}

TEST(ShiftedGram, SkipRule) {
    const Tensor f = oracle::random_tensor({2, 16, 16}, 7);
    // Rounds to zero cells at stride 16: skipped.
    EXPECT_FALSE(shifted_gram(f, ShiftSpec{ShiftAxis::Horizontal, 7}, 16).has_value());
    // 128 cells on a 16-wide map: skipped.
    EXPECT_FALSE(shifted_gram(f, ShiftSpec{ShiftAxis::Horizontal, 128}, 1).has_value());
    // 8 pixels at stride 4 -> 2 cells.
    const auto g = shifted_gram(f, ShiftSpec{ShiftAxis::Vertical, 8}, 4);
    ASSERT_TRUE(g.has_value());
    EXPECT_EQ(g->shift, (CellShift{ShiftAxis::Vertical, 2}));
}

TEST(ShiftedGram, PixelToCellRounding) {
    EXPECT_EQ(shift_cells(8, 16), 1);  // half rounds away from zero
    EXPECT_EQ(shift_cells(8, 1), 8);
    EXPECT_EQ(shift_cells(32, 8), 4);
    EXPECT_EQ(shift_cells(5, 8), 1);
    EXPECT_EQ(shift_cells(3, 8), 0);
}

TEST(ShiftedGram, RampIsNotPermutationInvariant) {
    const Tensor f = ramp(2, 8);
    const GramMatrix before = shifted_gram(f, CellShift{ShiftAxis::Horizontal, 1});
    const GramMatrix after = shifted_gram(permute_positions(f, 12345), CellShift{ShiftAxis::Horizontal, 1});
    EXPECT_GT(max_abs_difference(before.values, after.values), 1e-6);
}

TEST(ShiftedGram, OutOfRangeCellShiftIsShapeError) {
    EXPECT_THROW(shifted_gram(Tensor({1, 4, 4}), CellShift{ShiftAxis::Horizontal, 4}), ShapeError);
}

TEST(LayerLoss, ZeroWhenEqualAndSymmetric) {
    const GramMatrix a = gram(oracle::random_tensor({3, 4, 4}, 1));
    const GramMatrix b = gram(oracle::random_tensor({3, 4, 4}, 2));
    EXPECT_EQ(appearance_layer_loss(a, a, 16), 0.0);
    EXPECT_EQ(appearance_layer_loss(a, b, 16), appearance_layer_loss(b, a, 16));
    EXPECT_GE(dynamics_layer_loss(a, b, 16), 0.0);
}

TEST(LayerLoss, MatchesHandSummedOracle) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        GramMatrix a{oracle::random_tensor({2, 2}, 2 * seed), 4, std::nullopt};
        GramMatrix b{oracle::random_tensor({2, 2}, 2 * seed + 1), 4, std::nullopt};
        double expected = 0.0;
        for (std::size_t i = 0; i < 4; ++i) expected += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
        expected /= 4.0;
        EXPECT_NEAR(appearance_layer_loss(a, b, 4), expected, 1e-12);
        EXPECT_NEAR(dynamics_layer_loss(a, b, 4), oracle::layer_loss(a.values, b.values, 4), 1e-12);
    }
}

TEST(LayerLoss, MismatchedShiftIsShapeError) {
    const Tensor f = oracle::random_tensor({2, 4, 4}, 3);
    EXPECT_THROW(appearance_layer_loss(gram(f), shifted_gram(f, CellShift{ShiftAxis::Horizontal, 1}), 16), ShapeError);
    EXPECT_THROW(appearance_layer_loss(gram(f), gram(oracle::random_tensor({3, 4, 4}, 4)), 16), ShapeError);
}

TEST(GramBackward, MatchesFiniteDifferences) {
    const Tensor f = oracle::random_tensor({3, 5, 4}, 50);
    const Tensor target = oracle::random_tensor({3, 3}, 51);
    for (const std::optional<CellShift>& shift :
         {std::optional<CellShift>{}, std::optional<CellShift>{CellShift{ShiftAxis::Horizontal, 2}},
          std::optional<CellShift>{CellShift{ShiftAxis::Vertical, -1}}}) {
        auto stat = [&](const Tensor& v) { return shift ? shifted_gram(v, *shift) : gram(v); };
        const GramMatrix g = stat(f);
        const GramMatrix t{target, g.count, shift};
        Tensor analytic(f.shape());
        gram_backward(f, layer_loss_gradient(t, g, 20), g.count, shift, 1.0, analytic);
        const Tensor numeric =
            oracle::numeric_gradient([&](const Tensor& v) { return oracle::layer_loss(target, stat(v).values, 20); }, f);
        EXPECT_LT(oracle::max_relative_error(analytic, numeric), 1e-6);
    }
}

TEST(LossConfig, DefaultSettings) {
    const LossConfig c;
    EXPECT_EQ(c.shifts, both_axes({8, 16, 32, 128}));
    EXPECT_EQ(c.shifts.size(), 8u);
    EXPECT_EQ(c.intervals, (std::vector<std::size_t>{1, 2, 4}));
    EXPECT_EQ(kAppearanceTapCount, 5u);
    EXPECT_NO_THROW(c.validate());
}

TEST(LossConfig, ValidationNamesKey) {
    LossConfig c;
    c.interval_weights = {1.0};
    try {
        c.validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "interval_weights");
    }
    LossConfig d;
    try {
        d.validate(3);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "intervals");
    }
}
