#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "dyntex/error.hpp"
#include "dyntex/video_io.hpp"

namespace dyntex {

namespace {

using Color = std::array<double, 3>;

// Two well separated colors drawn from the seed.
std::pair<Color, Color> color_pair(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dark(0.05, 0.35), light(0.65, 0.95);
    Color a{}, b{};
    for (std::size_t c = 0; c < 3; ++c) {
        a[c] = dark(rng);
        b[c] = light(rng);
    }
    return {a, b};
}

std::size_t wrap(long v, std::size_t n) {
    const long m = static_cast<long>(n);
    return static_cast<std::size_t>(((v % m) + m) % m);
}

VideoTensor drifting_grating(std::size_t size, std::size_t frames, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::uniform_int_distribution<int> cycles(2, 4);
    std::uniform_real_distribution<double> phase_step(std::numbers::pi / 8, std::numbers::pi / 3);
    std::uniform_real_distribution<double> offset(0.0, 2 * std::numbers::pi);
    const double theta = angle(rng);
    const double k = 2 * std::numbers::pi * cycles(rng) / static_cast<double>(size);
    const double step = phase_step(rng);
    const double phase0 = offset(rng);
    const auto [low, high] = color_pair(rng);

    VideoTensor video(frames, size, size);
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const double u = k * (std::cos(theta) * x + std::sin(theta) * y) - step * t + phase0;
                const double w = 0.5 + 0.5 * std::sin(u);
                for (std::size_t c = 0; c < 3; ++c) video.at(t, y, x, c) = low[c] + w * (high[c] - low[c]);
            }
    return video;
}

VideoTensor translating_checkerboard(std::size_t size, std::size_t frames, std::uint64_t seed) {
    const CheckerboardMotion m = checkerboard_motion(size, seed);
    std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
    const auto [a, b] = color_pair(rng);
    VideoTensor video(frames, size, size);
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                // Frame t samples frame 0 at (y - t vy, x - t vx), cyclically.
                const std::size_t sy = wrap(static_cast<long>(y) - static_cast<long>(t) * m.vy, size);
                const std::size_t sx = wrap(static_cast<long>(x) - static_cast<long>(t) * m.vx, size);
                const bool odd = ((sy / m.cell) + (sx / m.cell)) % 2 == 1;
                for (std::size_t c = 0; c < 3; ++c) video.at(t, y, x, c) = odd ? b[c] : a[c];
            }
    return video;
}

VideoTensor flag_boundary(std::size_t size, std::size_t frames, std::uint64_t seed) {
    const FlagGeometry g = flag_geometry(size, seed);
    std::mt19937_64 rng(seed ^ 0xD1B54A32D192ED03ull);
    std::uniform_real_distribution<double> speed(std::numbers::pi / 6, std::numbers::pi / 3);
    const double omega = speed(rng);
    const auto [left, right] = color_pair(rng);
    const double k = 2 * std::numbers::pi * 1.5 / static_cast<double>(size);

    VideoTensor video(frames, size, size);
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t y = 0; y < size; ++y) {
            const double boundary = g.center + g.amplitude * std::sin(k * y - omega * t);
            for (std::size_t x = 0; x < size; ++x) {
                // Fraction of the pixel [x, x+1) lying right of the boundary.
                const double cover = std::clamp(static_cast<double>(x) + 1.0 - boundary, 0.0, 1.0);
                for (std::size_t c = 0; c < 3; ++c)
                    video.at(t, y, x, c) = left[c] + cover * (right[c] - left[c]);
            }
        }
    return video;
}

VideoTensor period2_flicker(std::size_t size, std::size_t frames, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> value(0.0, 1.0);
    std::array<Tensor, 2> base{Tensor({size, size, 3}), Tensor({size, size, 3})};
    for (auto& f : base)
        for (double& v : f.values()) v = value(rng);
    VideoTensor video(frames, size, size);
    for (std::size_t t = 0; t < frames; ++t) video.set_frame(t, base[t % 2]);
    return video;
}

}  // namespace

const char* exemplar_kind_name(ExemplarKind kind) {
    switch (kind) {
        case ExemplarKind::DriftingGrating: return "drifting-grating";
        case ExemplarKind::TranslatingCheckerboard: return "translating-checkerboard";
        case ExemplarKind::FlagBoundary: return "flag-boundary";
        case ExemplarKind::Period2Flicker: return "period2-flicker";
    }
    return "unknown";
}

ExemplarKind parse_exemplar_kind(const std::string& name) {
    for (auto kind : {ExemplarKind::DriftingGrating, ExemplarKind::TranslatingCheckerboard,
                      ExemplarKind::FlagBoundary, ExemplarKind::Period2Flicker})
        if (name == exemplar_kind_name(kind)) return kind;
    throw ConfigError("kind", "unknown exemplar kind '" + name +
                                  "' (expected drifting-grating, translating-checkerboard, flag-boundary or "
                                  "period2-flicker)");
}

CheckerboardMotion checkerboard_motion(std::size_t size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    CheckerboardMotion m;
    m.cell = size >= 32 ? 8 : 4;
    std::uniform_int_distribution<long> vx(1, 3), vy(0, 2);
    m.vx = vx(rng);
    m.vy = vy(rng);
    return m;
}

FlagGeometry flag_geometry(std::size_t size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double s = static_cast<double>(size);
    std::uniform_real_distribution<double> center(0.4 * s, 0.6 * s), amplitude(0.1 * s, 0.2 * s);
    FlagGeometry g;
    g.center = center(rng);
    g.amplitude = amplitude(rng);
    return g;
}

VideoTensor make_exemplar(ExemplarKind kind, std::size_t size, std::size_t frames, std::uint64_t seed) {
    if (size < 16) throw ConfigError("size", "exemplar size must be >= 16, got " + std::to_string(size));
    if (frames < 2) throw ConfigError("frames", "exemplar needs >= 2 frames, got " + std::to_string(frames));
    switch (kind) {
        case ExemplarKind::DriftingGrating: return drifting_grating(size, frames, seed);
        case ExemplarKind::TranslatingCheckerboard: return translating_checkerboard(size, frames, seed);
        case ExemplarKind::FlagBoundary: return flag_boundary(size, frames, seed);
        case ExemplarKind::Period2Flicker: return period2_flicker(size, frames, seed);
    }
    throw ConfigError("kind", "unknown exemplar kind");
}

}  // namespace dyntex
