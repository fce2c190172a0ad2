#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dyntex/network.hpp"
#include "dyntex/video.hpp"

namespace dyntex {

// ---------------------------------------------------------------------------
// Binary PPM (P6, maxval 255) frames. Reading maps byte b to b / 255;
// writing maps v to round(clamp(v, 0, 1) * 255).
// ---------------------------------------------------------------------------

struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major RGB triples
};

/// Throws FormatError on anything but a well-formed P6 image with maxval 255.
RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);

std::uint8_t quantize(double value);

/// "frame_0000.ppm", "frame_0001.ppm", ...
std::string frame_file_name(std::size_t index);

/// Reads frame_NNNN.ppm files of a directory; indices must run 0..N-1 with a
/// common geometry.
VideoTensor read_frames(const std::filesystem::path& directory);
/// Creates the directory if needed and writes one PPM per frame.
void write_frames(const VideoTensor& video, const std::filesystem::path& directory);

// ---------------------------------------------------------------------------
// DTSW weight files: "DTSW", u32 version, u32 entry count, then per entry
// u16 name length, UTF-8 name, u8 rank, u32 extents, f32 data. Little endian.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kWeightFileVersion = 1;

std::vector<std::uint8_t> encode_weight_file(const WeightStore& store);
/// Throws FormatError on bad magic, unsupported version, truncation,
/// duplicate names or trailing bytes. Values widen from float to double.
WeightStore decode_weight_file(const std::vector<std::uint8_t>& bytes);

void write_weight_file(const WeightStore& store, const std::filesystem::path& path);
WeightStore read_weight_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// ---------------------------------------------------------------------------
// Synthetic exemplars.
// ---------------------------------------------------------------------------

enum class ExemplarKind { DriftingGrating, TranslatingCheckerboard, FlagBoundary, Period2Flicker };

/// "drifting-grating", "translating-checkerboard", "flag-boundary", "period2-flicker".
const char* exemplar_kind_name(ExemplarKind kind);
/// Throws ConfigError("kind", ...) for unknown names.
ExemplarKind parse_exemplar_kind(const std::string& name);

struct CheckerboardMotion {
    std::size_t cell = 0;
    long vx = 0;  // pixels per frame
    long vy = 0;
};
/// Cell size and velocity the translating checkerboard uses for a seed.
CheckerboardMotion checkerboard_motion(std::size_t size, std::uint64_t seed);

struct FlagGeometry {
    double center = 0.0;     // mean boundary column
    double amplitude = 0.0;  // boundary excursion in pixels
};
FlagGeometry flag_geometry(std::size_t size, std::uint64_t seed);

/// size x size frames; pure function of its arguments. Requires size >= 16
/// and frames >= 2.
VideoTensor make_exemplar(ExemplarKind kind, std::size_t size, std::size_t frames, std::uint64_t seed);

}  // namespace dyntex
