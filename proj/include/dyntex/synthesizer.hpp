#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "dyntex/lbfgs.hpp"
#include "dyntex/objective.hpp"
#include "dyntex/video.hpp"

#include <json.hpp>

namespace dyntex {

inline constexpr double kInitNoiseSigma = 0.1;

/// Network weights from a seed, or a loaded store when present.
struct WeightSource {
    std::uint64_t seed = 0;
    std::optional<WeightStore> store;
};

struct SynthesisJob {
    VideoTensor exemplar{2, 16, 16};
    /// Output length; 0 keeps the exemplar's length.
    std::size_t frames = 0;
    LossConfig loss;
    WeightSource appearance_weights;
    WeightSource dynamics_weights;
    std::uint64_t init_seed = 0;
    LbfgsConfig optimizer;
    /// Replaces the noise initialization when set.
    std::optional<VideoTensor> initial;
    /// When non-empty, frames and report.json are written here.
    std::filesystem::path output_dir;

    std::size_t output_frames() const { return frames == 0 ? exemplar.frames() : frames; }
};

struct RunReport {
    double initial_loss = 0.0;
    /// Objective at the returned unclamped optimum.
    double final_loss = 0.0;
    /// Breakdown at the unclamped optimum; sums to final_loss.
    LossBreakdown breakdown;
    /// Objective of the clamped output video.
    double output_loss = 0.0;
    IterationTrace trace;
    double wall_seconds = 0.0;
    bool converged = false;
    std::size_t gram_count = 0;

    nlohmann::json to_json() const;
};

struct SynthesisResult {
    VideoTensor video;  // clamped to [0, 1]
    VideoTensor raw;    // optimizer output
    RunReport report;
};

/// Exemplar channel mean plus i.i.d. N(0, sigma^2) noise from `seed`.
VideoTensor noise_initialization(const VideoTensor& exemplar, std::size_t frames, std::uint64_t seed,
                                 double sigma = kInitNoiseSigma);

Network make_appearance_net(const WeightSource& source);
Network make_dynamics_net(const WeightSource& source);

/// Precomputes exemplar statistics, optimizes pixels with L-BFGS and clamps
/// the result. An optimizer abort still returns the best video seen with
/// report.converged == false.
SynthesisResult synthesize(const SynthesisJob& job);

/// Same as above with prebuilt networks.
SynthesisResult synthesize(const SynthesisJob& job, const Network& appearance, const Network& dynamics);

nlohmann::json breakdown_json(const LossBreakdown& breakdown);

}  // namespace dyntex
