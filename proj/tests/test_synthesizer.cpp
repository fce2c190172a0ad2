#include <gtest/gtest.h>

#include <filesystem>

#include "dyntex/error.hpp"
#include "dyntex/synthesizer.hpp"
#include "dyntex/video_io.hpp"

using namespace dyntex;
namespace fs = std::filesystem;

namespace {

SynthesisJob small_job(std::size_t iterations) {
    SynthesisJob job;
    job.exemplar = make_exemplar(ExemplarKind::DriftingGrating, 16, 3, 2);
    job.loss.shifts = both_axes({8});
    job.loss.intervals = {1, 2};
    job.loss.interval_weights = {0.5, 0.5};
    job.loss.pyramid_scales = 1;
    job.appearance_weights.seed = 1;
    job.dynamics_weights.seed = 2;
    job.init_seed = 3;
    job.optimizer.max_iterations = iterations;
    return job;
}

}  // namespace

TEST(Initialization, ChannelMeanPlusSeededNoise) {
    const VideoTensor ex = make_exemplar(ExemplarKind::FlagBoundary, 16, 2, 1);
    const VideoTensor a = noise_initialization(ex, 4, 9), b = noise_initialization(ex, 4, 9);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, noise_initialization(ex, 4, 10));
    EXPECT_EQ(a.frames(), 4u);
    const auto target = ex.channel_mean(), got = a.channel_mean();
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(got[c], target[c], 0.02);
}

TEST(Synthesize, ExemplarIsAFixedPoint) {
    SynthesisJob job = small_job(10);
    job.initial = job.exemplar;
    const SynthesisResult r = synthesize(job);
    EXPECT_EQ(r.report.initial_loss, 0.0);
    EXPECT_EQ(r.report.final_loss, 0.0);
    EXPECT_TRUE(r.report.trace.iterations.empty());
    EXPECT_TRUE(r.report.converged);
    EXPECT_EQ(r.video, job.exemplar);
}

TEST(Synthesize, ReducesLossAndReconcilesBreakdown) {
    const SynthesisResult r = synthesize(small_job(40));
    EXPECT_TRUE(r.report.converged);
    EXPECT_LT(r.report.final_loss, 0.05 * r.report.initial_loss);
    EXPECT_NEAR(r.report.breakdown.sum(), r.report.final_loss, 1e-9);
    EXPECT_EQ(r.report.breakdown.total, r.report.final_loss);
    ASSERT_EQ(r.report.breakdown.dynamics.size(), 2u);
    EXPECT_GT(r.report.breakdown.appearance_shifted, 0.0);
    for (double v : r.video.tensor().values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Synthesize, DeterministicForFixedSeeds) {
    const SynthesisResult a = synthesize(small_job(5)), b = synthesize(small_job(5));
    EXPECT_EQ(a.raw, b.raw);
    EXPECT_EQ(a.report.final_loss, b.report.final_loss);
}

TEST(Synthesize, LongerOutputThanExemplar) {
    SynthesisJob job = small_job(3);
    job.frames = 5;
    const SynthesisResult r = synthesize(job);
    EXPECT_EQ(r.video.frames(), 5u);
    EXPECT_LT(r.report.final_loss, r.report.initial_loss);
}

TEST(Synthesize, IntervalTooLongForExemplarIsConfigError) {
    SynthesisJob job = small_job(3);
    job.exemplar = make_exemplar(ExemplarKind::DriftingGrating, 16, 2, 2);
    try {
        synthesize(job);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(e.key().find("intervals"), std::string::npos);
    }
}

TEST(Synthesize, AbortedOptimizationIsReportedUnconverged) {
    SynthesisJob job = small_job(3);
    job.optimizer.max_line_search_evaluations = 1;
    job.optimizer.c2 = 1e-9;  // curvature condition essentially unattainable
    job.optimizer.c1 = 1e-10;
    const SynthesisResult r = synthesize(job);
    EXPECT_FALSE(r.report.converged);
    EXPECT_EQ(r.report.trace.reason, StopReason::LineSearchFailed);
    EXPECT_FALSE(r.report.trace.diagnostic.empty());
    EXPECT_LE(r.report.final_loss, r.report.initial_loss);
}

TEST(Synthesize, WritesFramesAndReport) {
    SynthesisJob job = small_job(2);
    job.output_dir = fs::temp_directory_path() / "dyntex_test_synth_out";
    fs::remove_all(job.output_dir);
    const SynthesisResult r = synthesize(job);
    const VideoTensor written = read_frames(job.output_dir);
    ASSERT_EQ(written.frames(), 3u);
    for (std::size_t i = 0; i < written.tensor().size(); ++i)
        EXPECT_EQ(written.tensor()[i], quantize(r.video.tensor()[i]) / 255.0);
    ASSERT_TRUE(fs::exists(job.output_dir / "report.json"));
    const auto bytes = read_file_bytes(job.output_dir / "report.json");
    const nlohmann::json j = nlohmann::json::parse(bytes.begin(), bytes.end());
    EXPECT_EQ(j.at("final_loss").get<double>(), r.report.final_loss);
    EXPECT_EQ(j.at("gram_count").get<std::size_t>(), r.report.gram_count);
    EXPECT_EQ(j.at("trace").size(), r.report.trace.iterations.size());
}
