#include "dyntex/synthesizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "dyntex/error.hpp"
#include "dyntex/video_io.hpp"

namespace dyntex {

VideoTensor noise_initialization(const VideoTensor& exemplar, std::size_t frames, std::uint64_t seed, double sigma) {
    const auto mean = exemplar.channel_mean();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    VideoTensor video(frames, exemplar.height(), exemplar.width());
    auto values = video.tensor().values();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = mean[i % VideoTensor::kChannels] + noise(rng);
    return video;
}

Network make_appearance_net(const WeightSource& source) {
    return source.store ? build_appearance_net(*source.store) : build_appearance_net(source.seed);
}

Network make_dynamics_net(const WeightSource& source) {
    return source.store ? build_dynamics_net(*source.store) : build_dynamics_net(source.seed);
}

SynthesisResult synthesize(const SynthesisJob& job) {
    const Network appearance = make_appearance_net(job.appearance_weights);
    const Network dynamics = make_dynamics_net(job.dynamics_weights);
    return synthesize(job, appearance, dynamics);
}

SynthesisResult synthesize(const SynthesisJob& job, const Network& appearance, const Network& dynamics) {
    const auto started = std::chrono::steady_clock::now();
    const std::size_t frames = job.output_frames();
    job.loss.validate(job.exemplar.frames());
    job.loss.validate(frames);
    job.optimizer.validate();

    TextureObjective objective(precompute_exemplar_stats(job.exemplar, appearance, dynamics, job.loss), appearance,
                               dynamics, job.loss);

    VideoTensor start = job.initial ? *job.initial : noise_initialization(job.exemplar, frames, job.init_seed);
    if (start.frames() != frames || start.height() != job.exemplar.height() || start.width() != job.exemplar.width())
        throw ShapeError("synthesize", "initial video shape",
                         shape_string(start.tensor().shape()) + " does not match the requested output");

    // The optimizer works on the flattened video. Non-finite probes are
    // reported back as NaN so the optimizer can stop cleanly.
    VideoTensor scratch = start;
    const Objective fn = [&](std::span<const double> x, std::span<double> grad) {
        if (!std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); })) {
            std::fill(grad.begin(), grad.end(), std::numeric_limits<double>::quiet_NaN());
            return std::numeric_limits<double>::quiet_NaN();
        }
        std::memcpy(scratch.tensor().data(), x.data(), x.size() * sizeof(double));
        const ObjectiveResult r = objective.evaluate(scratch, true);
        std::memcpy(grad.data(), r.gradient.data(), grad.size() * sizeof(double));
        return r.loss.total;
    };

    const auto flat = start.tensor().values();
    MinimizeResult opt = minimize(fn, std::vector<double>(flat.begin(), flat.end()), job.optimizer);

    Tensor raw_tensor(start.tensor().shape(), std::move(opt.x));
    VideoTensor raw(raw_tensor);
    Tensor clamped = raw_tensor;
    for (double& v : clamped.values()) v = std::clamp(v, 0.0, 1.0);
    VideoTensor video(std::move(clamped));

    RunReport report;
    report.initial_loss = opt.trace.initial_loss;
    report.final_loss = opt.loss;
    report.breakdown = objective.evaluate(raw, false).loss;
    report.output_loss = objective.evaluate(video, false).loss.total;
    report.trace = std::move(opt.trace);
    report.converged = report.trace.reason != StopReason::LineSearchFailed &&
                       report.trace.reason != StopReason::NonFinite;
    report.gram_count = objective.stats().gram_count();
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    SynthesisResult result{std::move(video), std::move(raw), std::move(report)};
    if (!job.output_dir.empty()) {
        write_frames(result.video, job.output_dir);
        std::ofstream out(job.output_dir / "report.json");
        out << result.report.to_json().dump(2) << '\n';
        if (!out) throw Error("cannot write " + (job.output_dir / "report.json").string());
    }
    return result;
}

nlohmann::json breakdown_json(const LossBreakdown& breakdown) {
    nlohmann::json dynamics = nlohmann::json::array();
    for (const IntervalLoss& d : breakdown.dynamics)
        dynamics.push_back({{"interval", d.interval}, {"loss", d.loss}, {"weighted", d.weighted}});
    return {{"appearance_plain", breakdown.appearance_plain},
            {"appearance_shifted", breakdown.appearance_shifted},
            {"dynamics", dynamics},
            {"dynamics_total", breakdown.dynamics_total()},
            {"total", breakdown.total}};
}

nlohmann::json RunReport::to_json() const {
    nlohmann::json iterations = nlohmann::json::array();
    for (const IterationRecord& r : trace.iterations) {
        nlohmann::json it{{"loss", r.loss}, {"grad_norm", r.grad_norm}, {"step", r.step}, {"evaluations", r.evaluations}};
        if (r.steepest_descent_retry) it["steepest_descent_retry"] = true;
        iterations.push_back(std::move(it));
    }
    nlohmann::json j{{"initial_loss", initial_loss},
                     {"final_loss", final_loss},
                     {"output_loss", output_loss},
                     {"breakdown", breakdown_json(breakdown)},
                     {"converged", converged},
                     {"stop_reason", stop_reason_name(trace.reason)},
                     {"iterations", trace.iterations.size()},
                     {"evaluations", trace.evaluations},
                     {"gram_count", gram_count},
                     {"wall_seconds", wall_seconds},
                     {"trace", iterations}};
    if (!trace.diagnostic.empty()) j["diagnostic"] = trace.diagnostic;
    return j;
}

}  // namespace dyntex
