#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

#include "dyntex/config.hpp"
#include "dyntex/error.hpp"
#include "dyntex/synthesizer.hpp"
#include "dyntex/video_io.hpp"

namespace dyntex::cli {

namespace {

using nlohmann::json;

constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0  success (synthesize: optimizer converged or used its iteration budget)\n"
    "  1  invalid arguments, configuration or input files\n"
    "  2  synthesize: optimizer aborted; best frames and report were still written\n"
    "  3  gradcheck: relative gradient error at or above the tolerance";

json matrix_json(const Tensor& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.extent(0); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.extent(1); ++j) row.push_back(m[i * m.extent(1) + j]);
        rows.push_back(std::move(row));
    }
    return rows;
}

WeightSource weight_source(const WeightSetting& setting) {
    WeightSource source{setting.seed, std::nullopt};
    if (setting.file) source.store = read_weight_file(*setting.file);
    return source;
}

struct Engine {
    RunConfig config;
    VideoTensor exemplar;
    Network appearance;
    Network dynamics;
};

Engine load_engine(const std::string& config_path) {
    RunConfig config = load_run_config(config_path);
    VideoTensor exemplar = read_frames(config.exemplar_dir);
    Network appearance = make_appearance_net(weight_source(config.appearance_weights));
    Network dynamics = make_dynamics_net(weight_source(config.dynamics_weights));
    return Engine{std::move(config), std::move(exemplar), std::move(appearance), std::move(dynamics)};
}

std::size_t output_frames(const Engine& e) { return e.config.frames == 0 ? e.exemplar.frames() : e.config.frames; }

int cmd_synthesize(const std::string& config_path, std::ostream& out, std::ostream& err) {
    Engine e = load_engine(config_path);
    if (e.config.output_dir.empty()) throw ConfigError("output_dir", "required for synthesize");

    SynthesisJob job;
    job.exemplar = e.exemplar;
    job.frames = e.config.frames;
    job.loss = e.config.loss;
    job.init_seed = e.config.init_seed;
    job.optimizer = e.config.optimizer;
    err << "synthesize: exemplar " << e.exemplar.frames() << "x" << e.exemplar.height() << "x" << e.exemplar.width()
        << ", " << output_frames(e) << " output frames, up to " << job.optimizer.max_iterations << " iterations\n";

    const SynthesisResult result = synthesize(job, e.appearance, e.dynamics);
    write_frames(result.video, e.config.output_dir);
    json report = result.report.to_json();
    report["config"] = e.config.to_json();
    write_file_bytes(e.config.output_dir / "report.json", [&] {
        const std::string text = report.dump(2) + "\n";
        return std::vector<std::uint8_t>(text.begin(), text.end());
    }());

    out << "loss " << result.report.initial_loss << " -> " << result.report.final_loss << " after "
        << result.report.trace.iterations.size() << " iterations ("
        << stop_reason_name(result.report.trace.reason) << ")\n";
    out << "wrote " << result.video.frames() << " frames and report.json to " << e.config.output_dir.string() << "\n";
    if (!result.report.converged) {
        err << "synthesize: optimizer did not converge: " << result.report.trace.diagnostic << "\n";
        return kExitUnconverged;
    }
    return kExitOk;
}

int cmd_gradcheck(const std::string& config_path, std::size_t pixels, std::uint64_t seed, bool inject_error,
                  std::ostream& out) {
    if (pixels == 0) throw ConfigError("pixels", "must be >= 1");
    Engine e = load_engine(config_path);
    const std::size_t frames = output_frames(e);
    e.config.loss.validate(e.exemplar.frames());
    e.config.loss.validate(frames);
    TextureObjective objective(precompute_exemplar_stats(e.exemplar, e.appearance, e.dynamics, e.config.loss),
                               e.appearance, e.dynamics, e.config.loss);
    const VideoTensor video = noise_initialization(e.exemplar, frames, e.config.init_seed);
    const GradcheckReport r = check_gradient(objective, video, pixels, seed, inject_error ? 1e-2 : 0.0);
    const bool pass = r.max_relative_error < kGradcheckTolerance;
    out << "gradcheck: " << r.samples << " pixels, max relative error " << r.max_relative_error << " at index "
        << r.worst_index << " (analytic " << r.worst_analytic << ", numeric " << r.worst_numeric << ") "
        << (pass ? "PASS" : "FAIL") << " (tolerance " << kGradcheckTolerance << ")\n";
    return pass ? kExitOk : kExitGradientMismatch;
}

int cmd_stats(const std::string& config_path, const std::string& layer, const std::string& out_path,
              std::ostream& out) {
    Engine e = load_engine(config_path);
    const bool is_dynamics = layer == kDynamicsTapLabel;
    const auto label = std::find(kAppearanceTapLabels.begin(), kAppearanceTapLabels.end(), layer);
    if (!is_dynamics && label == kAppearanceTapLabels.end())
        throw ConfigError("layer", "unknown layer '" + layer + "' (expected conv1, pool1, pool2, pool3, pool4 or " +
                                       kDynamicsTapLabel + ")");
    e.config.loss.validate();
    const ExemplarStats stats = precompute_exemplar_stats(e.exemplar, e.appearance, e.dynamics, e.config.loss);

    json doc{{"layer", layer}};
    if (is_dynamics) {
        doc["positions"] = stats.dynamics_positions;
        json intervals = json::array();
        for (std::size_t t : e.config.loss.intervals) {
            const auto it = stats.dynamics.find(t);
            if (it == stats.dynamics.end())
                intervals.push_back({{"interval", t}, {"status", "skipped"}});
            else
                intervals.push_back({{"interval", t}, {"status", "ok"}, {"count", it->second.count},
                                     {"gram", matrix_json(it->second.values)}});
        }
        doc["intervals"] = intervals;
    } else {
        const std::size_t l = static_cast<std::size_t>(label - kAppearanceTapLabels.begin());
        doc["stride"] = kAppearanceTapStrides[l];
        doc["positions"] = stats.appearance.positions[l];
        doc["plain"] = {{"count", stats.appearance.plain[l].count}, {"gram", matrix_json(stats.appearance.plain[l].values)}};
        json shifted = json::array();
        for (std::size_t s = 0; s < stats.shifts.size(); ++s) {
            json entry{{"axis", axis_name(stats.shifts[s].axis)}, {"distance", stats.shifts[s].distance},
                       {"cells", shift_cells(stats.shifts[s].distance, kAppearanceTapStrides[l])}};
            const auto& g = stats.appearance.shifted[l][s];
            if (g) {
                entry["status"] = "ok";
                entry["count"] = g->count;
                entry["gram"] = matrix_json(g->values);
            } else {
                entry["status"] = "skipped";
            }
            shifted.push_back(std::move(entry));
        }
        doc["shifted"] = shifted;
    }
    const std::string text = doc.dump(2) + "\n";
    if (out_path.empty())
        out << text;
    else
        write_file_bytes(out_path, std::vector<std::uint8_t>(text.begin(), text.end()));
    return kExitOk;
}

int cmd_make_exemplar(const std::string& kind, std::size_t size, std::size_t frames, std::uint64_t seed,
                      const std::string& out_dir, std::ostream& out) {
    const VideoTensor video = make_exemplar(parse_exemplar_kind(kind), size, frames, seed);
    write_frames(video, out_dir);
    out << "wrote " << frames << " " << size << "x" << size << " " << kind << " frames to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

GradcheckReport check_gradient(const TextureObjective& objective, const VideoTensor& video, std::size_t pixels,
                               std::uint64_t seed, double corruption) {
    const std::size_t n = video.tensor().size();
    pixels = std::min(pixels, n);
    const ObjectiveResult base = objective.evaluate(video, true);
    Tensor analytic = base.gradient;
    if (corruption != 0.0) analytic *= 1.0 + corruption;
    double scale = 0.0;
    for (double g : analytic.values()) scale = std::max(scale, std::abs(g));
    const double floor = std::max(kGradcheckFloor * scale, std::numeric_limits<double>::min());

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(pixels);
    std::sort(order.begin(), order.end());

    GradcheckReport report;
    report.samples = pixels;
    VideoTensor probe = video;
    for (std::size_t idx : order) {
        const double original = probe.tensor()[idx];
        probe.tensor()[idx] = original + kGradcheckStep;
        const double plus = objective.evaluate(probe, false).loss.total;
        probe.tensor()[idx] = original - kGradcheckStep;
        const double minus = objective.evaluate(probe, false).loss.total;
        probe.tensor()[idx] = original;
        const double numeric = (plus - minus) / (2.0 * kGradcheckStep);
        const double a = analytic[idx];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
        if (rel >= report.max_relative_error) {
            report.max_relative_error = rel;
            report.worst_index = idx;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    return report;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dynamic texture synthesis by matching appearance and dynamics statistics.", "dyntex"};
    app.footer(kExitCodeHelp);
    app.require_subcommand(1);

    std::string config_path, layer, out_path, kind, out_dir;
    std::size_t pixels = 50, size = 64, frames = 8;
    std::uint64_t seed = 0;
    bool inject_error = false;

    auto* synth = app.add_subcommand("synthesize", "Synthesize a video matching the exemplar's statistics");
    synth->add_option("--config", config_path, "JSON run configuration")->required();

    auto* grad = app.add_subcommand("gradcheck", "Compare the analytic gradient with central differences");
    grad->add_option("--config", config_path, "JSON run configuration")->required();
    grad->add_option("--pixels", pixels, "Number of sampled pixel values")->capture_default_str();
    grad->add_option("--seed", seed, "Seed for pixel sampling")->capture_default_str();
    // Negative control for tests: corrupts the analytic gradient.
    grad->add_flag("--inject-gradient-error", inject_error)->group("");

    auto* stats = app.add_subcommand("stats", "Print the exemplar's target Gram matrices for one layer as JSON");
    stats->add_option("--config", config_path, "JSON run configuration")->required();
    stats->add_option("--layer", layer, "conv1, pool1, pool2, pool3, pool4 or dynamics")->required();
    stats->add_option("--out", out_path, "Write JSON here instead of stdout");

    auto* make = app.add_subcommand("make-exemplar", "Write a synthetic exemplar as PPM frames");
    make->add_option("--kind", kind,
                     "drifting-grating, translating-checkerboard, flag-boundary or period2-flicker")
        ->required();
    make->add_option("--size", size, "Frame width and height (>= 16)")->capture_default_str();
    make->add_option("--frames", frames, "Frame count (>= 2)")->capture_default_str();
    make->add_option("--seed", seed, "Generator seed")->capture_default_str();
    make->add_option("--out", out_dir, "Output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitError;
    }

    try {
        if (synth->parsed()) return cmd_synthesize(config_path, out, err);
        if (grad->parsed()) return cmd_gradcheck(config_path, pixels, seed, inject_error, out);
        if (stats->parsed()) return cmd_stats(config_path, layer, out_path, out);
        if (make->parsed()) return cmd_make_exemplar(kind, size, frames, seed, out_dir, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}

}  // namespace dyntex::cli
