#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "dyntex/synthesizer.hpp"
#include "dyntex/video_io.hpp"

using namespace dyntex;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// A scratch directory holding a 16x16x3 drifting-grating exemplar and a
// config file next to it.
class Workspace {
public:
    explicit Workspace(const std::string& name) : root_(fs::temp_directory_path() / ("dyntex_test_cli_" + name)) {
        fs::remove_all(root_);
        fs::create_directories(root_);
        write_frames(make_exemplar(ExemplarKind::DriftingGrating, 16, 3, 4), root_ / "exemplar");
    }

    std::string config(const std::string& loss, const std::string& extra = "") const {
        const fs::path p = root_ / "config.json";
        std::ofstream(p) << R"({"exemplar_dir": "exemplar", "output_dir": "out", "init_seed": 1,
            "weights": {"appearance_seed": 2, "dynamics_seed": 3}, "loss": )"
                         << loss << extra << "}";
        return p.string();
    }
    std::string small_config(const std::string& extra = "") const {
        return config(R"({"shifts": [8], "intervals": [1, 2], "pyramid_scales": 1})", extra);
    }
    const fs::path& root() const { return root_; }

private:
    fs::path root_;
};

}  // namespace

TEST(Cli, SynthesizeWritesFramesAndReport) {
    const Workspace w("synth");
    const Outcome r = run_cli({"synthesize", "--config", w.small_config(R"(, "optimizer": {"max_iters": 3})")});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_frames(w.root() / "out").frames(), 3u);
    const auto bytes = read_file_bytes(w.root() / "out" / "report.json");
    const nlohmann::json j = nlohmann::json::parse(bytes.begin(), bytes.end());
    EXPECT_TRUE(j.at("converged").get<bool>());
    EXPECT_EQ(j.at("config").at("loss").at("pyramid_scales"), 1);
    EXPECT_LT(j.at("final_loss").get<double>(), j.at("initial_loss").get<double>());
}

TEST(Cli, IntervalLongerThanExemplarIsRejected) {
    const Workspace w("interval");
    const Outcome r = run_cli({"synthesize", "--config", w.config(R"({"intervals": [4], "pyramid_scales": 1})")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("intervals"), std::string::npos) << r.err;
}

TEST(Cli, MissingExemplarDirectoryIsRejected) {
    const Workspace w("missing");
    fs::remove_all(w.root() / "exemplar");
    EXPECT_EQ(run_cli({"synthesize", "--config", w.small_config()}).code, 1);
}

TEST(Cli, UnknownConfigKeyIsRejected) {
    const Workspace w("unknown");
    const Outcome r = run_cli({"synthesize", "--config", w.small_config(R"(, "seeed": 1)")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("seeed"), std::string::npos) << r.err;
}

TEST(Cli, GradcheckPassesOnSmallFixture) {
    const Workspace w("gradcheck");
    const Outcome r = run_cli({"gradcheck", "--config", w.small_config(), "--pixels", "50"});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
}

TEST(Cli, GradcheckCatchesCorruptedGradient) {
    const Workspace w("gradcheck_bad");
    const Outcome r = run_cli({"gradcheck", "--config", w.small_config(), "--pixels", "10", "--inject-gradient-error"});
    EXPECT_EQ(r.code, 3) << r.out << r.err;
}

TEST(Cli, GradcheckRejectsZeroPixels) {
    const Workspace w("gradcheck_zero");
    EXPECT_EQ(run_cli({"gradcheck", "--config", w.small_config(), "--pixels", "0"}).code, 1);
}

TEST(Cli, StatsMatchLibraryBitForBit) {
    const Workspace w("stats");
    const std::string cfg = w.config(R"({"shifts": [8, 128], "intervals": [1, 2, 4], "pyramid_scales": 1})");
    const Outcome conv = run_cli({"stats", "--config", cfg, "--layer", "conv1"});
    ASSERT_EQ(conv.code, 0) << conv.err;
    const nlohmann::json j = nlohmann::json::parse(conv.out);

    LossConfig loss;
    loss.shifts = both_axes({8, 128});
    loss.pyramid_scales = 1;
    const Network app = build_appearance_net(2), dyn = build_dynamics_net(3);
    const VideoTensor ex = read_frames(w.root() / "exemplar");
    const ExemplarStats s = precompute_exemplar_stats(ex, app, dyn, loss);

    const Tensor& plain = s.appearance.plain[0].values;
    const auto& rows = j.at("plain").at("gram");
    ASSERT_EQ(rows.size(), plain.extent(0));
    for (std::size_t a = 0; a < plain.extent(0); ++a)
        for (std::size_t b = 0; b < plain.extent(1); ++b) {
            EXPECT_EQ(rows[a][b].get<double>(), plain.at({a, b}));
            EXPECT_EQ(rows[a][b], rows[b][a]);
        }
    const auto& shifted = j.at("shifted");
    ASSERT_EQ(shifted.size(), 4u);
    EXPECT_EQ(shifted[0].at("status"), "ok");
    EXPECT_EQ(shifted[0].at("cells"), 8);
    EXPECT_EQ(shifted[2].at("status"), "skipped");  // 128 pixels on a 16-pixel frame
    EXPECT_EQ(shifted[0].at("gram")[0][1].get<double>(), s.appearance.shifted[0][0]->values.at({0, 1}));

    const Outcome dynamics = run_cli({"stats", "--config", cfg, "--layer", "dynamics"});
    ASSERT_EQ(dynamics.code, 0) << dynamics.err;
    const nlohmann::json d = nlohmann::json::parse(dynamics.out);
    ASSERT_EQ(d.at("intervals").size(), 3u);
    EXPECT_EQ(d.at("intervals")[2].at("status"), "skipped");  // interval 4 with 3 frames
    EXPECT_EQ(d.at("intervals")[0].at("gram")[3][5].get<double>(), s.dynamics.at(1).values.at({3, 5}));
}

TEST(Cli, StatsRejectsUnknownLayer) {
    const Workspace w("stats_layer");
    EXPECT_EQ(run_cli({"stats", "--config", w.small_config(), "--layer", "conv7"}).code, 1);
}

TEST(Cli, MakeExemplarIsDeterministic) {
    const fs::path root = fs::temp_directory_path() / "dyntex_test_cli_make";
    fs::remove_all(root);
    for (const char* dir : {"a", "b"}) {
        const Outcome r = run_cli({"make-exemplar", "--kind", "flag-boundary", "--size", "64", "--frames", "8",
                                   "--seed", "5", "--out", (root / dir).string()});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    for (std::size_t i = 0; i < 8; ++i) {
        const std::string name = frame_file_name(i);
        ASSERT_TRUE(fs::exists(root / "a" / name));
        EXPECT_EQ(read_file_bytes(root / "a" / name), read_file_bytes(root / "b" / name));
    }
    EXPECT_FALSE(fs::exists(root / "a" / frame_file_name(8)));
}

TEST(Cli, MakeExemplarPeriodTwoRepeats) {
    const fs::path root = fs::temp_directory_path() / "dyntex_test_cli_flicker";
    fs::remove_all(root);
    ASSERT_EQ(run_cli({"make-exemplar", "--kind", "period2-flicker", "--size", "16", "--frames", "4", "--out",
                       root.string()})
                  .code,
              0);
    EXPECT_EQ(read_file_bytes(root / frame_file_name(0)), read_file_bytes(root / frame_file_name(2)));
    EXPECT_NE(read_file_bytes(root / frame_file_name(0)), read_file_bytes(root / frame_file_name(1)));
}

TEST(Cli, ArgumentErrors) {
    EXPECT_EQ(run_cli({"make-exemplar", "--kind", "plasma", "--out", "/tmp/x"}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({}).code, 1);
    const Outcome help = run_cli({"--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("Exit codes"), std::string::npos);
}
