#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dyntex/objective.hpp"

namespace dyntex::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitError = 1,
    kExitUnconverged = 2,
    kExitGradientMismatch = 3,
};

/// Largest relative error cmd_gradcheck accepts.
inline constexpr double kGradcheckTolerance = 1e-4;
/// Central-difference step in intensity units; small enough that probes
/// rarely cross ReLU or max-pool switching points.
inline constexpr double kGradcheckStep = 1e-6;
/// Relative errors are taken against max(|analytic|, |numeric|, floor) with
/// floor = kGradcheckFloor * max |analytic gradient|.
inline constexpr double kGradcheckFloor = 1e-6;

struct GradcheckReport {
    std::size_t samples = 0;
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares the analytic gradient with central differences at `pixels`
/// distinct seeded positions of `video`. `corruption` scales the analytic
/// gradient by (1 + corruption); it exists only as a negative control.
GradcheckReport check_gradient(const TextureObjective& objective, const VideoTensor& video, std::size_t pixels,
                               std::uint64_t seed, double corruption = 0.0);

/// Runs the command line `args` (without the program name), writing results
/// to `out` and diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dyntex::cli
