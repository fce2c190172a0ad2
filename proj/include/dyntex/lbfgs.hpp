#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dyntex {

struct LbfgsConfig {
    std::size_t memory = 10;
    std::size_t max_iterations = 300;
    /// Stop once max_i |g_i| <= tol_grad.
    double tol_grad = 1e-12;
    /// Stop once (f_k - f_{k+1}) <= tol_loss * |f_k|.
    double tol_loss = 1e-12;
    double c1 = 1e-4;
    double c2 = 0.9;
    std::size_t max_line_search_evaluations = 20;
    /// Keep each iterate's start point and search direction in the trace.
    bool record_path = false;

    /// Throws ConfigError when 0 < c1 < c2 < 1 or memory >= 1 is violated.
    void validate() const;
};

/// f(x) written to the return value, gradient written into `grad`.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct IterationRecord {
    double loss = 0.0;  // after the step
    double grad_norm = 0.0;
    double step = 0.0;
    std::size_t evaluations = 0;  // line-search objective calls
    bool steepest_descent_retry = false;
    std::vector<double> start;      // record_path only
    std::vector<double> direction;  // record_path only
};

enum class StopReason {
    GradientTolerance,
    LossTolerance,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
};

const char* stop_reason_name(StopReason reason);

struct IterationTrace {
    double initial_loss = 0.0;
    std::vector<IterationRecord> iterations;
    StopReason reason = StopReason::MaxIterations;
    /// Set for NonFinite and LineSearchFailed; names the iteration index.
    std::string diagnostic;
    std::size_t evaluations = 0;
};

struct MinimizeResult {
    std::vector<double> x;  // best point seen
    double loss = 0.0;
    IterationTrace trace;

    /// Tolerance reached or iteration budget used up.
    bool converged() const {
        return trace.reason != StopReason::LineSearchFailed && trace.reason != StopReason::NonFinite;
    }
};

/// Curvature pair history for the two-loop recursion.
class LbfgsHistory {
public:
    explicit LbfgsHistory(std::size_t capacity) : capacity_(capacity) {}

    /// Stores (s, y) unless s.y <= 1e-10 |s| |y|; returns whether it was kept.
    bool push(std::vector<double> s, std::vector<double> y);
    void clear() { pairs_.clear(); }
    std::size_t size() const { return pairs_.size(); }
    bool empty() const { return pairs_.empty(); }

    struct Pair {
        std::vector<double> s, y;
        double rho = 0.0;
    };
    const std::deque<Pair>& pairs() const { return pairs_; }

private:
    std::size_t capacity_;
    std::deque<Pair> pairs_;
};

/// -H g with H the L-BFGS inverse-Hessian estimate (initial scaling
/// s'y / y'y of the newest pair); -g for an empty history.
std::vector<double> two_loop_direction(std::span<const double> grad, const LbfgsHistory& history);

struct LineSearchResult {
    bool success = false;
    double step = 0.0;
    double loss = 0.0;
    std::vector<double> x;
    std::vector<double> grad;
    std::size_t evaluations = 0;
    bool non_finite = false;
};

/// Strong Wolfe search along `direction` from (x, loss, grad), starting at
/// `initial_step`; bracketing then zoom with safeguarded cubic interpolation.
LineSearchResult strong_wolfe_search(const Objective& objective, std::span<const double> x, double loss,
                                     std::span<const double> grad, std::span<const double> direction,
                                     const LbfgsConfig& config, double initial_step = 1.0);

MinimizeResult minimize(const Objective& objective, std::vector<double> x0, const LbfgsConfig& config);

}  // namespace dyntex
