#include "dyntex/lbfgs.hpp"

#include <algorithm>
#include <cmath>

#include "dyntex/error.hpp"

namespace dyntex {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

double l1(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += std::abs(v);
    return s;
}

bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

// Minimizer of the cubic matching (f, g) at x1 and x2, clamped to [lo, hi];
// falls back to the midpoint when the cubic has no real minimizer.
double cubic_minimizer(double x1, double f1, double g1, double x2, double f2, double g2, double lo, double hi) {
    const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    const double disc = d1 * d1 - g1 * g2;
    if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), x2 - x1);
        const double denom = g2 - g1 + 2.0 * d2;
        if (denom != 0.0) {
            const double t = x2 - (x2 - x1) * ((g2 + d2 - d1) / denom);
            if (std::isfinite(t)) return std::clamp(t, lo, hi);
        }
    }
    return 0.5 * (lo + hi);
}

struct Probe {
    double step = 0.0;
    double loss = 0.0;
    double slope = 0.0;  // grad(x + step d) . d
    std::vector<double> x;
    std::vector<double> grad;
};

}  // namespace

const char* stop_reason_name(StopReason reason) {
    switch (reason) {
        case StopReason::GradientTolerance: return "gradient_tolerance";
        case StopReason::LossTolerance: return "loss_tolerance";
        case StopReason::MaxIterations: return "max_iterations";
        case StopReason::LineSearchFailed: return "line_search_failed";
        case StopReason::NonFinite: return "non_finite";
    }
    return "unknown";
}

void LbfgsConfig::validate() const {
    if (memory < 1) throw ConfigError("memory", "must be >= 1");
    if (!(c1 > 0.0 && c1 < c2 && c2 < 1.0)) throw ConfigError("c1/c2", "need 0 < c1 < c2 < 1");
    if (max_line_search_evaluations < 1) throw ConfigError("max_line_search_evaluations", "must be >= 1");
    if (!(tol_grad >= 0.0)) throw ConfigError("tol_grad", "must be >= 0");
    if (!(tol_loss >= 0.0)) throw ConfigError("tol_loss", "must be >= 0");
}

bool LbfgsHistory::push(std::vector<double> s, std::vector<double> y) {
    const double sy = dot(s, y);
    if (!(sy > 1e-10 * norm(s) * norm(y))) return false;
    if (pairs_.size() == capacity_) pairs_.pop_front();
    pairs_.push_back({std::move(s), std::move(y), 1.0 / sy});
    return true;
}

std::vector<double> two_loop_direction(std::span<const double> grad, const LbfgsHistory& history) {
    std::vector<double> q(grad.begin(), grad.end());
    const auto& pairs = history.pairs();
    std::vector<double> alpha(pairs.size());
    for (std::size_t k = pairs.size(); k-- > 0;) {
        alpha[k] = pairs[k].rho * dot(pairs[k].s, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * pairs[k].y[i];
    }
    if (!pairs.empty()) {
        const auto& newest = pairs.back();
        const double gamma = dot(newest.s, newest.y) / dot(newest.y, newest.y);
        for (double& v : q) v *= gamma;
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const double beta = pairs[k].rho * dot(pairs[k].y, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] += pairs[k].s[i] * (alpha[k] - beta);
    }
    for (double& v : q) v = -v;
    return q;
}

LineSearchResult strong_wolfe_search(const Objective& objective, std::span<const double> x, double loss,
                                     std::span<const double> grad, std::span<const double> direction,
                                     const LbfgsConfig& config, double initial_step) {
    LineSearchResult result;
    const double slope0 = dot(grad, direction);
    if (!(slope0 < 0.0) || !(initial_step > 0.0)) return result;
    const double dir_scale = max_abs(direction);

    auto probe = [&](double step) {
        Probe p;
        p.step = step;
        p.x.resize(x.size());
        p.grad.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) p.x[i] = x[i] + step * direction[i];
        p.loss = objective(p.x, p.grad);
        p.slope = dot(p.grad, direction);
        ++result.evaluations;
        return p;
    };
    auto armijo = [&](const Probe& p) { return p.loss <= loss + config.c1 * p.step * slope0; };
    auto curvature = [&](const Probe& p) { return std::abs(p.slope) <= -config.c2 * slope0; };
    auto finite = [&](const Probe& p) { return std::isfinite(p.loss) && all_finite(p.grad); };
    auto accept = [&](Probe& p) {
        result.success = true;
        result.step = p.step;
        result.loss = p.loss;
        result.x = std::move(p.x);
        result.grad = std::move(p.grad);
        return result;
    };

    Probe prev{0.0, loss, slope0, {}, {}};
    double step = initial_step;
    Probe lo, hi;
    bool bracketed = false;
    while (result.evaluations < config.max_line_search_evaluations) {
        Probe cur = probe(step);
        if (!finite(cur)) {
            result.non_finite = true;
            return result;
        }
        if (!armijo(cur) || (result.evaluations > 1 && cur.loss >= prev.loss)) {
            lo = std::move(prev);
            hi = std::move(cur);
            bracketed = true;
            break;
        }
        if (curvature(cur)) return accept(cur);
        if (cur.slope >= 0.0) {
            hi = std::move(prev);
            lo = std::move(cur);
            bracketed = true;
            break;
        }
        const double next = cubic_minimizer(prev.step, prev.loss, prev.slope, cur.step, cur.loss, cur.slope,
                                            cur.step + 0.01 * (cur.step - prev.step), 10.0 * cur.step);
        prev = std::move(cur);
        step = next;
    }
    if (!bracketed) return result;

    // Zoom: `lo` satisfies Armijo with the lowest loss seen, the minimizer
    // lies between lo.step and hi.step.
    while (result.evaluations < config.max_line_search_evaluations) {
        const double a = std::min(lo.step, hi.step), b = std::max(lo.step, hi.step);
        if ((b - a) * dir_scale < 1e-16 * std::max(1.0, max_abs(x))) break;
        double trial = cubic_minimizer(lo.step, lo.loss, lo.slope, hi.step, hi.loss, hi.slope, a, b);
        const double margin = 0.1 * (b - a);
        if (trial - a < margin || b - trial < margin) trial = 0.5 * (a + b);
        Probe cur = probe(trial);
        if (!finite(cur)) {
            result.non_finite = true;
            return result;
        }
        if (!armijo(cur) || cur.loss >= lo.loss) {
            hi = std::move(cur);
            continue;
        }
        if (curvature(cur)) return accept(cur);
        if (cur.slope * (hi.step - lo.step) >= 0.0) hi = std::move(lo);
        lo = std::move(cur);
    }
    return result;
}

MinimizeResult minimize(const Objective& objective, std::vector<double> x0, const LbfgsConfig& config) {
    config.validate();
    MinimizeResult out;
    if (!all_finite(x0)) throw Error("minimize: initial point is not finite");

    std::vector<double> x = std::move(x0);
    std::vector<double> grad(x.size());
    double loss = objective(x, grad);
    out.trace.evaluations = 1;
    out.trace.initial_loss = loss;
    out.x = x;
    out.loss = loss;
    if (!std::isfinite(loss) || !all_finite(grad)) {
        out.trace.reason = StopReason::NonFinite;
        out.trace.diagnostic = "non-finite objective value or gradient at iteration 0 (initial point)";
        return out;
    }
    if (max_abs(grad) <= config.tol_grad) {
        out.trace.reason = StopReason::GradientTolerance;
        return out;
    }

    LbfgsHistory history(config.memory);
    out.trace.reason = StopReason::MaxIterations;
    for (std::size_t k = 0; k < config.max_iterations; ++k) {
        std::vector<double> direction = two_loop_direction(grad, history);
        if (!(dot(direction, grad) < 0.0)) {
            history.clear();
            direction = two_loop_direction(grad, history);
        }
        auto first_step = [&] { return history.empty() ? std::min(1.0, 1.0 / l1(grad)) : 1.0; };

        IterationRecord rec;
        LineSearchResult ls = strong_wolfe_search(objective, x, loss, grad, direction, config, first_step());
        std::size_t evaluations = ls.evaluations;
        if (!ls.success && !ls.non_finite && !history.empty()) {
            history.clear();
            direction = two_loop_direction(grad, history);
            rec.steepest_descent_retry = true;
            ls = strong_wolfe_search(objective, x, loss, grad, direction, config, first_step());
            evaluations += ls.evaluations;
        }
        out.trace.evaluations += evaluations;
        if (!ls.success) {
            out.trace.reason = ls.non_finite ? StopReason::NonFinite : StopReason::LineSearchFailed;
            out.trace.diagnostic = std::string(ls.non_finite ? "non-finite objective value or gradient"
                                                             : "no strong Wolfe step found") +
                                   " at iteration " + std::to_string(k + 1);
            break;
        }

        std::vector<double> s(x.size()), y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            s[i] = ls.x[i] - x[i];
            y[i] = ls.grad[i] - grad[i];
        }
        history.push(std::move(s), std::move(y));

        rec.loss = ls.loss;
        rec.grad_norm = norm(ls.grad);
        rec.step = ls.step;
        rec.evaluations = evaluations;
        if (config.record_path) {
            rec.start = x;
            rec.direction = direction;
        }
        out.trace.iterations.push_back(std::move(rec));

        const double previous = loss;
        x = std::move(ls.x);
        grad = std::move(ls.grad);
        loss = ls.loss;
        if (loss < out.loss) {
            out.loss = loss;
            out.x = x;
        }
        if (max_abs(grad) <= config.tol_grad) {
            out.trace.reason = StopReason::GradientTolerance;
            break;
        }
        if (previous - loss <= config.tol_loss * std::abs(previous)) {
            out.trace.reason = StopReason::LossTolerance;
            break;
        }
    }
    return out;
}

}  // namespace dyntex
