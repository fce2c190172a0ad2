#include "dyntex/texture_stats.hpp"

#include <Eigen/Core>
#include <cmath>
#include <set>

#include "dyntex/error.hpp"

namespace dyntex {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct Overlap {
    std::size_t y0 = 0, rows = 0;  // anchor rows
    std::size_t x0 = 0, cols = 0;  // anchor columns
    long dy = 0, dx = 0;           // partner offset
    std::size_t size() const { return rows * cols; }
};

Overlap overlap(std::size_t h, std::size_t w, const CellShift& shift) {
    Overlap o;
    const long d = shift.cells;
    const std::size_t mag = static_cast<std::size_t>(d < 0 ? -d : d);
    if (shift.axis == ShiftAxis::Horizontal) {
        if (mag >= w) throw ShapeError("shifted_gram", "horizontal shift", "must be smaller than map width");
        o.rows = h;
        o.cols = w - mag;
        o.x0 = d < 0 ? mag : 0;
        o.dx = d;
    } else {
        if (mag >= h) throw ShapeError("shifted_gram", "vertical shift", "must be smaller than map height");
        o.rows = h - mag;
        o.cols = w;
        o.y0 = d < 0 ? mag : 0;
        o.dy = d;
    }
    return o;
}

// Copies anchor (F(p)) and partner (F(p + shift)) samples into (C, |O|) blocks.
void gather(const Tensor& f, const Overlap& o, RowMatrix& anchor, RowMatrix& partner) {
    const std::size_t c = f.extent(0), h = f.extent(1), w = f.extent(2);
    anchor.resize(static_cast<long>(c), static_cast<long>(o.size()));
    partner.resize(static_cast<long>(c), static_cast<long>(o.size()));
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = f.data() + ch * h * w;
        double* a = anchor.data() + ch * o.size();
        double* b = partner.data() + ch * o.size();
        for (std::size_t r = 0; r < o.rows; ++r) {
            const std::size_t y = o.y0 + r;
            const std::size_t py = static_cast<std::size_t>(static_cast<long>(y) + o.dy);
            for (std::size_t q = 0; q < o.cols; ++q) {
                const std::size_t x = o.x0 + q;
                const std::size_t px = static_cast<std::size_t>(static_cast<long>(x) + o.dx);
                a[r * o.cols + q] = plane[y * w + x];
                b[r * o.cols + q] = plane[py * w + px];
            }
        }
    }
}

void scatter_add(const RowMatrix& grad, const Overlap& o, bool partner_side, Tensor& out) {
    const std::size_t c = out.extent(0), h = out.extent(1), w = out.extent(2);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double* plane = out.data() + ch * h * w;
        const double* g = grad.data() + ch * o.size();
        for (std::size_t r = 0; r < o.rows; ++r) {
            std::size_t y = o.y0 + r;
            if (partner_side) y = static_cast<std::size_t>(static_cast<long>(y) + o.dy);
            for (std::size_t q = 0; q < o.cols; ++q) {
                std::size_t x = o.x0 + q;
                if (partner_side) x = static_cast<std::size_t>(static_cast<long>(x) + o.dx);
                plane[y * w + x] += g[r * o.cols + q];
            }
        }
    }
}

void require_map(const Tensor& f, const char* where) {
    if (f.rank() != 3) throw ShapeError(where, "feature rank", 3, f.rank());
}

void check_pair(const GramMatrix& target, const GramMatrix& synth, const char* where) {
    if (target.values.shape() != synth.values.shape())
        throw ShapeError(where, "Gram shape",
                         shape_string(target.values.shape()) + " vs " + shape_string(synth.values.shape()));
    if (target.shift != synth.shift) throw ShapeError(where, "shift descriptor", "target and synthesis shifts differ");
}

double squared_difference_loss(const GramMatrix& target, const GramMatrix& synth, std::size_t positions,
                               const char* where) {
    check_pair(target, synth, where);
    if (positions == 0) throw ShapeError(where, "positions", "must be >= 1");
    double sum = 0.0;
    for (std::size_t i = 0; i < target.values.size(); ++i) {
        const double d = target.values[i] - synth.values[i];
        sum += d * d;
    }
    return sum / static_cast<double>(positions);
}

}  // namespace

const char* axis_name(ShiftAxis axis) { return axis == ShiftAxis::Horizontal ? "horizontal" : "vertical"; }

std::vector<ShiftSpec> both_axes(const std::vector<std::size_t>& distances) {
    std::vector<ShiftSpec> out;
    for (std::size_t d : distances) {
        out.push_back({ShiftAxis::Horizontal, d});
        out.push_back({ShiftAxis::Vertical, d});
    }
    return out;
}

GramMatrix gram(const Tensor& features) {
    if (features.rank() != 2 && features.rank() != 3)
        throw ShapeError("gram", "feature rank", "expected (C, M) or (C, H, W)");
    const std::size_t c = features.extent(0);
    const std::size_t m = features.size() / c;
    GramMatrix g{Tensor({c, c}), m, std::nullopt};
    ConstMatrixMap f(features.data(), static_cast<long>(c), static_cast<long>(m));
    MatrixMap dst(g.values.data(), static_cast<long>(c), static_cast<long>(c));
    dst.noalias() = f * f.transpose();
    dst *= 1.0 / static_cast<double>(m);
    // Mirror the upper triangle so the result is exactly symmetric.
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = i + 1; j < c; ++j) g.values[j * c + i] = g.values[i * c + j];
    return g;
}

long shift_cells(std::size_t distance, std::size_t layer_stride) {
    if (layer_stride == 0) throw ShapeError("shift_cells", "layer stride", "must be >= 1");
    return std::lround(static_cast<double>(distance) / static_cast<double>(layer_stride));
}

std::optional<GramMatrix> shifted_gram(const Tensor& features, const ShiftSpec& shift, std::size_t layer_stride) {
    require_map(features, "shifted_gram");
    const long d = shift_cells(shift.distance, layer_stride);
    const std::size_t extent = shift.axis == ShiftAxis::Horizontal ? features.extent(2) : features.extent(1);
    if (d < 1 || static_cast<std::size_t>(d) >= extent) return std::nullopt;
    return shifted_gram(features, CellShift{shift.axis, d});
}

GramMatrix shifted_gram(const Tensor& features, const CellShift& shift) {
    require_map(features, "shifted_gram");
    // G(-d) is the transpose of G(+d); computing it that way keeps the
    // relation exact.
    const CellShift canonical = shift.cells < 0 ? shift.reversed() : shift;
    const Overlap o = overlap(features.extent(1), features.extent(2), canonical);
    RowMatrix anchor, partner;
    gather(features, o, anchor, partner);
    const std::size_t c = features.extent(0), n = o.size();
    GramMatrix g{Tensor({c, c}), n, shift};
    MatrixMap dst(g.values.data(), static_cast<long>(c), static_cast<long>(c));
    dst.noalias() = anchor * partner.transpose();
    dst *= 1.0 / static_cast<double>(n);
    if (shift.cells < 0) dst.transposeInPlace();
    return g;
}

GramMatrix mean_gram(const std::vector<GramMatrix>& grams) {
    if (grams.empty()) throw Error("mean_gram: no Gram matrices to average");
    GramMatrix out = grams.front();
    for (std::size_t k = 1; k < grams.size(); ++k) {
        check_pair(grams.front(), grams[k], "mean_gram");
        out.values += grams[k].values;
    }
    out.values *= 1.0 / static_cast<double>(grams.size());
    return out;
}

double appearance_layer_loss(const GramMatrix& target, const GramMatrix& synth, std::size_t positions) {
    return squared_difference_loss(target, synth, positions, "appearance_layer_loss");
}

double dynamics_layer_loss(const GramMatrix& target, const GramMatrix& synth, std::size_t positions) {
    return squared_difference_loss(target, synth, positions, "dynamics_layer_loss");
}

Tensor layer_loss_gradient(const GramMatrix& target, const GramMatrix& synth, std::size_t positions) {
    check_pair(target, synth, "layer_loss_gradient");
    Tensor g(synth.values.shape());
    const double k = 2.0 / static_cast<double>(positions);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = k * (synth.values[i] - target.values[i]);
    return g;
}

void gram_backward(const Tensor& features, const Tensor& gram_grad, std::size_t count,
                   const std::optional<CellShift>& shift, double scale, Tensor& out) {
    if (features.shape() != out.shape()) throw ShapeError("gram_backward", "output shape", "must match features");
    const std::size_t c = features.extent(0);
    if (gram_grad.shape() != Shape{c, c}) throw ShapeError("gram_backward", "Gram gradient shape", c, gram_grad.extent(0));
    ConstMatrixMap a(gram_grad.data(), static_cast<long>(c), static_cast<long>(c));
    const double k = scale / static_cast<double>(count);

    if (!shift) {
        const std::size_t m = features.size() / c;
        ConstMatrixMap f(features.data(), static_cast<long>(c), static_cast<long>(m));
        MatrixMap dst(out.data(), static_cast<long>(c), static_cast<long>(m));
        const RowMatrix sym = (a + a.transpose()) * k;
        dst.noalias() += sym * f;
        return;
    }
    require_map(features, "gram_backward");
    const Overlap o = overlap(features.extent(1), features.extent(2), *shift);
    RowMatrix anchor, partner;
    gather(features, o, anchor, partner);
    // G_ij = k' sum_p A_i(p) B_j(p): dA = k' G_grad B, dB = k' G_grad^T A.
    const RowMatrix d_anchor = (a * partner) * k;
    const RowMatrix d_partner = (a.transpose() * anchor) * k;
    scatter_add(d_anchor, o, false, out);
    scatter_add(d_partner, o, true, out);
}

LossConfig LossConfig::baseline() {
    LossConfig c;
    c.shifts.clear();
    c.intervals = {1};
    c.interval_weights = {1.0};
    return c;
}

void LossConfig::validate() const {
    bool any_layer = false;
    for (double w : layer_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("layer_weights", "weights must be finite and >= 0");
        any_layer = any_layer || w > 0.0;
    }
    if (!any_layer) throw ConfigError("layer_weights", "at least one appearance layer must have positive weight");
    for (const ShiftSpec& s : shifts)
        if (s.distance == 0) throw ConfigError("shifts", "shift distances must be > 0");
    if (intervals.empty()) throw ConfigError("intervals", "at least one interval is required");
    if (interval_weights.size() != intervals.size())
        throw ConfigError("interval_weights", "needs one weight per interval (" + std::to_string(intervals.size()) +
                                                  "), got " + std::to_string(interval_weights.size()));
    std::set<std::size_t> seen;
    for (std::size_t t : intervals) {
        if (t == 0) throw ConfigError("intervals", "intervals must be >= 1");
        if (!seen.insert(t).second) throw ConfigError("intervals", "duplicate interval " + std::to_string(t));
    }
    for (double a : interval_weights)
        if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("interval_weights", "weights must be finite and >= 0");
    if (!(dynamics_layer_weight >= 0.0) || !std::isfinite(dynamics_layer_weight))
        throw ConfigError("dynamics_layer_weight", "must be finite and >= 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda", "must be finite and >= 0");
    if (pyramid_scales < 1) throw ConfigError("pyramid_scales", "must be >= 1");
}

void LossConfig::validate(std::size_t frames) const {
    validate();
    for (std::size_t t : intervals) {
        if (t >= frames)
            throw ConfigError("intervals", "interval " + std::to_string(t) + " needs more than " +
                                               std::to_string(frames) + " frames");
    }
}

double LossConfig::interval_weight(std::size_t interval) const {
    for (std::size_t k = 0; k < intervals.size(); ++k)
        if (intervals[k] == interval) return interval_weights.at(k);
    throw ConfigError("intervals", "interval " + std::to_string(interval) + " is not configured");
}

}  // namespace dyntex
