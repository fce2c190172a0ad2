#include "dyntex/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "dyntex/error.hpp"

namespace dyntex {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
    std::size_t channels = 0;  // kernel_t * in_channels
    std::size_t height = 0;
    std::size_t width = 0;
    AxisGeometry rows;
    AxisGeometry cols;
};

ConvGeometry conv_geometry(const Shape& input_shape, const ConvSpec& spec, const char* where) {
    spec.validate();
    ConvGeometry g;
    if (spec.kernel_t == 1) {
        if (input_shape.size() != 3) throw ShapeError(where, "input rank", 3, input_shape.size());
        if (input_shape[0] != spec.in_channels)
            throw ShapeError(where, "input channels", spec.in_channels, input_shape[0]);
        g.height = input_shape[1];
        g.width = input_shape[2];
    } else {
        if (input_shape.size() != 4) throw ShapeError(where, "input rank", 4, input_shape.size());
        if (input_shape[0] != spec.kernel_t)
            throw ShapeError(where, "input frames", spec.kernel_t, input_shape[0]);
        if (input_shape[1] != spec.in_channels)
            throw ShapeError(where, "input channels", spec.in_channels, input_shape[1]);
        g.height = input_shape[2];
        g.width = input_shape[3];
    }
    g.channels = spec.kernel_t * spec.in_channels;
    if (spec.padding == Padding::Valid) {
        if (g.height < spec.kernel_h) throw ShapeError(where, "input height", "smaller than kernel height");
        if (g.width < spec.kernel_w) throw ShapeError(where, "input width", "smaller than kernel width");
    }
    g.rows = axis_geometry(g.height, spec.kernel_h, spec.stride, spec.padding);
    g.cols = axis_geometry(g.width, spec.kernel_w, spec.stride, spec.padding);
    return g;
}

void check_weights(const Tensor& weights, const ConvSpec& spec, const char* where) {
    const Shape expected = spec.weight_shape();
    if (weights.rank() != expected.size()) throw ShapeError(where, "weight rank", expected.size(), weights.rank());
    static const char* names[] = {"weight out_channels", "weight kernel_t", "weight in_channels",
                                  "weight kernel_h", "weight kernel_w"};
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (weights.extent(i) != expected[i]) throw ShapeError(where, names[i], expected[i], weights.extent(i));
    }
}

bool is_pointwise(const ConvSpec& spec) {
    return spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1;
}

// Lowers the input into a (channels*kh*kw) x (out_h*out_w) matrix.
void im2col(const double* input, const ConvGeometry& g, const ConvSpec& spec, double* col) {
    const std::size_t out_h = g.rows.out;
    const std::size_t out_w = g.cols.out;
    const long pad_t = static_cast<long>(g.rows.pad_before);
    const long pad_l = static_cast<long>(g.cols.pad_before);
    const long h = static_cast<long>(g.height);
    const long w = static_cast<long>(g.width);
    const long s = static_cast<long>(spec.stride);
    for (std::size_t c = 0; c < g.channels; ++c) {
        const double* plane = input + c * g.height * g.width;
        for (std::size_t ki = 0; ki < spec.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < spec.kernel_w; ++kj) {
                double* row = col + ((c * spec.kernel_h + ki) * spec.kernel_w + kj) * out_h * out_w;
                for (std::size_t oy = 0; oy < out_h; ++oy) {
                    const long iy = static_cast<long>(oy) * s + static_cast<long>(ki) - pad_t;
                    double* dst = row + oy * out_w;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + out_w, 0.0);
                        continue;
                    }
                    const double* src = plane + iy * w;
                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const long ix = static_cast<long>(ox) * s + static_cast<long>(kj) - pad_l;
                        dst[ox] = (ix < 0 || ix >= w) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void col2im(const double* col, const ConvGeometry& g, const ConvSpec& spec, double* input) {
    const std::size_t out_h = g.rows.out;
    const std::size_t out_w = g.cols.out;
    const long pad_t = static_cast<long>(g.rows.pad_before);
    const long pad_l = static_cast<long>(g.cols.pad_before);
    const long h = static_cast<long>(g.height);
    const long w = static_cast<long>(g.width);
    const long s = static_cast<long>(spec.stride);
    for (std::size_t c = 0; c < g.channels; ++c) {
        double* plane = input + c * g.height * g.width;
        for (std::size_t ki = 0; ki < spec.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < spec.kernel_w; ++kj) {
                const double* row = col + ((c * spec.kernel_h + ki) * spec.kernel_w + kj) * out_h * out_w;
                for (std::size_t oy = 0; oy < out_h; ++oy) {
                    const long iy = static_cast<long>(oy) * s + static_cast<long>(ki) - pad_t;
                    if (iy < 0 || iy >= h) continue;
                    const double* src = row + oy * out_w;
                    double* dst = plane + iy * w;
                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const long ix = static_cast<long>(ox) * s + static_cast<long>(kj) - pad_l;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

void require_rank3(const Tensor& t, const char* where) {
    if (t.rank() != 3) throw ShapeError(where, "input rank", 3, t.rank());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (a.shape() != b.shape())
        throw ShapeError(where, "upstream shape", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

void ConvSpec::validate() const {
    if (stride < 1) throw ShapeError("ConvSpec", "stride", "must be >= 1");
    if (kernel_h < 1 || kernel_w < 1) throw ShapeError("ConvSpec", "kernel extent", "must be >= 1");
    if (kernel_t != 1 && kernel_t != 2) throw ShapeError("ConvSpec", "temporal extent", "must be 1 or 2");
    if (in_channels < 1 || out_channels < 1) throw ShapeError("ConvSpec", "channels", "must be >= 1");
}

Shape ConvSpec::input_shape(std::size_t height, std::size_t width) const {
    if (kernel_t == 1) return {in_channels, height, width};
    return {kernel_t, in_channels, height, width};
}

AxisGeometry axis_geometry(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
    AxisGeometry g;
    if (padding == Padding::Valid) {
        g.out = in < kernel ? 0 : (in - kernel) / stride + 1;
        return g;
    }
    g.out = (in + stride - 1) / stride;
    const std::size_t needed = (g.out - 1) * stride + kernel;
    g.pad_before = needed > in ? (needed - in) / 2 : 0;
    return g;
}

Tensor conv_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, const ConvSpec& spec) {
    const ConvGeometry g = conv_geometry(input.shape(), spec, "conv_forward");
    check_weights(weights, spec, "conv_forward");
    if (bias.rank() != 1 || bias.extent(0) != spec.out_channels)
        throw ShapeError("conv_forward", "bias length", spec.out_channels, bias.size());

    const std::size_t k = g.channels * spec.kernel_h * spec.kernel_w;
    const std::size_t n = g.rows.out * g.cols.out;
    Tensor out({spec.out_channels, g.rows.out, g.cols.out});
    MatrixMap y(out.data(), static_cast<long>(spec.out_channels), static_cast<long>(n));
    ConstMatrixMap w(weights.data(), static_cast<long>(spec.out_channels), static_cast<long>(k));

    if (is_pointwise(spec)) {
        ConstMatrixMap x(input.data(), static_cast<long>(k), static_cast<long>(n));
        y.noalias() = w * x;
    } else {
        std::vector<double> col(k * n);
        im2col(input.data(), g, spec, col.data());
        ConstMatrixMap x(col.data(), static_cast<long>(k), static_cast<long>(n));
        y.noalias() = w * x;
    }
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
        const double b = bias[o];
        if (b == 0.0) continue;
        double* row = out.data() + o * n;
        for (std::size_t i = 0; i < n; ++i) row[i] += b;
    }
    return out;
}

Tensor conv_backward(const Shape& input_shape, const Tensor& weights, const ConvSpec& spec, const Tensor& upstream) {
    const ConvGeometry g = conv_geometry(input_shape, spec, "conv_backward");
    check_weights(weights, spec, "conv_backward");
    const Shape expected_up{spec.out_channels, g.rows.out, g.cols.out};
    if (upstream.shape() != expected_up)
        throw ShapeError("conv_backward", "upstream shape", shape_string(expected_up) + " vs " +
                                                                 shape_string(upstream.shape()));

    const std::size_t k = g.channels * spec.kernel_h * spec.kernel_w;
    const std::size_t n = g.rows.out * g.cols.out;
    ConstMatrixMap w(weights.data(), static_cast<long>(spec.out_channels), static_cast<long>(k));
    ConstMatrixMap dy(upstream.data(), static_cast<long>(spec.out_channels), static_cast<long>(n));
    Tensor grad(input_shape);

    if (is_pointwise(spec)) {
        MatrixMap dx(grad.data(), static_cast<long>(k), static_cast<long>(n));
        dx.noalias() = w.transpose() * dy;
    } else {
        std::vector<double> col(k * n);
        MatrixMap dcol(col.data(), static_cast<long>(k), static_cast<long>(n));
        dcol.noalias() = w.transpose() * dy;
        col2im(col.data(), g, spec, grad.data());
    }
    return grad;
}

MaxPoolResult maxpool_forward(const Tensor& input, std::size_t window, std::size_t stride, Padding padding) {
    require_rank3(input, "maxpool_forward");
    if (window < 1 || stride < 1) throw ShapeError("maxpool_forward", "window", "window and stride must be >= 1");
    const std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
    if (window > h) throw ShapeError("maxpool_forward", "input height", "window larger than input");
    if (window > w) throw ShapeError("maxpool_forward", "input width", "window larger than input");
    const AxisGeometry rows = axis_geometry(h, window, stride, padding);
    const AxisGeometry cols = axis_geometry(w, window, stride, padding);

    MaxPoolResult r{Tensor({c, rows.out, cols.out}), std::vector<std::size_t>(c * rows.out * cols.out)};
    std::size_t o = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = ch * h * w;
        for (std::size_t oy = 0; oy < rows.out; ++oy) {
            const long y0 = static_cast<long>(oy * stride) - static_cast<long>(rows.pad_before);
            const std::size_t ylo = static_cast<std::size_t>(std::max(y0, 0L));
            const std::size_t yhi = std::min(static_cast<std::size_t>(y0 + static_cast<long>(window)), h);
            for (std::size_t ox = 0; ox < cols.out; ++ox, ++o) {
                const long x0 = static_cast<long>(ox * stride) - static_cast<long>(cols.pad_before);
                const std::size_t xlo = static_cast<std::size_t>(std::max(x0, 0L));
                const std::size_t xhi = std::min(static_cast<std::size_t>(x0 + static_cast<long>(window)), w);
                std::size_t best = base + ylo * w + xlo;
                double best_v = input[best];
                for (std::size_t y = ylo; y < yhi; ++y) {
                    for (std::size_t x = xlo; x < xhi; ++x) {
                        const std::size_t idx = base + y * w + x;
                        if (input[idx] > best_v) {
                            best_v = input[idx];
                            best = idx;
                        }
                    }
                }
                r.output[o] = best_v;
                r.argmax[o] = best;
            }
        }
    }
    return r;
}

Tensor maxpool_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax, const Tensor& upstream) {
    if (argmax.size() != upstream.size())
        throw ShapeError("maxpool_backward", "upstream size", argmax.size(), upstream.size());
    Tensor grad(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        if (argmax[i] >= grad.size()) throw ShapeError("maxpool_backward", "argmax", "offset out of range");
        grad[argmax[i]] += upstream[i];
    }
    return grad;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
    require_same_shape(input, upstream, "relu_backward");
    Tensor grad(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) grad[i] = input[i] > 0.0 ? upstream[i] : 0.0;
    return grad;
}

Tensor square_forward(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.values()) v = v * v;
    return out;
}

Tensor square_backward(const Tensor& input, const Tensor& upstream) {
    require_same_shape(input, upstream, "square_backward");
    Tensor grad(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) grad[i] = 2.0 * input[i] * upstream[i];
    return grad;
}

Tensor divnorm_l1_forward(const Tensor& input) {
    require_rank3(input, "divnorm_l1_forward");
    const std::size_t c = input.extent(0), m = input.extent(1) * input.extent(2);
    std::vector<double> denom(m, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* x = input.data() + ch * m;
        for (std::size_t p = 0; p < m; ++p) denom[p] += std::abs(x[p]);
    }
    for (double& d : denom) d += kDivNormEpsilon;
    Tensor out(input.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* x = input.data() + ch * m;
        double* y = out.data() + ch * m;
        for (std::size_t p = 0; p < m; ++p) y[p] = x[p] / denom[p];
    }
    return out;
}

// With S = sum|x| + eps: dL/dx_k = g_k / S - sign(x_k) * (sum_c g_c x_c) / S^2.
Tensor divnorm_l1_backward(const Tensor& input, const Tensor& upstream) {
    require_rank3(input, "divnorm_l1_backward");
    require_same_shape(input, upstream, "divnorm_l1_backward");
    const std::size_t c = input.extent(0), m = input.extent(1) * input.extent(2);
    std::vector<double> denom(m, 0.0), dot(m, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* x = input.data() + ch * m;
        const double* g = upstream.data() + ch * m;
        for (std::size_t p = 0; p < m; ++p) {
            denom[p] += std::abs(x[p]);
            dot[p] += g[p] * x[p];
        }
    }
    for (double& d : denom) d += kDivNormEpsilon;
    Tensor grad(input.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* x = input.data() + ch * m;
        const double* g = upstream.data() + ch * m;
        double* dx = grad.data() + ch * m;
        for (std::size_t p = 0; p < m; ++p) {
            const double sign = x[p] > 0.0 ? 1.0 : (x[p] < 0.0 ? -1.0 : 0.0);
            dx[p] = g[p] / denom[p] - sign * dot[p] / (denom[p] * denom[p]);
        }
    }
    return grad;
}

Tensor downsample2x(const Tensor& input) {
    if (input.rank() < 2) throw ShapeError("downsample2x", "input rank", "must be >= 2");
    const std::size_t h = input.extent(input.rank() - 2), w = input.extent(input.rank() - 1);
    if (h < 2) throw ShapeError("downsample2x", "input height", "must be >= 2");
    if (w < 2) throw ShapeError("downsample2x", "input width", "must be >= 2");
    const std::size_t oh = h / 2, ow = w / 2;
    const std::size_t planes = input.size() / (h * w);
    Shape out_shape = input.shape();
    out_shape[out_shape.size() - 2] = oh;
    out_shape[out_shape.size() - 1] = ow;
    Tensor out(out_shape);
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = input.data() + p * h * w;
        double* dst = out.data() + p * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            const double* r0 = src + 2 * y * w;
            const double* r1 = r0 + w;
            for (std::size_t x = 0; x < ow; ++x)
                dst[y * ow + x] = 0.25 * ((r0[2 * x] + r0[2 * x + 1]) + (r1[2 * x] + r1[2 * x + 1]));
        }
    }
    return out;
}

Tensor downsample2x_backward(const Shape& input_shape, const Tensor& upstream) {
    if (input_shape.size() < 2) throw ShapeError("downsample2x_backward", "input rank", "must be >= 2");
    const std::size_t h = input_shape[input_shape.size() - 2], w = input_shape[input_shape.size() - 1];
    const std::size_t oh = h / 2, ow = w / 2;
    Shape expected = input_shape;
    expected[expected.size() - 2] = oh;
    expected[expected.size() - 1] = ow;
    if (upstream.shape() != expected)
        throw ShapeError("downsample2x_backward", "upstream shape",
                         shape_string(expected) + " vs " + shape_string(upstream.shape()));
    Tensor grad(input_shape);
    const std::size_t planes = grad.size() / (h * w);
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = upstream.data() + p * oh * ow;
        double* dst = grad.data() + p * h * w;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const double g = 0.25 * src[y * ow + x];
                dst[2 * y * w + 2 * x] = g;
                dst[2 * y * w + 2 * x + 1] = g;
                dst[(2 * y + 1) * w + 2 * x] = g;
                dst[(2 * y + 1) * w + 2 * x + 1] = g;
            }
        }
    }
    return grad;
}

Tensor upsample_nearest(const Tensor& input, unsigned level, std::size_t height, std::size_t width) {
    require_rank3(input, "upsample_nearest");
    const std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
    Tensor out({c, height, width});
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = input.data() + ch * h * w;
        double* dst = out.data() + ch * height * width;
        for (std::size_t y = 0; y < height; ++y) {
            const std::size_t sy = std::min(y >> level, h - 1);
            for (std::size_t x = 0; x < width; ++x) dst[y * width + x] = src[sy * w + std::min(x >> level, w - 1)];
        }
    }
    return out;
}

Tensor upsample_nearest_backward(const Shape& input_shape, unsigned level, const Tensor& upstream) {
    if (input_shape.size() != 3) throw ShapeError("upsample_nearest_backward", "input rank", 3, input_shape.size());
    if (upstream.rank() != 3 || upstream.extent(0) != input_shape[0])
        throw ShapeError("upsample_nearest_backward", "upstream channels", input_shape[0],
                         upstream.rank() == 3 ? upstream.extent(0) : 0);
    const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
    const std::size_t height = upstream.extent(1), width = upstream.extent(2);
    Tensor grad(input_shape);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = upstream.data() + ch * height * width;
        double* dst = grad.data() + ch * h * w;
        for (std::size_t y = 0; y < height; ++y) {
            const std::size_t sy = std::min(y >> level, h - 1);
            for (std::size_t x = 0; x < width; ++x) dst[sy * w + std::min(x >> level, w - 1)] += src[y * width + x];
        }
    }
    return grad;
}

}  // namespace dyntex
