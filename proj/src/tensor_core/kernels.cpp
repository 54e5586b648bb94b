#include "cenhdr/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cenhdr::kernels {

namespace {

// Upper bound on the im2col scratch buffer, in doubles (32 MiB).
constexpr std::int64_t kColumnBudget = std::int64_t{1} << 22;

std::string dims(std::int64_t expected, std::int64_t actual) {
    return "expected " + std::to_string(expected) + ", got " + std::to_string(actual);
}

struct ConvGeometry {
    std::int64_t c_in, h, w;
    std::int64_t c_out, k;
    std::int64_t h_out, w_out;
    int stride, padding, dilation;

    std::int64_t patch() const { return c_in * k * k; }
    std::int64_t rows_per_tile() const { return std::clamp<std::int64_t>(kColumnBudget / std::max<std::int64_t>(1, patch() * w_out), 1, h_out); }
};

ConvGeometry geometry(const Shape& in, const Shape& wt, const Shape& out, Conv2dParams p) {
    return {in.c, in.h, in.w, wt.n, wt.h, out.h, out.w, p.stride, p.padding, p.dilation};
}

// Lower rows [y0, y0 + rows) of the output of batch item `src` into `col`
// laid out as [patch][rows * w_out].
template <typename T>
void im2col(const T* src, const ConvGeometry& g, std::int64_t y0, std::int64_t rows, double* col) {
    const std::int64_t pixels = rows * g.w_out;
    for (std::int64_t ci = 0; ci < g.c_in; ++ci) {
        const T* plane = src + ci * g.h * g.w;
        for (std::int64_t ky = 0; ky < g.k; ++ky) {
            for (std::int64_t kx = 0; kx < g.k; ++kx) {
                double* dst = col + ((ci * g.k + ky) * g.k + kx) * pixels;
                for (std::int64_t oy = 0; oy < rows; ++oy) {
                    const std::int64_t iy = (y0 + oy) * g.stride - g.padding + ky * g.dilation;
                    double* row = dst + oy * g.w_out;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(row, row + g.w_out, 0.0);
                        continue;
                    }
                    const T* line = plane + iy * g.w;
                    for (std::int64_t ox = 0; ox < g.w_out; ++ox) {
                        const std::int64_t ix = ox * g.stride - g.padding + kx * g.dilation;
                        row[ox] = (ix >= 0 && ix < g.w) ? static_cast<double>(line[ix]) : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add of a column buffer back into an image (the adjoint of im2col).
void col2im(const double* col, const ConvGeometry& g, std::int64_t y0, std::int64_t rows, double* dst) {
    const std::int64_t pixels = rows * g.w_out;
    for (std::int64_t ci = 0; ci < g.c_in; ++ci) {
        double* plane = dst + ci * g.h * g.w;
        for (std::int64_t ky = 0; ky < g.k; ++ky) {
            for (std::int64_t kx = 0; kx < g.k; ++kx) {
                const double* src = col + ((ci * g.k + ky) * g.k + kx) * pixels;
                for (std::int64_t oy = 0; oy < rows; ++oy) {
                    const std::int64_t iy = (y0 + oy) * g.stride - g.padding + ky * g.dilation;
                    if (iy < 0 || iy >= g.h) continue;
                    const double* row = src + oy * g.w_out;
                    double* line = plane + iy * g.w;
                    for (std::int64_t ox = 0; ox < g.w_out; ++ox) {
                        const std::int64_t ix = ox * g.stride - g.padding + kx * g.dilation;
                        if (ix >= 0 && ix < g.w) line[ix] += row[ox];
                    }
                }
            }
        }
    }
}

template <typename T>
std::vector<double> to_double(const BasicTensor<T>& t) {
    return std::vector<double>(t.data().begin(), t.data().end());
}

void require_same(const char* op, const Shape& a, const Shape& b) {
    if (a.n != b.n) throw DimensionError(op, "batch", dims(a.n, b.n));
    if (a.c != b.c) throw DimensionError(op, "channels", dims(a.c, b.c));
    if (a.h != b.h) throw DimensionError(op, "height", dims(a.h, b.h));
    if (a.w != b.w) throw DimensionError(op, "width", dims(a.w, b.w));
}

enum class Broadcast { none, channel_map, channel_vector };

Broadcast broadcast_mode(const char* op, const Shape& a, const Shape& b) {
    if (a == b) return Broadcast::none;
    if (a.n != b.n) throw DimensionError(op, "batch", dims(a.n, b.n));
    if (b.c == 1 && b.h == a.h && b.w == a.w) return Broadcast::channel_map;
    if (b.c == a.c && b.h == 1 && b.w == 1) return Broadcast::channel_vector;
    throw DimensionError(op, "broadcast", "cannot broadcast " + b.str() + " onto " + a.str());
}

}  // namespace

void set_thread_limit(int threads) {
    if (threads > 0) openblas_set_num_threads(threads);
}

Shape conv2d_output_shape(const Shape& in, const Shape& wt, const Shape* bias, Conv2dParams p) {
    if (p.stride < 1) throw DimensionError("conv2d", "stride", "must be >= 1");
    if (p.padding < 0) throw DimensionError("conv2d", "padding", "must be >= 0");
    if (p.dilation < 1) throw DimensionError("conv2d", "dilation", "must be >= 1");
    if (wt.h != wt.w) throw DimensionError("conv2d", "kernel", "kernel must be square, got " + wt.str());
    if (wt.h % 2 == 0) throw DimensionError("conv2d", "kernel", "kernel size must be odd, got " + std::to_string(wt.h));
    if (in.c != wt.c) throw DimensionError("conv2d", "channels", dims(wt.c, in.c));
    if (bias && bias->numel() != 0 && bias->numel() != wt.n) throw DimensionError("conv2d", "bias", dims(wt.n, bias->numel()));
    const std::int64_t span = static_cast<std::int64_t>(p.dilation) * (wt.h - 1) + 1;
    const std::int64_t h_num = in.h + 2 * p.padding - span;
    const std::int64_t w_num = in.w + 2 * p.padding - span;
    if (h_num < 0) throw DimensionError("conv2d", "height", "output would be empty for input height " + std::to_string(in.h));
    if (w_num < 0) throw DimensionError("conv2d", "width", "output would be empty for input width " + std::to_string(in.w));
    return {in.n, wt.n, h_num / p.stride + 1, w_num / p.stride + 1};
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias, Conv2dParams p) {
    const Shape out_shape = conv2d_output_shape(input.shape(), weight.shape(), &bias.shape(), p);
    BasicTensor<T> out(out_shape);
    const ConvGeometry g = geometry(input.shape(), weight.shape(), out_shape, p);
    const std::vector<double> w = to_double(weight);
    const std::int64_t tile_rows = g.rows_per_tile();
    std::vector<double> col(static_cast<std::size_t>(g.patch() * tile_rows * g.w_out));
    std::vector<double> res(static_cast<std::size_t>(g.c_out * tile_rows * g.w_out));

    for (std::int64_t n = 0; n < out_shape.n; ++n) {
        const T* src = input.plane(n, 0);
        for (std::int64_t y0 = 0; y0 < g.h_out; y0 += tile_rows) {
            const std::int64_t rows = std::min(tile_rows, g.h_out - y0);
            const std::int64_t pixels = rows * g.w_out;
            im2col(src, g, y0, rows, col.data());
            for (std::int64_t co = 0; co < g.c_out; ++co) {
                const double b = bias.empty() ? 0.0 : static_cast<double>(bias[static_cast<std::size_t>(co)]);
                std::fill_n(res.data() + co * pixels, pixels, b);
            }
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(g.c_out), static_cast<int>(pixels), static_cast<int>(g.patch()), 1.0,
                        w.data(), static_cast<int>(g.patch()), col.data(), static_cast<int>(pixels), 1.0, res.data(), static_cast<int>(pixels));
            for (std::int64_t co = 0; co < g.c_out; ++co) {
                T* dst = out.plane(n, co) + y0 * g.w_out;
                const double* r = res.data() + co * pixels;
                for (std::int64_t i = 0; i < pixels; ++i) dst[i] = static_cast<T>(r[i]);
            }
        }
    }
    return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& grad_out, Conv2dParams p, bool need_input,
                               bool need_weight, bool need_bias) {
    const Shape out_shape = conv2d_output_shape(input.shape(), weight.shape(), nullptr, p);
    require_same("conv2d_backward", out_shape, grad_out.shape());
    const ConvGeometry g = geometry(input.shape(), weight.shape(), out_shape, p);
    Conv2dGrads<T> grads;

    if (need_bias) {
        grads.bias = BasicTensor<T>({1, g.c_out, 1, 1});
        for (std::int64_t co = 0; co < g.c_out; ++co) {
            double acc = 0.0;
            for (std::int64_t n = 0; n < out_shape.n; ++n) {
                const T* src = grad_out.plane(n, co);
                for (std::int64_t i = 0; i < out_shape.plane(); ++i) acc += src[i];
            }
            grads.bias[static_cast<std::size_t>(co)] = static_cast<T>(acc);
        }
    }
    if (!need_input && !need_weight) return grads;

    const std::vector<double> w = to_double(weight);
    const std::int64_t tile_rows = g.rows_per_tile();
    std::vector<double> col(static_cast<std::size_t>(g.patch() * tile_rows * g.w_out));
    std::vector<double> gtile(static_cast<std::size_t>(g.c_out * tile_rows * g.w_out));
    std::vector<double> gw(need_weight ? static_cast<std::size_t>(g.c_out * g.patch()) : 0, 0.0);
    std::vector<double> gin(need_input ? static_cast<std::size_t>(g.c_in * g.h * g.w) : 0);
    if (need_input) grads.input = BasicTensor<T>(input.shape());

    for (std::int64_t n = 0; n < out_shape.n; ++n) {
        if (need_input) std::fill(gin.begin(), gin.end(), 0.0);
        for (std::int64_t y0 = 0; y0 < g.h_out; y0 += tile_rows) {
            const std::int64_t rows = std::min(tile_rows, g.h_out - y0);
            const std::int64_t pixels = rows * g.w_out;
            for (std::int64_t co = 0; co < g.c_out; ++co) {
                const T* src = grad_out.plane(n, co) + y0 * g.w_out;
                std::copy(src, src + pixels, gtile.data() + co * pixels);
            }
            if (need_weight) {
                im2col(input.plane(n, 0), g, y0, rows, col.data());
                cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(g.c_out), static_cast<int>(g.patch()), static_cast<int>(pixels), 1.0,
                            gtile.data(), static_cast<int>(pixels), col.data(), static_cast<int>(pixels), 1.0, gw.data(), static_cast<int>(g.patch()));
            }
            if (need_input) {
                cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(g.patch()), static_cast<int>(pixels), static_cast<int>(g.c_out), 1.0,
                            w.data(), static_cast<int>(g.patch()), gtile.data(), static_cast<int>(pixels), 0.0, col.data(), static_cast<int>(pixels));
                col2im(col.data(), g, y0, rows, gin.data());
            }
        }
        if (need_input) {
            T* dst = grads.input.plane(n, 0);
            for (std::size_t i = 0; i < gin.size(); ++i) dst[i] = static_cast<T>(gin[i]);
        }
    }
    if (need_weight) {
        grads.weight = BasicTensor<T>(weight.shape());
        for (std::size_t i = 0; i < gw.size(); ++i) grads.weight[i] = static_cast<T>(gw[i]);
    }
    return grads;
}

template <typename T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& input, int r) {
    const Shape& s = input.shape();
    if (r < 1) throw DimensionError("pixel_shuffle", "factor", "upscale factor must be >= 1");
    const std::int64_t rr = static_cast<std::int64_t>(r) * r;
    if (s.c % rr != 0) throw DimensionError("pixel_shuffle", "channels", std::to_string(s.c) + " not divisible by r^2 = " + std::to_string(rr));
    BasicTensor<T> out({s.n, s.c / rr, s.h * r, s.w * r});
    const Shape& o = out.shape();
    for (std::int64_t n = 0; n < o.n; ++n)
        for (std::int64_t c = 0; c < o.c; ++c)
            for (std::int64_t y = 0; y < o.h; ++y)
                for (std::int64_t x = 0; x < o.w; ++x) out.at(n, c, y, x) = input.at(n, c * rr + (y % r) * r + (x % r), y / r, x / r);
    return out;
}

template <typename T>
BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& input, int r) {
    const Shape& s = input.shape();
    if (r < 1) throw DimensionError("pixel_unshuffle", "factor", "downscale factor must be >= 1");
    if (s.h % r != 0) throw DimensionError("pixel_unshuffle", "height", std::to_string(s.h) + " not divisible by " + std::to_string(r));
    if (s.w % r != 0) throw DimensionError("pixel_unshuffle", "width", std::to_string(s.w) + " not divisible by " + std::to_string(r));
    const std::int64_t rr = static_cast<std::int64_t>(r) * r;
    BasicTensor<T> out({s.n, s.c * rr, s.h / r, s.w / r});
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < s.h; ++y)
                for (std::int64_t x = 0; x < s.w; ++x) out.at(n, c * rr + (y % r) * r + (x % r), y / r, x / r) = input.at(n, c, y, x);
    return out;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input) {
    const Shape& s = input.shape();
    if (s.plane() < 1) throw DimensionError("global_avg_pool", "spatial", "empty spatial extent " + s.str());
    BasicTensor<T> out({s.n, s.c, 1, 1});
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c) {
            const T* src = input.plane(n, c);
            double acc = 0.0;
            for (std::int64_t i = 0; i < s.plane(); ++i) acc += src[i];
            out.at(n, c, 0, 0) = static_cast<T>(acc / static_cast<double>(s.plane()));
        }
    return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& grad_out, const Shape& input_shape) {
    require_same("global_avg_pool_backward", {input_shape.n, input_shape.c, 1, 1}, grad_out.shape());
    BasicTensor<T> out(input_shape);
    const double inv = 1.0 / static_cast<double>(input_shape.plane());
    for (std::int64_t n = 0; n < input_shape.n; ++n)
        for (std::int64_t c = 0; c < input_shape.c; ++c) {
            const T g = static_cast<T>(static_cast<double>(grad_out.at(n, c, 0, 0)) * inv);
            std::fill_n(out.plane(n, c), input_shape.plane(), g);
        }
    return out;
}

namespace {
void check_linear(const Shape& in, const Shape& wt, const Shape* bias) {
    if (in.h != 1 || in.w != 1) throw DimensionError("linear", "spatial", "input must be (n, c, 1, 1), got " + in.str());
    if (wt.h != 1 || wt.w != 1) throw DimensionError("linear", "weight", "weight must be (c_out, c_in, 1, 1), got " + wt.str());
    if (in.c != wt.c) throw DimensionError("linear", "channels", dims(wt.c, in.c));
    if (bias && bias->numel() != 0 && bias->numel() != wt.n) throw DimensionError("linear", "bias", dims(wt.n, bias->numel()));
}
}  // namespace

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
    check_linear(input.shape(), weight.shape(), &bias.shape());
    const std::int64_t batch = input.shape().n, c_in = weight.shape().c, c_out = weight.shape().n;
    BasicTensor<T> out({batch, c_out, 1, 1});
    for (std::int64_t n = 0; n < batch; ++n)
        for (std::int64_t o = 0; o < c_out; ++o) {
            double acc = bias.empty() ? 0.0 : static_cast<double>(bias[static_cast<std::size_t>(o)]);
            for (std::int64_t i = 0; i < c_in; ++i) acc += static_cast<double>(weight[static_cast<std::size_t>(o * c_in + i)]) * static_cast<double>(input[static_cast<std::size_t>(n * c_in + i)]);
            out[static_cast<std::size_t>(n * c_out + o)] = static_cast<T>(acc);
        }
    return out;
}

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& grad_out) {
    check_linear(input.shape(), weight.shape(), nullptr);
    const std::int64_t batch = input.shape().n, c_in = weight.shape().c, c_out = weight.shape().n;
    require_same("linear_backward", {batch, c_out, 1, 1}, grad_out.shape());
    LinearGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weight.shape()), BasicTensor<T>({1, c_out, 1, 1})};
    for (std::int64_t n = 0; n < batch; ++n)
        for (std::int64_t i = 0; i < c_in; ++i) {
            double acc = 0.0;
            for (std::int64_t o = 0; o < c_out; ++o) acc += static_cast<double>(weight[static_cast<std::size_t>(o * c_in + i)]) * static_cast<double>(grad_out[static_cast<std::size_t>(n * c_out + o)]);
            g.input[static_cast<std::size_t>(n * c_in + i)] = static_cast<T>(acc);
        }
    for (std::int64_t o = 0; o < c_out; ++o) {
        double bacc = 0.0;
        for (std::int64_t n = 0; n < batch; ++n) bacc += grad_out[static_cast<std::size_t>(n * c_out + o)];
        g.bias[static_cast<std::size_t>(o)] = static_cast<T>(bacc);
        for (std::int64_t i = 0; i < c_in; ++i) {
            double acc = 0.0;
            for (std::int64_t n = 0; n < batch; ++n) acc += static_cast<double>(grad_out[static_cast<std::size_t>(n * c_out + o)]) * static_cast<double>(input[static_cast<std::size_t>(n * c_in + i)]);
            g.weight[static_cast<std::size_t>(o * c_in + i)] = static_cast<T>(acc);
        }
    }
    return g;
}

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& input, Activation kind) {
    BasicTensor<T> out(input.shape());
    auto src = input.data();
    auto dst = out.data();
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
    } else {
        for (std::size_t i = 0; i < src.size(); ++i) {
            // Split on sign so exp never overflows.
            const T x = src[i];
            if (x >= T(0)) {
                dst[i] = T(1) / (T(1) + std::exp(-x));
            } else {
                const T e = std::exp(x);
                dst[i] = e / (T(1) + e);
            }
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> activation_backward(const BasicTensor<T>& input, const BasicTensor<T>& output, const BasicTensor<T>& grad_out, Activation kind) {
    require_same("activation_backward", input.shape(), grad_out.shape());
    BasicTensor<T> g(input.shape());
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < g.data().size(); ++i) g[i] = input[i] > T(0) ? grad_out[i] : T(0);
    } else {
        for (std::size_t i = 0; i < g.data().size(); ++i) g[i] = grad_out[i] * output[i] * (T(1) - output[i]);
    }
    return g;
}

template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, Binary kind) {
    const Broadcast mode = broadcast_mode("elementwise", a.shape(), b.shape());
    const Shape& s = a.shape();
    BasicTensor<T> out(s);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c) {
            const T* pa = a.plane(n, c);
            T* po = out.plane(n, c);
            const T* pb = mode == Broadcast::none ? b.plane(n, c) : mode == Broadcast::channel_map ? b.plane(n, 0) : nullptr;
            const T scalar = mode == Broadcast::channel_vector ? b.at(n, c, 0, 0) : T(0);
            for (std::int64_t i = 0; i < s.plane(); ++i) {
                const T bv = pb ? pb[i] : scalar;
                po[i] = kind == Binary::add ? pa[i] + bv : pa[i] * bv;
            }
        }
    return out;
}

template <typename T>
BinaryGrads<T> elementwise_backward(const BasicTensor<T>& a, const BasicTensor<T>& b, const BasicTensor<T>& grad_out, Binary kind) {
    const Broadcast mode = broadcast_mode("elementwise_backward", a.shape(), b.shape());
    require_same("elementwise_backward", a.shape(), grad_out.shape());
    const Shape& s = a.shape();
    BinaryGrads<T> g;
    if (kind == Binary::add) {
        g.a = grad_out;
    } else {
        g.a = elementwise(grad_out, b, Binary::mul);
    }
    if (mode == Broadcast::none) {
        g.b = kind == Binary::add ? grad_out : elementwise(grad_out, a, Binary::mul);
        return g;
    }
    // Reduce over the broadcast axis in double.
    std::vector<double> acc(static_cast<std::size_t>(b.numel()), 0.0);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c) {
            const T* go = grad_out.plane(n, c);
            const T* pa = a.plane(n, c);
            for (std::int64_t i = 0; i < s.plane(); ++i) {
                const double v = kind == Binary::add ? static_cast<double>(go[i]) : static_cast<double>(go[i]) * static_cast<double>(pa[i]);
                if (mode == Broadcast::channel_map)
                    acc[static_cast<std::size_t>(n * s.plane() + i)] += v;
                else
                    acc[static_cast<std::size_t>(n * s.c + c)] += v;
            }
        }
    g.b = BasicTensor<T>(b.shape());
    for (std::size_t i = 0; i < acc.size(); ++i) g.b[i] = static_cast<T>(acc[i]);
    return g;
}

template <typename T>
BasicTensor<T> expand(const BasicTensor<T>& input, const Shape& target) {
    const Shape& s = input.shape();
    if (s == target) return input;
    const Broadcast mode = broadcast_mode("expand", target, s);
    BasicTensor<T> out(target);
    for (std::int64_t n = 0; n < target.n; ++n)
        for (std::int64_t c = 0; c < target.c; ++c) {
            T* dst = out.plane(n, c);
            if (mode == Broadcast::channel_map) {
                std::copy_n(input.plane(n, 0), target.plane(), dst);
            } else {
                std::fill_n(dst, target.plane(), input.at(n, c, 0, 0));
            }
        }
    return out;
}

template <typename T>
BasicTensor<T> expand_backward(const BasicTensor<T>& grad_out, const Shape& source) {
    if (grad_out.shape() == source) return grad_out;
    BasicTensor<T> unit(source, T(0));
    return elementwise_backward(grad_out, unit, grad_out, Binary::add).b;
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> tensors) {
    if (tensors.empty()) throw DimensionError("concat_channels", "inputs", "need at least one tensor");
    const Shape& first = tensors.front()->shape();
    std::int64_t channels = 0;
    for (const auto* t : tensors) {
        const Shape& s = t->shape();
        if (s.n != first.n) throw DimensionError("concat_channels", "batch", dims(first.n, s.n));
        if (s.h != first.h) throw DimensionError("concat_channels", "height", dims(first.h, s.h));
        if (s.w != first.w) throw DimensionError("concat_channels", "width", dims(first.w, s.w));
        channels += s.c;
    }
    BasicTensor<T> out({first.n, channels, first.h, first.w});
    for (std::int64_t n = 0; n < first.n; ++n) {
        std::int64_t offset = 0;
        for (const auto* t : tensors) {
            const std::int64_t count = t->shape().c * first.plane();
            std::copy_n(t->plane(n, 0), count, out.plane(n, offset));
            offset += t->shape().c;
        }
    }
    return out;
}

template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& input, std::span<const std::int64_t> channels) {
    const Shape& s = input.shape();
    const std::int64_t total = std::accumulate(channels.begin(), channels.end(), std::int64_t{0});
    if (total != s.c) throw DimensionError("split_channels", "channels", dims(s.c, total));
    std::vector<BasicTensor<T>> parts;
    std::int64_t offset = 0;
    for (const std::int64_t c : channels) {
        BasicTensor<T> part({s.n, c, s.h, s.w});
        for (std::int64_t n = 0; n < s.n; ++n) std::copy_n(input.plane(n, offset), c * s.plane(), part.plane(n, 0));
        parts.push_back(std::move(part));
        offset += c;
    }
    return parts;
}

template <typename T>
T l1_loss(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same("l1_loss", a.shape(), b.shape());
    if (a.numel() == 0) throw DimensionError("l1_loss", "elements", "empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    return static_cast<T>(acc / static_cast<double>(a.numel()));
}

template <typename T>
BasicTensor<T> l1_loss_backward(const BasicTensor<T>& a, const BasicTensor<T>& b, T grad_out) {
    require_same("l1_loss_backward", a.shape(), b.shape());
    BasicTensor<T> g(a.shape());
    const T step = static_cast<T>(static_cast<double>(grad_out) / static_cast<double>(a.numel()));
    for (std::size_t i = 0; i < g.data().size(); ++i) {
        const T d = a[i] - b[i];
        g[i] = d > T(0) ? step : d < T(0) ? -step : T(0);
    }
    return g;
}

template <typename T>
BasicTensor<T> mu_law(const BasicTensor<T>& input, double mu) {
    BasicTensor<T> out(input.shape());
    const double denom = std::log1p(mu);
    for (std::size_t i = 0; i < out.data().size(); ++i) out[i] = static_cast<T>(std::log1p(mu * static_cast<double>(input[i])) / denom);
    return out;
}

template <typename T>
BasicTensor<T> mu_law_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out, double mu) {
    require_same("mu_law_backward", input.shape(), grad_out.shape());
    BasicTensor<T> g(input.shape());
    const double denom = std::log1p(mu);
    for (std::size_t i = 0; i < g.data().size(); ++i)
        g[i] = static_cast<T>(static_cast<double>(grad_out[i]) * mu / ((1.0 + mu * static_cast<double>(input[i])) * denom));
    return g;
}

template <typename T>
T mean(const BasicTensor<T>& input) {
    if (input.numel() == 0) throw DimensionError("mean", "elements", "empty tensor");
    double acc = 0.0;
    for (const T v : input.data()) acc += v;
    return static_cast<T>(acc / static_cast<double>(input.numel()));
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& input, double factor) {
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < out.data().size(); ++i) out[i] = static_cast<T>(static_cast<double>(input[i]) * factor);
    return out;
}

#define CENHDR_INSTANTIATE_KERNELS(T)                                                                                                  \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, Conv2dParams);                 \
    template Conv2dGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, Conv2dParams, bool, bool, \
                                            bool);                                                                                    \
    template BasicTensor<T> pixel_shuffle(const BasicTensor<T>&, int);                                                                 \
    template BasicTensor<T> pixel_unshuffle(const BasicTensor<T>&, int);                                                               \
    template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                                                    \
    template BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>&, const Shape&);                                             \
    template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                               \
    template LinearGrads<T> linear_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                      \
    template BasicTensor<T> activation(const BasicTensor<T>&, Activation);                                                             \
    template BasicTensor<T> activation_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, Activation);      \
    template BasicTensor<T> elementwise(const BasicTensor<T>&, const BasicTensor<T>&, Binary);                                         \
    template BinaryGrads<T> elementwise_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, Binary);         \
    template BasicTensor<T> expand(const BasicTensor<T>&, const Shape&);                                                               \
    template BasicTensor<T> expand_backward(const BasicTensor<T>&, const Shape&);                                                      \
    template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const>);                                                   \
    template std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>&, std::span<const std::int64_t>);                         \
    template T l1_loss(const BasicTensor<T>&, const BasicTensor<T>&);                                                                  \
    template BasicTensor<T> l1_loss_backward(const BasicTensor<T>&, const BasicTensor<T>&, T);                                         \
    template BasicTensor<T> mu_law(const BasicTensor<T>&, double);                                                                     \
    template BasicTensor<T> mu_law_backward(const BasicTensor<T>&, const BasicTensor<T>&, double);                                     \
    template T mean(const BasicTensor<T>&);                                                                                            \
    template BasicTensor<T> scale(const BasicTensor<T>&, double);

CENHDR_INSTANTIATE_KERNELS(float)
CENHDR_INSTANTIATE_KERNELS(double)

#undef CENHDR_INSTANTIATE_KERNELS

}  // namespace cenhdr::kernels
