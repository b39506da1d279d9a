#include "htmd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "htmd/errors.hpp"

namespace htmd::diff {

namespace {

void require(bool condition, const std::string& message) {
    if (!condition) throw ShapeError(message);
}

// Fixed four-way split keeps the summation order independent of the compiler.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    T s0{0}, s1{0}, s2{0}, s3{0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

template <typename T>
T sum_range(const T* a, std::size_t n) {
    T s0{0}, s1{0}, s2{0}, s3{0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i];
        s1 += a[i + 1];
        s2 += a[i + 2];
        s3 += a[i + 3];
    }
    for (; i < n; ++i) s0 += a[i];
    return (s0 + s1) + (s2 + s3);
}

struct ConvGeometry {
    std::size_t batch, cin, cout, tin, tout, k, stride, dilation, groups, cin_g, cout_g;
    std::ptrdiff_t pad_left;
};

// Range [lo, hi) of output steps t whose tap t*stride + offset lands inside [0, tin).
inline void valid_range(std::ptrdiff_t offset, std::size_t stride, std::size_t tin, std::size_t tout,
                        std::size_t& lo, std::size_t& hi) {
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const auto n = static_cast<std::ptrdiff_t>(tin);
    std::ptrdiff_t first = offset >= 0 ? 0 : (-offset + s - 1) / s;
    std::ptrdiff_t last = (n - 1 - offset) >= 0 ? (n - 1 - offset) / s + 1 : 0;
    first = std::min<std::ptrdiff_t>(first, static_cast<std::ptrdiff_t>(tout));
    last = std::clamp<std::ptrdiff_t>(last, first, static_cast<std::ptrdiff_t>(tout));
    lo = static_cast<std::size_t>(first);
    hi = static_cast<std::size_t>(last);
}

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           const Conv1dOptions& opt) {
    require(x.shape().size() == 3, "conv1d expects [batch, channels, time], got " + shape_str(x.shape()));
    require(weight.shape().size() == 3, "conv1d weight must be [out, in/groups, k]");
    require(opt.stride >= 1 && opt.dilation >= 1, "conv1d stride and dilation must be positive");
    require(opt.groups >= 1, "conv1d groups must be positive");
    ConvGeometry g{};
    g.batch = x.dim(0);
    g.cin = x.dim(1);
    g.tin = x.dim(2);
    g.cout = weight.dim(0);
    g.k = weight.dim(2);
    g.stride = opt.stride;
    g.dilation = opt.dilation;
    g.groups = opt.groups;
    require(g.cin % g.groups == 0 && g.cout % g.groups == 0,
            "conv1d channels " + std::to_string(g.cin) + "->" + std::to_string(g.cout) +
                " not divisible by groups " + std::to_string(g.groups));
    g.cin_g = g.cin / g.groups;
    g.cout_g = g.cout / g.groups;
    require(weight.dim(1) == g.cin_g, "conv1d weight in-channels " + std::to_string(weight.dim(1)) +
                                          " != " + std::to_string(g.cin_g));
    if (bias.defined()) require(bias.shape() == Shape{g.cout}, "conv1d bias must be [out]");
    const std::size_t span = g.dilation * (g.k - 1) + 1;
    std::size_t total_pad = 0;
    if (opt.padding == Padding::same) {
        const std::size_t out = (g.tin + g.stride - 1) / g.stride;
        const std::size_t needed = (out - 1) * g.stride + span;
        total_pad = needed > g.tin ? needed - g.tin : 0;
    }
    g.pad_left = static_cast<std::ptrdiff_t>(total_pad / 2);
    require(g.tin + total_pad >= span, "conv1d kernel span " + std::to_string(span) +
                                           " exceeds padded input length " +
                                           std::to_string(g.tin + total_pad));
    g.tout = (g.tin + total_pad - span) / g.stride + 1;
    return g;
}

}  // namespace

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv1dOptions& options) {
    const ConvGeometry g = conv_geometry(x, weight, bias, options);
    Array<T> out(Shape{g.batch, g.cout, g.tout});
    const T* xd = x.value().data();
    const T* wd = weight.value().data();
    T* od = out.data();
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t o = 0; o < g.cout; ++o) {
            T* orow = od + (b * g.cout + o) * g.tout;
            if (bias.defined()) std::fill(orow, orow + g.tout, bias.value()[o]);
            const std::size_t grp = o / g.cout_g;
            for (std::size_t ci = 0; ci < g.cin_g; ++ci) {
                const T* xrow = xd + (b * g.cin + grp * g.cin_g + ci) * g.tin;
                const T* wrow = wd + (o * g.cin_g + ci) * g.k;
                for (std::size_t j = 0; j < g.k; ++j) {
                    const T w = wrow[j];
                    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j * g.dilation) - g.pad_left;
                    std::size_t lo, hi;
                    valid_range(off, g.stride, g.tin, g.tout, lo, hi);
                    if (g.stride == 1) {
                        const T* src = xrow + off;
                        for (std::size_t t = lo; t < hi; ++t) orow[t] += w * src[t];
                    } else {
                        for (std::size_t t = lo; t < hi; ++t)
                            orow[t] += w * xrow[static_cast<std::ptrdiff_t>(t * g.stride) + off];
                    }
                }
            }
        }
    }

    return make_result<T>(std::move(out), {x, weight, bias}, [x, weight, bias, g](const Array<T>& dy) {
        const T* dyd = dy.data();
        const T* xd = x.value().data();
        const T* wd = weight.value().data();
        if (x.requires_grad()) {
            Array<T> dx(x.shape());
            T* dxd = dx.data();
            for (std::size_t b = 0; b < g.batch; ++b)
                for (std::size_t o = 0; o < g.cout; ++o) {
                    const T* dyrow = dyd + (b * g.cout + o) * g.tout;
                    const std::size_t grp = o / g.cout_g;
                    for (std::size_t ci = 0; ci < g.cin_g; ++ci) {
                        T* dxrow = dxd + (b * g.cin + grp * g.cin_g + ci) * g.tin;
                        const T* wrow = wd + (o * g.cin_g + ci) * g.k;
                        for (std::size_t j = 0; j < g.k; ++j) {
                            const T w = wrow[j];
                            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j * g.dilation) - g.pad_left;
                            std::size_t lo, hi;
                            valid_range(off, g.stride, g.tin, g.tout, lo, hi);
                            if (g.stride == 1) {
                                T* dst = dxrow + off;
                                for (std::size_t t = lo; t < hi; ++t) dst[t] += w * dyrow[t];
                            } else {
                                for (std::size_t t = lo; t < hi; ++t)
                                    dxrow[static_cast<std::ptrdiff_t>(t * g.stride) + off] += w * dyrow[t];
                            }
                        }
                    }
                }
            x.accumulate_grad(dx);
        }
        if (weight.requires_grad()) {
            Array<T> dw(weight.shape());
            T* dwd = dw.data();
            for (std::size_t b = 0; b < g.batch; ++b)
                for (std::size_t o = 0; o < g.cout; ++o) {
                    const T* dyrow = dyd + (b * g.cout + o) * g.tout;
                    const std::size_t grp = o / g.cout_g;
                    for (std::size_t ci = 0; ci < g.cin_g; ++ci) {
                        const T* xrow = xd + (b * g.cin + grp * g.cin_g + ci) * g.tin;
                        T* dwrow = dwd + (o * g.cin_g + ci) * g.k;
                        for (std::size_t j = 0; j < g.k; ++j) {
                            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j * g.dilation) - g.pad_left;
                            std::size_t lo, hi;
                            valid_range(off, g.stride, g.tin, g.tout, lo, hi);
                            if (hi <= lo) continue;
                            if (g.stride == 1) {
                                dwrow[j] += dot(dyrow + lo, xrow + off + static_cast<std::ptrdiff_t>(lo), hi - lo);
                            } else {
                                T s{0};
                                for (std::size_t t = lo; t < hi; ++t)
                                    s += dyrow[t] * xrow[static_cast<std::ptrdiff_t>(t * g.stride) + off];
                                dwrow[j] += s;
                            }
                        }
                    }
                }
            weight.accumulate_grad(dw);
        }
        if (bias.defined() && bias.requires_grad()) {
            Array<T> db(bias.shape());
            for (std::size_t b = 0; b < g.batch; ++b)
                for (std::size_t o = 0; o < g.cout; ++o) db[o] += sum_range(dyd + (b * g.cout + o) * g.tout, g.tout);
            bias.accumulate_grad(db);
        }
    });
}

template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride) {
    require(stride >= 1, "conv_transpose1d stride must be positive");
    require(x.shape().size() == 3, "conv_transpose1d expects [batch, channels, time]");
    require(weight.shape().size() == 3, "conv_transpose1d weight must be [in, out, k]");
    const std::size_t batch = x.dim(0), cin = x.dim(1), tin = x.dim(2);
    require(weight.dim(0) == cin, "conv_transpose1d weight in-channels " + std::to_string(weight.dim(0)) +
                                      " != input channels " + std::to_string(cin));
    require(tin >= 1, "conv_transpose1d needs a non-empty time axis");
    const std::size_t cout = weight.dim(1), k = weight.dim(2);
    if (bias.defined()) require(bias.shape() == Shape{cout}, "conv_transpose1d bias must be [out]");
    const std::size_t tout = (tin - 1) * stride + k;

    Array<T> out(Shape{batch, cout, tout});
    const T* xd = x.value().data();
    const T* wd = weight.value().data();
    T* od = out.data();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < cout; ++o) {
            T* orow = od + (b * cout + o) * tout;
            if (bias.defined()) std::fill(orow, orow + tout, bias.value()[o]);
            for (std::size_t c = 0; c < cin; ++c) {
                const T* xrow = xd + (b * cin + c) * tin;
                const T* wrow = wd + (c * cout + o) * k;
                for (std::size_t t = 0; t < tin; ++t) {
                    const T v = xrow[t];
                    T* dst = orow + t * stride;
                    for (std::size_t j = 0; j < k; ++j) dst[j] += v * wrow[j];
                }
            }
        }

    return make_result<T>(std::move(out), {x, weight, bias},
                          [x, weight, bias, batch, cin, cout, tin, tout, k, stride](const Array<T>& dy) {
                              const T* dyd = dy.data();
                              const T* xd = x.value().data();
                              const T* wd = weight.value().data();
                              if (x.requires_grad()) {
                                  Array<T> dx(x.shape());
                                  for (std::size_t b = 0; b < batch; ++b)
                                      for (std::size_t c = 0; c < cin; ++c) {
                                          T* dxrow = dx.data() + (b * cin + c) * tin;
                                          for (std::size_t o = 0; o < cout; ++o) {
                                              const T* dyrow = dyd + (b * cout + o) * tout;
                                              const T* wrow = wd + (c * cout + o) * k;
                                              for (std::size_t t = 0; t < tin; ++t)
                                                  dxrow[t] += dot(wrow, dyrow + t * stride, k);
                                          }
                                      }
                                  x.accumulate_grad(dx);
                              }
                              if (weight.requires_grad()) {
                                  Array<T> dw(weight.shape());
                                  for (std::size_t b = 0; b < batch; ++b)
                                      for (std::size_t c = 0; c < cin; ++c) {
                                          const T* xrow = xd + (b * cin + c) * tin;
                                          for (std::size_t o = 0; o < cout; ++o) {
                                              const T* dyrow = dyd + (b * cout + o) * tout;
                                              T* dwrow = dw.data() + (c * cout + o) * k;
                                              for (std::size_t t = 0; t < tin; ++t) {
                                                  const T v = xrow[t];
                                                  const T* src = dyrow + t * stride;
                                                  for (std::size_t j = 0; j < k; ++j) dwrow[j] += v * src[j];
                                              }
                                          }
                                      }
                                  weight.accumulate_grad(dw);
                              }
                              if (bias.defined() && bias.requires_grad()) {
                                  Array<T> db(bias.shape());
                                  for (std::size_t b = 0; b < batch; ++b)
                                      for (std::size_t o = 0; o < cout; ++o)
                                          db[o] += sum_range(dyd + (b * cout + o) * tout, tout);
                                  bias.accumulate_grad(db);
                              }
                          });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, RunningStats<T>& stats,
                     const BatchNormOptions& options) {
    require(x.shape().size() == 3, "batch_norm expects [batch, channels, time]");
    const std::size_t batch = x.dim(0), ch = x.dim(1), time = x.dim(2);
    require(gamma.shape() == Shape{ch} && beta.shape() == Shape{ch}, "batch_norm gamma/beta must be [channels]");
    require(stats.mean.defined() && stats.var.defined() && stats.mean.shape() == Shape{ch} &&
                stats.var.shape() == Shape{ch},
            "batch_norm running statistics must be [channels]");
    const std::size_t n = batch * time;
    const bool train = options.mode == NormMode::train;
    require(!train || n > 1, "batch_norm in train mode needs batch*time > 1");

    const T* xd = x.value().data();
    Array<T> mean(Shape{ch}), inv_std(Shape{ch});
    if (train) {
        for (std::size_t c = 0; c < ch; ++c) {
            double s = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const T* row = xd + (b * ch + c) * time;
                for (std::size_t t = 0; t < time; ++t) s += row[t];
            }
            const double m = s / static_cast<double>(n);
            double v = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const T* row = xd + (b * ch + c) * time;
                for (std::size_t t = 0; t < time; ++t) {
                    const double d = row[t] - m;
                    v += d * d;
                }
            }
            const double biased = v / static_cast<double>(n);
            const double unbiased = v / static_cast<double>(n - 1);
            mean[c] = static_cast<T>(m);
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(biased + options.eps));
            auto& rm = stats.mean.value()[c];
            auto& rv = stats.var.value()[c];
            rm = static_cast<T>((1.0 - options.momentum) * rm + options.momentum * m);
            rv = static_cast<T>((1.0 - options.momentum) * rv + options.momentum * unbiased);
        }
    } else {
        for (std::size_t c = 0; c < ch; ++c) {
            mean[c] = stats.mean.value()[c];
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(stats.var.value()[c]) + options.eps));
        }
    }

    Array<T> xhat(x.shape());
    Array<T> out(x.shape());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = (b * ch + c) * time;
            const T m = mean[c], is = inv_std[c], gm = gamma.value()[c], bt = beta.value()[c];
            for (std::size_t t = 0; t < time; ++t) {
                const T h = (xd[base + t] - m) * is;
                xhat[base + t] = h;
                out[base + t] = gm * h + bt;
            }
        }

    return make_result<T>(std::move(out), {x, gamma, beta},
                          [x, gamma, beta, xhat = std::move(xhat), inv_std, batch, ch, time, n,
                           train](const Array<T>& dy) {
                              Array<T> dgamma(Shape{ch}), dbeta(Shape{ch});
                              std::vector<double> sum_dxhat(ch, 0.0), sum_dxhat_xhat(ch, 0.0);
                              for (std::size_t b = 0; b < batch; ++b)
                                  for (std::size_t c = 0; c < ch; ++c) {
                                      const std::size_t base = (b * ch + c) * time;
                                      double sg = 0.0, sb = 0.0;
                                      for (std::size_t t = 0; t < time; ++t) {
                                          sg += static_cast<double>(dy[base + t]) * xhat[base + t];
                                          sb += dy[base + t];
                                      }
                                      dgamma[c] += static_cast<T>(sg);
                                      dbeta[c] += static_cast<T>(sb);
                                  }
                              if (x.requires_grad()) {
                                  Array<T> dx(x.shape());
                                  if (train) {
                                      for (std::size_t c = 0; c < ch; ++c) {
                                          const double gm = gamma.value()[c];
                                          // sum(dxhat) = gamma * sum(dy), sum(dxhat * xhat) = gamma * dgamma
                                          sum_dxhat[c] = gm * static_cast<double>(dbeta[c]);
                                          sum_dxhat_xhat[c] = gm * static_cast<double>(dgamma[c]);
                                      }
                                      for (std::size_t b = 0; b < batch; ++b)
                                          for (std::size_t c = 0; c < ch; ++c) {
                                              const std::size_t base = (b * ch + c) * time;
                                              const double gm = gamma.value()[c];
                                              const double scale = static_cast<double>(inv_std[c]) / static_cast<double>(n);
                                              for (std::size_t t = 0; t < time; ++t) {
                                                  const double dxh = gm * dy[base + t];
                                                  dx[base + t] = static_cast<T>(
                                                      scale * (static_cast<double>(n) * dxh - sum_dxhat[c] -
                                                               xhat[base + t] * sum_dxhat_xhat[c]));
                                              }
                                          }
                                  } else {
                                      for (std::size_t b = 0; b < batch; ++b)
                                          for (std::size_t c = 0; c < ch; ++c) {
                                              const std::size_t base = (b * ch + c) * time;
                                              const T k = gamma.value()[c] * inv_std[c];
                                              for (std::size_t t = 0; t < time; ++t) dx[base + t] = dy[base + t] * k;
                                          }
                                  }
                                  x.accumulate_grad(dx);
                              }
                              gamma.accumulate_grad(dgamma);
                              beta.accumulate_grad(dbeta);
                          });
}

namespace {

template <typename T, typename Forward, typename Derivative>
Tensor<T> elementwise(const Tensor<T>& x, Forward f, Derivative dfdy) {
    Array<T> out(x.shape());
    const T* xd = x.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xd[i]);
    Array<T> y = out;
    return make_result<T>(std::move(out), {x}, [x, y = std::move(y), dfdy](const Array<T>& dy) {
        Array<T> dx(x.shape());
        const T* xd = x.value().data();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * dfdy(xd[i], y[i]);
        x.accumulate_grad(dx);
    });
}

template <typename T>
inline T stable_sigmoid(T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
}

}  // namespace

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    return elementwise(
        x, [slope](T v) { return v > T(0) ? v : slope * v; },
        [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return elementwise(x, [](T v) { return stable_sigmoid(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return elementwise(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> bilstm(const Tensor<T>& x, const LstmWeights<T>& fwd, const LstmWeights<T>& bwd, std::size_t hidden) {
    require(x.shape().size() == 3, "bilstm expects [batch, time, features]");
    const std::size_t batch = x.dim(0), steps = x.dim(1), feat = x.dim(2);
    require(steps >= 1, "bilstm needs at least one time step");
    const std::size_t H = hidden, G = 4 * hidden;
    for (const auto* w : {&fwd, &bwd}) {
        require(w->kernel.shape() == Shape{G, feat},
                "bilstm kernel must be " + shape_str({G, feat}) + ", got " + shape_str(w->kernel.shape()));
        require(w->recurrent.shape() == Shape{G, H}, "bilstm recurrent weight must be [4*hidden, hidden]");
        require(w->bias.shape() == Shape{G}, "bilstm bias must be [4*hidden]");
    }

    struct Cache {
        Array<T> gates;  // [batch, steps, 4H] activated i, f, g, o
        Array<T> cell;   // [batch, steps, H]
        Array<T> hid;    // [batch, steps, H]
    };
    auto caches = std::make_shared<std::array<Cache, 2>>();
    Array<T> out(Shape{batch, steps, 2 * H});
    const T* xd = x.value().data();

    for (std::size_t dir = 0; dir < 2; ++dir) {
        const LstmWeights<T>& w = dir == 0 ? fwd : bwd;
        Cache& cache = (*caches)[dir];
        cache.gates = Array<T>(Shape{batch, steps, G});
        cache.cell = Array<T>(Shape{batch, steps, H});
        cache.hid = Array<T>(Shape{batch, steps, H});
        const T* K = w.kernel.value().data();
        const T* R = w.recurrent.value().data();
        const T* bias = w.bias.value().data();
        std::vector<T> z(G), h_prev(H), c_prev(H);
        for (std::size_t b = 0; b < batch; ++b) {
            std::fill(h_prev.begin(), h_prev.end(), T(0));
            std::fill(c_prev.begin(), c_prev.end(), T(0));
            for (std::size_t step = 0; step < steps; ++step) {
                const std::size_t t = dir == 0 ? step : steps - 1 - step;
                const T* xt = xd + (b * steps + t) * feat;
                for (std::size_t r = 0; r < G; ++r)
                    z[r] = bias[r] + dot(K + r * feat, xt, feat) + dot(R + r * H, h_prev.data(), H);
                T* gt = cache.gates.data() + (b * steps + t) * G;
                T* ct = cache.cell.data() + (b * steps + t) * H;
                T* ht = cache.hid.data() + (b * steps + t) * H;
                for (std::size_t k = 0; k < H; ++k) {
                    const T i = stable_sigmoid(z[k]);
                    const T f = stable_sigmoid(z[H + k]);
                    const T g = std::tanh(z[2 * H + k]);
                    const T o = stable_sigmoid(z[3 * H + k]);
                    gt[k] = i;
                    gt[H + k] = f;
                    gt[2 * H + k] = g;
                    gt[3 * H + k] = o;
                    ct[k] = f * c_prev[k] + i * g;
                    ht[k] = o * std::tanh(ct[k]);
                }
                std::copy(ct, ct + H, c_prev.begin());
                std::copy(ht, ht + H, h_prev.begin());
                T* ot = out.data() + (b * steps + t) * 2 * H + dir * H;
                std::copy(ht, ht + H, ot);
            }
        }
    }

    std::vector<Tensor<T>> parents{x, fwd.kernel, fwd.recurrent, fwd.bias, bwd.kernel, bwd.recurrent, bwd.bias};
    return make_result<T>(std::move(out), parents, [x, fwd, bwd, caches, batch, steps, feat, H, G](const Array<T>& dy) {
        const T* xd = x.value().data();
        Array<T> dx(x.shape());
        for (std::size_t dir = 0; dir < 2; ++dir) {
            const LstmWeights<T>& w = dir == 0 ? fwd : bwd;
            const Cache& cache = (*caches)[dir];
            const T* K = w.kernel.value().data();
            const T* R = w.recurrent.value().data();
            Array<T> dK(w.kernel.shape()), dR(w.recurrent.shape()), dB(w.bias.shape());
            std::vector<T> dz(G), dh_next(H), dc_next(H), dh(H);
            for (std::size_t b = 0; b < batch; ++b) {
                std::fill(dh_next.begin(), dh_next.end(), T(0));
                std::fill(dc_next.begin(), dc_next.end(), T(0));
                for (std::size_t s = steps; s-- > 0;) {
                    const std::size_t t = dir == 0 ? s : steps - 1 - s;
                    const bool has_prev = s > 0;
                    const std::size_t tp = dir == 0 ? t - 1 : t + 1;
                    const T* gt = cache.gates.data() + (b * steps + t) * G;
                    const T* ct = cache.cell.data() + (b * steps + t) * H;
                    const T* cp = has_prev ? cache.cell.data() + (b * steps + tp) * H : nullptr;
                    const T* hp = has_prev ? cache.hid.data() + (b * steps + tp) * H : nullptr;
                    const T* dyt = dy.data() + (b * steps + t) * 2 * H + dir * H;
                    for (std::size_t k = 0; k < H; ++k) {
                        const T i = gt[k], f = gt[H + k], g = gt[2 * H + k], o = gt[3 * H + k];
                        const T dhk = dyt[k] + dh_next[k];
                        const T tc = std::tanh(ct[k]);
                        const T d_o = dhk * tc;
                        const T dc = dhk * o * (T(1) - tc * tc) + dc_next[k];
                        const T c_before = cp ? cp[k] : T(0);
                        dz[k] = dc * g * i * (T(1) - i);
                        dz[H + k] = dc * c_before * f * (T(1) - f);
                        dz[2 * H + k] = dc * i * (T(1) - g * g);
                        dz[3 * H + k] = d_o * o * (T(1) - o);
                        dc_next[k] = dc * f;
                    }
                    const T* xt = xd + (b * steps + t) * feat;
                    T* dxt = dx.data() + (b * steps + t) * feat;
                    for (std::size_t r = 0; r < G; ++r) {
                        const T d = dz[r];
                        dB[r] += d;
                        T* dkrow = dK.data() + r * feat;
                        const T* krow = K + r * feat;
                        for (std::size_t f = 0; f < feat; ++f) {
                            dkrow[f] += d * xt[f];
                            dxt[f] += d * krow[f];
                        }
                        if (hp) {
                            T* drrow = dR.data() + r * H;
                            for (std::size_t k = 0; k < H; ++k) drrow[k] += d * hp[k];
                        }
                    }
                    std::fill(dh_next.begin(), dh_next.end(), T(0));
                    for (std::size_t r = 0; r < G; ++r) {
                        const T d = dz[r];
                        const T* rrow = R + r * H;
                        for (std::size_t k = 0; k < H; ++k) dh_next[k] += d * rrow[k];
                    }
                }
            }
            w.kernel.accumulate_grad(dK);
            w.recurrent.accumulate_grad(dR);
            w.bias.accumulate_grad(dB);
        }
        x.accumulate_grad(dx);
    });
}

template <typename T>
Tensor<T> decimate(const Tensor<T>& x) {
    require(!x.shape().empty() && x.shape().back() >= 1, "decimate needs a non-empty time axis");
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.size() / n;
    const std::size_t m = (n + 1) / 2;
    Shape shape = x.shape();
    shape.back() = m;
    Array<T> out(shape);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < m; ++t) out[r * m + t] = x.value()[r * n + 2 * t];
    return make_result<T>(std::move(out), {x}, [x, rows, n, m](const Array<T>& dy) {
        Array<T> dx(x.shape());
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t t = 0; t < m; ++t) dx[r * n + 2 * t] = dy[r * m + t];
        x.accumulate_grad(dx);
    });
}

template <typename T>
Tensor<T> upsample_linear(const Tensor<T>& x) {
    require(!x.shape().empty() && x.shape().back() >= 1, "upsample needs a non-empty time axis");
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.size() / n;
    Shape shape = x.shape();
    shape.back() = 2 * n;
    Array<T> out(shape);
    const T* xd = x.value().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* src = xd + r * n;
        T* dst = out.data() + r * 2 * n;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            dst[2 * i] = src[i];
            dst[2 * i + 1] = T(0.5) * (src[i] + src[i + 1]);
        }
        dst[2 * n - 2] = src[n - 1];
        dst[2 * n - 1] = src[n - 1];
    }
    return make_result<T>(std::move(out), {x}, [x, rows, n](const Array<T>& dy) {
        Array<T> dx(x.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const T* g = dy.data() + r * 2 * n;
            T* d = dx.data() + r * n;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                d[i] += g[2 * i] + T(0.5) * g[2 * i + 1];
                d[i + 1] += T(0.5) * g[2 * i + 1];
            }
            d[n - 1] += g[2 * n - 2] + g[2 * n - 1];
        }
        x.accumulate_grad(dx);
    });
}

template <typename T>
Tensor<T> swap_last_axes(const Tensor<T>& x) {
    require(x.shape().size() == 3, "swap_last_axes expects a rank-3 tensor");
    const std::size_t a = x.dim(0), b = x.dim(1), c = x.dim(2);
    Array<T> out(Shape{a, c, b});
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
            for (std::size_t k = 0; k < c; ++k) out[(i * c + k) * b + j] = x.value()[(i * b + j) * c + k];
    return make_result<T>(std::move(out), {x}, [x, a, b, c](const Array<T>& dy) {
        Array<T> dx(x.shape());
        for (std::size_t i = 0; i < a; ++i)
            for (std::size_t j = 0; j < b; ++j)
                for (std::size_t k = 0; k < c; ++k) dx[(i * b + j) * c + k] = dy[(i * c + k) * b + j];
        x.accumulate_grad(dx);
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
    require(!xs.empty(), "concat needs at least one input");
    const Shape& first = xs.front().shape();
    require(axis < first.size(), "concat axis out of range");
    std::size_t outer = 1, inner = 1, total = 0;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
    for (const auto& x : xs) {
        require(x.shape().size() == first.size(), "concat rank mismatch");
        for (std::size_t d = 0; d < first.size(); ++d)
            if (d != axis)
                require(x.shape()[d] == first[d], "concat shape mismatch " + shape_str(x.shape()) + " vs " +
                                                      shape_str(first) + " on axis " + std::to_string(d));
        total += x.shape()[axis];
    }
    Shape shape = first;
    shape[axis] = total;
    Array<T> out(shape);
    std::size_t offset = 0;
    for (const auto& x : xs) {
        const std::size_t len = x.shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(x.value().data() + o * len, x.value().data() + (o + 1) * len,
                      out.data() + o * total * inner + offset);
        offset += len;
    }
    return make_result<T>(std::move(out), xs, [xs, outer, inner, total, axis](const Array<T>& dy) {
        std::size_t offset = 0;
        for (const auto& x : xs) {
            const std::size_t len = x.shape()[axis] * inner;
            if (x.requires_grad()) {
                Array<T> dx(x.shape());
                for (std::size_t o = 0; o < outer; ++o)
                    std::copy(dy.data() + o * total * inner + offset, dy.data() + o * total * inner + offset + len,
                              dx.data() + o * len);
                x.accumulate_grad(dx);
            }
            offset += len;
        }
    });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), "add shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Array<T> out = a.value();
    out.add_inplace(b.value());
    return make_result<T>(std::move(out), {a, b}, [a, b](const Array<T>& dy) {
        a.accumulate_grad(dy);
        b.accumulate_grad(dy);
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), "sub shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Array<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return make_result<T>(std::move(out), {a, b}, [a, b](const Array<T>& dy) {
        a.accumulate_grad(dy);
        if (b.requires_grad()) {
            Array<T> neg(dy.shape());
            for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -dy[i];
            b.accumulate_grad(neg);
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), "mul shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Array<T> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_result<T>(std::move(out), {a, b}, [a, b](const Array<T>& dy) {
        if (a.requires_grad()) {
            Array<T> da(a.shape());
            for (std::size_t i = 0; i < da.size(); ++i) da[i] = dy[i] * b.value()[i];
            a.accumulate_grad(da);
        }
        if (b.requires_grad()) {
            Array<T> db(b.shape());
            for (std::size_t i = 0; i < db.size(); ++i) db[i] = dy[i] * a.value()[i];
            b.accumulate_grad(db);
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    Array<T> out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * factor;
    return make_result<T>(std::move(out), {x}, [x, factor](const Array<T>& dy) {
        Array<T> dx(x.shape());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * factor;
        x.accumulate_grad(dx);
    });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    require(!x.shape().empty(), "dense needs at least rank 1 input");
    require(weight.shape().size() == 2, "dense weight must be [out, in]");
    const std::size_t in = x.shape().back(), out_f = weight.dim(0);
    require(weight.dim(1) == in, "dense feature mismatch: input has " + std::to_string(in) + ", weight expects " +
                                     std::to_string(weight.dim(1)));
    if (bias.defined()) require(bias.shape() == Shape{out_f}, "dense bias must be [out]");
    const std::size_t rows = x.size() / in;
    Shape shape = x.shape();
    shape.back() = out_f;
    Array<T> out(shape);
    const T* xd = x.value().data();
    const T* wd = weight.value().data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out_f; ++o)
            out[r * out_f + o] = (bias.defined() ? bias.value()[o] : T(0)) + dot(wd + o * in, xd + r * in, in);
    return make_result<T>(std::move(out), {x, weight, bias}, [x, weight, bias, rows, in, out_f](const Array<T>& dy) {
        const T* xd = x.value().data();
        const T* wd = weight.value().data();
        if (x.requires_grad()) {
            Array<T> dx(x.shape());
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t o = 0; o < out_f; ++o) {
                    const T g = dy[r * out_f + o];
                    for (std::size_t i = 0; i < in; ++i) dx[r * in + i] += g * wd[o * in + i];
                }
            x.accumulate_grad(dx);
        }
        if (weight.requires_grad()) {
            Array<T> dw(weight.shape());
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t o = 0; o < out_f; ++o) {
                    const T g = dy[r * out_f + o];
                    for (std::size_t i = 0; i < in; ++i) dw[o * in + i] += g * xd[r * in + i];
                }
            weight.accumulate_grad(dw);
        }
        if (bias.defined() && bias.requires_grad()) {
            Array<T> db(bias.shape());
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t o = 0; o < out_f; ++o) db[o] += dy[r * out_f + o];
            bias.accumulate_grad(db);
        }
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    Array<T> out(Shape{1});
    out[0] = sum_range(x.value().data(), x.size());
    return make_result<T>(std::move(out), {x}, [x](const Array<T>& dy) {
        x.accumulate_grad(Array<T>(x.shape(), dy[0]));
    });
}

template <typename T>
Tensor<T> dot_constant(const Tensor<T>& x, const Array<T>& r) {
    require(x.shape() == r.shape(), "dot_constant shape mismatch");
    Array<T> out(Shape{1});
    out[0] = dot(x.value().data(), r.data(), x.size());
    return make_result<T>(std::move(out), {x}, [x, r](const Array<T>& dy) {
        Array<T> dx(x.shape());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[0] * r[i];
        x.accumulate_grad(dx);
    });
}

#define HTMD_INSTANTIATE(T)                                                                                 \
    template Tensor<T> conv1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Conv1dOptions&); \
    template Tensor<T> conv_transpose1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t); \
    template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, RunningStats<T>&,  \
                                     const BatchNormOptions&);                                              \
    template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                                  \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                        \
    template Tensor<T> tanh<T>(const Tensor<T>&);                                                           \
    template Tensor<T> bilstm<T>(const Tensor<T>&, const LstmWeights<T>&, const LstmWeights<T>&, std::size_t); \
    template Tensor<T> decimate<T>(const Tensor<T>&);                                                       \
    template Tensor<T> upsample_linear<T>(const Tensor<T>&);                                                \
    template Tensor<T> swap_last_axes<T>(const Tensor<T>&);                                                 \
    template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);                               \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                          \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                          \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                          \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                                       \
    template Tensor<T> dense<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> sum<T>(const Tensor<T>&);                                                            \
    template Tensor<T> dot_constant<T>(const Tensor<T>&, const Array<T>&);

HTMD_INSTANTIATE(float)
HTMD_INSTANTIATE(double)
#undef HTMD_INSTANTIATE

}  // namespace htmd::diff
