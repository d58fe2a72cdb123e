#pragma once

// Layer primitives: valid 3x3 convolution, batch normalization, pointwise
// activations, 2x2 pooling, dense, softmax / cross-entropy. Each forward has
// a matching backward that returns exact gradients of the forward map.
// Tensors are NHWC; dense tensors are [N, features].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "printattr/error.hpp"
#include "printattr/nn/tensor.hpp"

namespace printattr::nn {

inline constexpr std::size_t kKernel = 3;

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <class T>
struct ConvLayer {
    Tensor<T> weights;  // [3, 3, cin, cout]
    Tensor<T> bias;     // [cout]

    ConvLayer() = default;
    ConvLayer(std::size_t cin, std::size_t cout)
        : weights({kKernel, kKernel, cin, cout}), bias({cout}) {}

    std::size_t in_channels() const { return weights.dim(2); }
    std::size_t out_channels() const { return weights.dim(3); }
};

template <class T>
struct ConvGrads {
    Tensor<T> grad_x;
    Tensor<T> grad_w;
    Tensor<T> grad_b;
};

namespace detail {

inline void check_conv_input(const Shape& xs, std::size_t cin) {
    if (xs.size() != 4) throw ShapeError("conv2d: input must be N x H x W x C, got " + shape_str(xs));
    if (xs[1] < kKernel || xs[2] < kKernel)
        throw ShapeError("conv2d: spatial extent " + shape_str(xs) + " smaller than the 3x3 kernel");
    if (xs[3] != cin) throw ShapeError("conv2d: input channels " + std::to_string(xs[3]) + " != layer " +
                                       std::to_string(cin));
}

// One sample's patches laid out as [Ho*Wo, 9*cin]; column order (ky, kx, ci)
// matches the weight layout so the product with weights viewed as
// [9*cin, cout] is the convolution.
template <class T>
void im2col(const T* x, std::size_t h, std::size_t w, std::size_t cin, T* cols) {
    const std::size_t ho = h - 2, wo = w - 2, kc = kKernel * kKernel * cin;
    for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
            T* dst = cols + (oy * wo + ox) * kc;
            for (std::size_t ky = 0; ky < kKernel; ++ky) {
                const T* src = x + ((oy + ky) * w + ox) * cin;
                std::copy(src, src + kKernel * cin, dst + ky * kKernel * cin);
            }
        }
    }
}

template <class T>
void col2im_acc(const T* cols, std::size_t h, std::size_t w, std::size_t cin, T* gx) {
    const std::size_t ho = h - 2, wo = w - 2, kc = kKernel * kKernel * cin;
    for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
            const T* src = cols + (oy * wo + ox) * kc;
            for (std::size_t ky = 0; ky < kKernel; ++ky) {
                T* dst = gx + ((oy + ky) * w + ox) * cin;
                const T* s = src + ky * kKernel * cin;
                for (std::size_t i = 0; i < kKernel * cin; ++i) dst[i] += s[i];
            }
        }
    }
}

}  // namespace detail

// Valid cross-correlation, stride 1, plus bias.
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvLayer<T>& layer) {
    const std::size_t cin = layer.in_channels(), cout = layer.out_channels();
    detail::check_conv_input(x.shape(), cin);
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t ho = h - 2, wo = w - 2, kc = kKernel * kKernel * cin, m = ho * wo;

    Tensor<T> y({n, ho, wo, cout});
    std::vector<T> cols(m * kc);
    for (std::size_t s = 0; s < n; ++s) {
        detail::im2col(x.data() + s * h * w * cin, h, w, cin, cols.data());
        T* ys = y.data() + s * m * cout;
        for (std::size_t i = 0; i < m; ++i) std::copy(layer.bias.data(), layer.bias.data() + cout, ys + i * cout);
        gemm_acc(cols.data(), layer.weights.data(), ys, m, kc, cout);
    }
    return y;
}

template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvLayer<T>& layer, const Tensor<T>& grad_out,
                             bool need_input_grad = true) {
    const std::size_t cin = layer.in_channels(), cout = layer.out_channels();
    detail::check_conv_input(x.shape(), cin);
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t ho = h - 2, wo = w - 2, kc = kKernel * kKernel * cin, m = ho * wo;
    require_shape(grad_out.shape(), {n, ho, wo, cout}, "conv2d_backward grad_out");

    ConvGrads<T> g{need_input_grad ? Tensor<T>(x.shape()) : Tensor<T>{}, Tensor<T>(layer.weights.shape()),
                   Tensor<T>(layer.bias.shape())};
    std::vector<T> cols(m * kc), wt(cout * kc);
    if (need_input_grad) transpose(layer.weights.data(), wt.data(), kc, cout);

    for (std::size_t s = 0; s < n; ++s) {
        const T* go = grad_out.data() + s * m * cout;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < cout; ++c) g.grad_b[c] += go[i * cout + c];

        detail::im2col(x.data() + s * h * w * cin, h, w, cin, cols.data());
        gemm_at_b_acc(cols.data(), go, g.grad_w.data(), m, kc, cout);

        if (need_input_grad) {
            std::fill(cols.begin(), cols.end(), T{});
            gemm_acc(go, wt.data(), cols.data(), m, cout, kc);
            detail::col2im_acc(cols.data(), h, w, cin, g.grad_x.data() + s * h * w * cin);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Batch normalization (per last-axis channel)
// ---------------------------------------------------------------------------

enum class BnMode { Train, Infer };

template <class T>
struct BatchNormLayer {
    Tensor<T> gamma, beta;
    Tensor<T> running_mean, running_var;
    T eps = T(1e-5);
    // running <- momentum * running + (1 - momentum) * batch
    T momentum = T(0.99);
    BnMode mode = BnMode::Train;

    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t channels)
        : gamma({channels}, T(1)), beta({channels}), running_mean({channels}), running_var({channels}, T(1)) {}

    std::size_t channels() const { return gamma.size(); }
};

template <class T>
struct BnCache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
    BnMode mode = BnMode::Train;
};

template <class T>
struct BnGrads {
    Tensor<T> grad_x;
    Tensor<T> grad_gamma;
    Tensor<T> grad_beta;
};

// Train mode normalizes by the batch mean and biased variance and updates
// the running statistics; infer mode uses the running statistics.
template <class T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormLayer<T>& layer, BnCache<T>* cache = nullptr) {
    const std::size_t c = layer.channels();
    if (x.rank() < 2 || x.shape().back() != c)
        throw ShapeError("batchnorm: channel axis " + shape_str(x.shape()) + " does not match layer width " +
                         std::to_string(c));
    const std::size_t rows = x.size() / c;
    Tensor<T> y(x.shape());
    std::vector<T> mean(c), inv_std(c);

    if (layer.mode == BnMode::Train) {
        if (x.dim(0) < 2) throw DegenerateBatchError("batchnorm: train mode needs a batch of at least 2");
        std::vector<double> sum(c, 0.0), sq(c, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* xr = x.data() + r * c;
            double* sk = sum.data();
            for (std::size_t k = 0; k < c; ++k) sk[k] += static_cast<double>(xr[k]);
        }
        for (std::size_t k = 0; k < c; ++k) mean[k] = static_cast<T>(sum[k] / static_cast<double>(rows));
        for (std::size_t r = 0; r < rows; ++r) {
            const T* xr = x.data() + r * c;
            for (std::size_t k = 0; k < c; ++k) {
                const double d = static_cast<double>(xr[k]) - static_cast<double>(mean[k]);
                sq[k] += d * d;
            }
        }
        for (std::size_t k = 0; k < c; ++k) {
            const double var = sq[k] / static_cast<double>(rows);
            inv_std[k] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(layer.eps)));
            layer.running_mean[k] = layer.momentum * layer.running_mean[k] + (T(1) - layer.momentum) * mean[k];
            layer.running_var[k] =
                layer.momentum * layer.running_var[k] + (T(1) - layer.momentum) * static_cast<T>(var);
        }
    } else {
        for (std::size_t k = 0; k < c; ++k) {
            mean[k] = layer.running_mean[k];
            inv_std[k] = T(1) / std::sqrt(layer.running_var[k] + layer.eps);
        }
    }

    std::vector<T> shift(c);
    for (std::size_t k = 0; k < c; ++k) shift[k] = -mean[k] * inv_std[k];
    Tensor<T> xhat(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * c;
        T* hr = xhat.data() + r * c;
        T* yr = y.data() + r * c;
        for (std::size_t k = 0; k < c; ++k) {
            hr[k] = xr[k] * inv_std[k] + shift[k];
            yr[k] = layer.gamma[k] * hr[k] + layer.beta[k];
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->mode = layer.mode;
    }
    return y;
}

template <class T>
BnGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const BatchNormLayer<T>& layer, const BnCache<T>& cache) {
    const std::size_t c = layer.channels();
    require_shape(grad_out.shape(), cache.xhat.shape(), "batchnorm_backward grad_out");
    const std::size_t rows = grad_out.size() / c;
    BnGrads<T> g{Tensor<T>(grad_out.shape()), Tensor<T>({c}), Tensor<T>({c})};

    std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < c; ++k) {
            const double dy = grad_out[r * c + k];
            sum_dy[k] += dy;
            sum_dy_xhat[k] += dy * cache.xhat[r * c + k];
        }
    }
    for (std::size_t k = 0; k < c; ++k) {
        g.grad_gamma[k] = static_cast<T>(sum_dy_xhat[k]);
        g.grad_beta[k] = static_cast<T>(sum_dy[k]);
    }

    if (cache.mode == BnMode::Infer) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t k = 0; k < c; ++k)
                g.grad_x[r * c + k] = grad_out[r * c + k] * layer.gamma[k] * cache.inv_std[k];
        return g;
    }

    // dx = gamma * inv_std / M * (M * dy - sum(dy) - xhat * sum(dy * xhat))
    const T inv_m = T(1) / static_cast<T>(rows);
    std::vector<T> mean_dy(c), mean_dy_xhat(c), scale(c);
    for (std::size_t k = 0; k < c; ++k) {
        mean_dy[k] = static_cast<T>(sum_dy[k]) * inv_m;
        mean_dy_xhat[k] = static_cast<T>(sum_dy_xhat[k]) * inv_m;
        scale[k] = layer.gamma[k] * cache.inv_std[k];
    }
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < c; ++k) {
            const std::size_t i = r * c + k;
            g.grad_x[i] = scale[k] * (grad_out[i] - mean_dy[k] - cache.xhat[i] * mean_dy_xhat[k]);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation : std::uint8_t { ReLU = 0, Tanh = 1, ELU = 2, PReLU = 3 };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::ELU: return "elu";
        case Activation::PReLU: return "prelu";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "tanh") return Activation::Tanh;
    if (s == "elu") return Activation::ELU;
    if (s == "prelu") return Activation::PReLU;
    throw ConfigError("unknown activation '" + s + "' (relu|tanh|elu|prelu)");
}

// `slopes` holds the per-channel PReLU coefficients; ignored otherwise.
template <class T>
Tensor<T> activation_forward(const Tensor<T>& x, Activation kind, std::span<const T> slopes = {}) {
    Tensor<T> y(x.shape());
    const std::size_t c = x.rank() ? x.shape().back() : 1;
    if (kind == Activation::PReLU && slopes.size() != c)
        throw ShapeError("prelu: slope count does not match channel count");
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T v = x[i];
        switch (kind) {
            case Activation::ReLU: y[i] = v > T(0) ? v : T(0); break;
            case Activation::Tanh: y[i] = std::tanh(v); break;
            case Activation::ELU: y[i] = v > T(0) ? v : std::expm1(v); break;
            case Activation::PReLU: y[i] = v > T(0) ? v : slopes[i % c] * v; break;
        }
    }
    return y;
}

template <class T>
struct ActivationGrads {
    Tensor<T> grad_x;
    Tensor<T> grad_slopes;  // PReLU only
};

template <class T>
ActivationGrads<T> activation_backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& grad_out,
                                       Activation kind, std::span<const T> slopes = {}) {
    require_shape(grad_out.shape(), x.shape(), "activation_backward grad_out");
    const std::size_t c = x.rank() ? x.shape().back() : 1;
    ActivationGrads<T> g{Tensor<T>(x.shape()), kind == Activation::PReLU ? Tensor<T>({c}) : Tensor<T>{}};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T v = x[i], d = grad_out[i];
        switch (kind) {
            case Activation::ReLU: g.grad_x[i] = v > T(0) ? d : T(0); break;
            case Activation::Tanh: g.grad_x[i] = d * (T(1) - y[i] * y[i]); break;
            case Activation::ELU: g.grad_x[i] = v > T(0) ? d : d * (y[i] + T(1)); break;
            case Activation::PReLU:
                if (v > T(0)) {
                    g.grad_x[i] = d;
                } else {
                    g.grad_x[i] = d * slopes[i % c];
                    g.grad_slopes[i % c] += d * v;
                }
                break;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// 2x2 pooling, stride 2
// ---------------------------------------------------------------------------

enum class Pool : std::uint8_t { Max = 0, Avg = 1 };

inline std::string to_string(Pool p) { return p == Pool::Max ? "max" : "avg"; }

inline Pool parse_pool(const std::string& s) {
    if (s == "max") return Pool::Max;
    if (s == "avg") return Pool::Avg;
    throw ConfigError("unknown pooling '" + s + "' (max|avg)");
}

// Strict rejects odd extents. Ceil keeps a trailing partial window over the
// elements that exist (output extent ceil(n / 2)).
enum class PoolEdge { Strict, Ceil };

template <class T>
struct PoolCache {
    Shape input_shape;
    std::vector<std::uint32_t> argmax;  // flat input index per output element (max only)
};

template <class T>
Tensor<T> pool2x2_forward(const Tensor<T>& x, Pool kind, PoolEdge edge = PoolEdge::Strict,
                          PoolCache<T>* cache = nullptr) {
    if (x.rank() != 4) throw ShapeError("pool2x2: input must be N x H x W x C, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (edge == PoolEdge::Strict && (h % 2 || w % 2))
        throw ShapeError("pool2x2: odd spatial extent " + shape_str(x.shape()));
    if (h == 0 || w == 0) throw ShapeError("pool2x2: empty spatial extent");
    const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;

    Tensor<T> y({n, ho, wo, c});
    if (cache) {
        cache->input_shape = x.shape();
        cache->argmax.assign(kind == Pool::Max ? y.size() : 0, 0);
    }
    std::vector<T> best(c), sum(c);
    std::vector<std::uint32_t> best_idx(c);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                const std::size_t ybase = ((s * ho + oy) * wo + ox) * c;
                const std::size_t y0 = 2 * oy, x0 = 2 * ox;
                const std::size_t y1 = std::min(y0 + 2, h), x1 = std::min(x0 + 2, w);
                // Window elements in raster order; strict '>' keeps the first maximum.
                bool first = true;
                for (std::size_t iy = y0; iy < y1; ++iy) {
                    for (std::size_t ix = x0; ix < x1; ++ix) {
                        const std::size_t base = ((s * h + iy) * w + ix) * c;
                        const T* xv = x.data() + base;
                        if (first) {
                            for (std::size_t k = 0; k < c; ++k) {
                                best[k] = xv[k];
                                sum[k] = xv[k];
                                best_idx[k] = static_cast<std::uint32_t>(base + k);
                            }
                            first = false;
                            continue;
                        }
                        for (std::size_t k = 0; k < c; ++k) {
                            sum[k] += xv[k];
                            const bool better = xv[k] > best[k];
                            best[k] = better ? xv[k] : best[k];
                            best_idx[k] = better ? static_cast<std::uint32_t>(base + k) : best_idx[k];
                        }
                    }
                }
                if (kind == Pool::Max) {
                    std::copy(best.begin(), best.end(), y.data() + ybase);
                    if (cache) std::copy(best_idx.begin(), best_idx.end(), cache->argmax.begin() + ybase);
                } else {
                    const T inv = T(1) / static_cast<T>((y1 - y0) * (x1 - x0));
                    for (std::size_t k = 0; k < c; ++k) y[ybase + k] = sum[k] * inv;
                }
            }
        }
    }
    return y;
}

// Max routes each output gradient to the first maximal input of its window;
// avg spreads it evenly over the window.
template <class T>
Tensor<T> pool2x2_backward(const Tensor<T>& grad_out, Pool kind, const PoolCache<T>& cache) {
    const Shape& xs = cache.input_shape;
    const std::size_t n = xs[0], h = xs[1], w = xs[2], c = xs[3];
    const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
    require_shape(grad_out.shape(), {n, ho, wo, c}, "pool2x2_backward grad_out");
    Tensor<T> gx(xs);
    if (kind == Pool::Max) {
        for (std::size_t i = 0; i < grad_out.size(); ++i) gx[cache.argmax[i]] += grad_out[i];
        return gx;
    }
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                const std::size_t y0 = 2 * oy, x0 = 2 * ox;
                const std::size_t y1 = std::min(y0 + 2, h), x1 = std::min(x0 + 2, w);
                const T share = T(1) / static_cast<T>((y1 - y0) * (x1 - x0));
                for (std::size_t k = 0; k < c; ++k) {
                    const T g = grad_out[((s * ho + oy) * wo + ox) * c + k] * share;
                    for (std::size_t iy = y0; iy < y1; ++iy)
                        for (std::size_t ix = x0; ix < x1; ++ix) gx[((s * h + iy) * w + ix) * c + k] += g;
                }
            }
    return gx;
}

// ---------------------------------------------------------------------------
// Dense, softmax, cross-entropy
// ---------------------------------------------------------------------------

template <class T>
struct DenseLayer {
    Tensor<T> weights;  // [in, out]
    Tensor<T> bias;     // [out]

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out) : weights({in, out}), bias({out}) {}

    std::size_t in_features() const { return weights.dim(0); }
    std::size_t out_features() const { return weights.dim(1); }
};

template <class T>
struct DenseGrads {
    Tensor<T> grad_x;
    Tensor<T> grad_w;
    Tensor<T> grad_b;
};

// x is flattened to [N, in] from any [N, ...] layout.
template <class T>
Tensor<T> dense_forward(const Tensor<T>& x, const DenseLayer<T>& layer) {
    const std::size_t in = layer.in_features(), out = layer.out_features();
    if (x.rank() < 1 || x.size() != x.dim(0) * in)
        throw ShapeError("dense: input " + shape_str(x.shape()) + " does not flatten to " + std::to_string(in) +
                         " features");
    const std::size_t n = x.dim(0);
    Tensor<T> y({n, out});
    for (std::size_t s = 0; s < n; ++s) std::copy(layer.bias.data(), layer.bias.data() + out, y.data() + s * out);
    gemm_acc(x.data(), layer.weights.data(), y.data(), n, in, out);
    return y;
}

template <class T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const DenseLayer<T>& layer, const Tensor<T>& grad_out,
                             bool need_input_grad = true) {
    const std::size_t in = layer.in_features(), out = layer.out_features();
    const std::size_t n = x.dim(0);
    if (x.size() != n * in) throw ShapeError("dense_backward: input does not match layer");
    require_shape(grad_out.shape(), {n, out}, "dense_backward grad_out");

    DenseGrads<T> g{need_input_grad ? Tensor<T>(x.shape()) : Tensor<T>{}, Tensor<T>({in, out}), Tensor<T>({out})};
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t o = 0; o < out; ++o) g.grad_b[o] += grad_out[s * out + o];
    gemm_at_b_acc(x.data(), grad_out.data(), g.grad_w.data(), n, in, out);
    if (need_input_grad) {
        std::vector<T> wt(in * out);
        transpose(layer.weights.data(), wt.data(), in, out);
        gemm_acc(grad_out.data(), wt.data(), g.grad_x.data(), n, out, in);
    }
    return g;
}

// Row-wise softmax of [N, C] logits with max subtraction.
template <class T>
Tensor<T> softmax(const Tensor<T>& z) {
    if (z.rank() != 2) throw ShapeError("softmax: logits must be N x C");
    const std::size_t n = z.dim(0), c = z.dim(1);
    Tensor<T> p(z.shape());
    for (std::size_t s = 0; s < n; ++s) {
        const T* zr = z.data() + s * c;
        T* pr = p.data() + s * c;
        const T zmax = *std::max_element(zr, zr + c);
        T sum = T(0);
        for (std::size_t k = 0; k < c; ++k) sum += (pr[k] = std::exp(zr[k] - zmax));
        for (std::size_t k = 0; k < c; ++k) pr[k] /= sum;
    }
    return p;
}

// Mean over the batch of -log p[label]. Probabilities are floored at the
// smallest normal value so a confident wrong answer gives a finite loss.
template <class T>
T cross_entropy(const Tensor<T>& probs, std::span<const int> labels) {
    const std::size_t n = probs.dim(0), c = probs.dim(1);
    if (labels.size() != n) throw ShapeError("cross_entropy: label count does not match batch");
    double loss = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        if (labels[s] < 0 || static_cast<std::size_t>(labels[s]) >= c)
            throw ShapeError("cross_entropy: label out of range");
        const T p = std::max(probs[s * c + static_cast<std::size_t>(labels[s])], std::numeric_limits<T>::min());
        loss -= std::log(static_cast<double>(p));
    }
    return static_cast<T>(loss / static_cast<double>(n));
}

// d(mean CE)/d(logits) = (p - onehot) / N.
template <class T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs, std::span<const int> labels) {
    const std::size_t n = probs.dim(0), c = probs.dim(1);
    Tensor<T> g = probs;
    const T inv_n = T(1) / static_cast<T>(n);
    for (std::size_t s = 0; s < n; ++s) {
        g[s * c + static_cast<std::size_t>(labels[s])] -= T(1);
        for (std::size_t k = 0; k < c; ++k) g[s * c + k] *= inv_n;
    }
    return g;
}

}  // namespace printattr::nn
