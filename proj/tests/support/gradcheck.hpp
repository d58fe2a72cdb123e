#pragma once

// Test-only numerical oracles: central finite differences and naive reference
// kernels. Nothing here calls into the library's optimized paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "printattr/nn/tensor.hpp"
#include "printattr/rng.hpp"

namespace printattr::testing {

using nn::Shape;
using nn::Tensor;

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.vec()) v = rng.uniform(lo, hi);
    return t;
}

// Values kept at least `gap` away from zero so kinked activations are
// differentiable at every sample point.
inline Tensor<double> random_tensor_away_from_zero(Shape shape, Rng& rng, double gap = 0.05) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.vec()) {
        const double m = rng.uniform(gap, 1.0);
        v = rng.uniform() < 0.5 ? -m : m;
    }
    return t;
}

inline double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

// Central differences of scalar f with respect to every element of `param`.
inline std::vector<double> numeric_gradient(Tensor<double>& param, const std::function<double()>& f,
                                            double h = 1e-5) {
    std::vector<double> g(param.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + h;
        const double fp = f();
        param[i] = saved - h;
        const double fm = f();
        param[i] = saved;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double max_relative_error(const Tensor<double>& analytic, const std::vector<double>& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) worst = std::max(worst, relative_error(analytic[i], numeric[i]));
    return worst;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Straight quadruple loop: out[n, y, x, o] = b[o] + sum_{ky,kx,c} in[n, y+ky, x+kx, c] * w[ky, kx, c, o].
template <class T>
Tensor<T> naive_conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), cin = x.dim(3), cout = w.dim(3);
    Tensor<T> y({n, h - 2, wd - 2, cout});
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t oy = 0; oy + 2 < h; ++oy)
            for (std::size_t ox = 0; ox + 2 < wd; ++ox)
                for (std::size_t o = 0; o < cout; ++o) {
                    T acc = b[o];
                    for (std::size_t ky = 0; ky < 3; ++ky)
                        for (std::size_t kx = 0; kx < 3; ++kx)
                            for (std::size_t c = 0; c < cin; ++c)
                                acc += x[((s * h + oy + ky) * wd + ox + kx) * cin + c] *
                                       w[((ky * 3 + kx) * cin + c) * cout + o];
                    y[((s * (h - 2) + oy) * (wd - 2) + ox) * cout + o] = acc;
                }
    return y;
}

}  // namespace printattr::testing
