#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "printattr/error.hpp"
#include "printattr/nn/tensor.hpp"

namespace printattr::nn {

// A trainable tensor and the gradient slot that pairs with it.
template <class T>
struct ParamRef {
    std::string name;
    Tensor<T>* value = nullptr;
    Tensor<T>* grad = nullptr;
};

struct AdamConfig {
    double lr0 = 0.001;
    double decay = 0.0005;  // lr_t = lr0 / (1 + decay * t)
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // L2 coefficient added to gradients; off by default
};

template <class T>
struct AdamState {
    AdamConfig config;
    std::uint64_t t = 0;
    std::vector<Tensor<T>> m, v;

    double learning_rate() const { return config.lr0 / (1.0 + config.decay * static_cast<double>(t)); }
};

template <class T>
AdamState<T> make_adam_state(std::span<const ParamRef<T>> params, AdamConfig config = {}) {
    AdamState<T> s;
    s.config = config;
    for (const auto& p : params) {
        s.m.emplace_back(p.value->shape());
        s.v.emplace_back(p.value->shape());
    }
    return s;
}

// One Adam update with iteration-wise learning-rate decay. Gradients are
// checked for NaN/Inf before anything is modified.
template <class T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state) {
    if (state.m.size() != params.size()) throw ShapeError("adam_step: state does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].grad->shape() != params[i].value->shape() || state.m[i].shape() != params[i].value->shape())
            throw ShapeError("adam_step: shape mismatch for " + params[i].name);
        for (T g : params[i].grad->vec())
            if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient in " + params[i].name);
    }

    const AdamConfig& c = state.config;
    ++state.t;
    const double t = static_cast<double>(state.t);
    const double lr = c.lr0 / (1.0 + c.decay * t);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
    const T wd = static_cast<T>(c.weight_decay);

    for (std::size_t i = 0; i < params.size(); ++i) {
        T* theta = params[i].value->data();
        const T* grad = params[i].grad->data();
        T* m = state.m[i].data();
        T* v = state.v[i].data();
        for (std::size_t k = 0; k < params[i].value->size(); ++k) {
            const T g = grad[k] + wd * theta[k];
            m[k] = b1 * m[k] + (T(1) - b1) * g;
            v[k] = b2 * v[k] + (T(1) - b2) * g * g;
            const double mhat = static_cast<double>(m[k]) / bc1;
            const double vhat = static_cast<double>(v[k]) / bc2;
            theta[k] = static_cast<T>(static_cast<double>(theta[k]) - lr * mhat / (std::sqrt(vhat) + c.eps));
        }
    }
}

}  // namespace printattr::nn
