#pragma once

// The fixed attribution network:
//   Conv(2->50) BN Act Pool Conv(50->50) BN Act Pool Flatten
//   Dense(F->512) Act Dense(512->C) Softmax
// parameterized by patch size P, class count C, activation and pooling kind.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "printattr/error.hpp"
#include "printattr/nn/adam.hpp"
#include "printattr/nn/layers.hpp"
#include "printattr/nn/tensor.hpp"
#include "printattr/rng.hpp"

namespace printattr::nn {

inline constexpr std::size_t kInputChannels = 2;
inline constexpr std::size_t kConvFilters = 50;
inline constexpr std::size_t kHidden = 512;

struct ModelConfig {
    int patch = 30;
    int classes = 18;
    Activation activation = Activation::ReLU;
    Pool pool = Pool::Max;
    double bn_eps = 1e-5;
    double bn_momentum = 0.99;
};

// Spatial extents along the stack for a given patch size. Pooling keeps a
// trailing partial window, so odd extents round up.
struct ArchShapes {
    std::size_t conv1, pool1, conv2, pool2, flatten;
};

inline ArchShapes arch_shapes(int patch) {
    if (patch < 8) throw ShapeError("model: patch size " + std::to_string(patch) + " too small for the architecture");
    ArchShapes s{};
    s.conv1 = static_cast<std::size_t>(patch) - 2;
    s.pool1 = (s.conv1 + 1) / 2;
    s.conv2 = s.pool1 - 2;
    s.pool2 = (s.conv2 + 1) / 2;
    s.flatten = s.pool2 * s.pool2 * kConvFilters;
    return s;
}

template <class T>
class Model {
public:
    Model() = default;

    explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
        if (cfg.classes < 2) throw ConfigError("model: need at least 2 classes");
        const auto s = arch_shapes(cfg.patch);
        conv1_ = ConvLayer<T>(kInputChannels, kConvFilters);
        conv2_ = ConvLayer<T>(kConvFilters, kConvFilters);
        bn1_ = BatchNormLayer<T>(kConvFilters);
        bn2_ = BatchNormLayer<T>(kConvFilters);
        for (auto* bn : {&bn1_, &bn2_}) {
            bn->eps = static_cast<T>(cfg.bn_eps);
            bn->momentum = static_cast<T>(cfg.bn_momentum);
        }
        dense1_ = DenseLayer<T>(s.flatten, kHidden);
        dense2_ = DenseLayer<T>(kHidden, static_cast<std::size_t>(cfg.classes));
        if (cfg.activation == Activation::PReLU) {
            slopes1_ = Tensor<T>({kConvFilters}, T(0.25));
            slopes2_ = Tensor<T>({kConvFilters}, T(0.25));
            slopes3_ = Tensor<T>({kHidden}, T(0.25));
        }
        allocate_grads();
    }

    const ModelConfig& config() const { return cfg_; }

    // He-uniform for ReLU-family, Xavier-uniform for tanh and for the output
    // layer. Biases zero; BN gamma 1, beta 0; PReLU slopes 0.25.
    void initialize(std::uint64_t seed) {
        Rng rng(seed);
        const bool tanh = cfg_.activation == Activation::Tanh;
        auto fill = [&](Tensor<T>& w, double fan_in, double fan_out, bool xavier) {
            const double limit = xavier ? std::sqrt(6.0 / (fan_in + fan_out)) : std::sqrt(6.0 / fan_in);
            for (auto& v : w.vec()) v = static_cast<T>(rng.uniform(-limit, limit));
        };
        fill(conv1_.weights, 9.0 * kInputChannels, 9.0 * kConvFilters, tanh);
        fill(conv2_.weights, 9.0 * kConvFilters, 9.0 * kConvFilters, tanh);
        fill(dense1_.weights, static_cast<double>(dense1_.in_features()), kHidden, tanh);
        fill(dense2_.weights, kHidden, static_cast<double>(cfg_.classes), true);
        for (auto* b : {&conv1_.bias, &conv2_.bias, &dense1_.bias, &dense2_.bias}) b->fill(T(0));
    }

    // Every trainable parameter set to zero (BN gamma too).
    void zero_parameters() {
        for (auto& p : parameters()) p.value->fill(T(0));
    }

    void set_mode(BnMode mode) {
        bn1_.mode = mode;
        bn2_.mode = mode;
    }

    // Trainable parameters in a fixed order, paired with gradient slots.
    std::vector<ParamRef<T>> parameters() {
        std::vector<ParamRef<T>> p{
            {"conv1.weights", &conv1_.weights, &g_conv1_w_}, {"conv1.bias", &conv1_.bias, &g_conv1_b_},
            {"bn1.gamma", &bn1_.gamma, &g_bn1_gamma_},       {"bn1.beta", &bn1_.beta, &g_bn1_beta_},
            {"conv2.weights", &conv2_.weights, &g_conv2_w_}, {"conv2.bias", &conv2_.bias, &g_conv2_b_},
            {"bn2.gamma", &bn2_.gamma, &g_bn2_gamma_},       {"bn2.beta", &bn2_.beta, &g_bn2_beta_},
            {"dense1.weights", &dense1_.weights, &g_dense1_w_}, {"dense1.bias", &dense1_.bias, &g_dense1_b_},
            {"dense2.weights", &dense2_.weights, &g_dense2_w_}, {"dense2.bias", &dense2_.bias, &g_dense2_b_},
        };
        if (cfg_.activation == Activation::PReLU) {
            p.push_back({"act1.slopes", &slopes1_, &g_slopes1_});
            p.push_back({"act2.slopes", &slopes2_, &g_slopes2_});
            p.push_back({"act3.slopes", &slopes3_, &g_slopes3_});
        }
        return p;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (const auto& p : parameters()) n += p.value->size();
        return n;
    }

    // Non-trainable state carried with the model (BN running statistics).
    std::vector<Tensor<T>*> buffers() {
        return {&bn1_.running_mean, &bn1_.running_var, &bn2_.running_mean, &bn2_.running_var};
    }

    ConvLayer<T>& conv1() { return conv1_; }
    ConvLayer<T>& conv2() { return conv2_; }
    BatchNormLayer<T>& bn1() { return bn1_; }
    BatchNormLayer<T>& bn2() { return bn2_; }
    DenseLayer<T>& dense1() { return dense1_; }
    DenseLayer<T>& dense2() { return dense2_; }
    const ConvLayer<T>& conv1() const { return conv1_; }

    // Intermediate extents of the last forward pass, in layer order.
    const std::vector<Shape>& trace() const { return trace_; }

    // Batch [N, P, P, 2] -> logits [N, C]. Caches what backward needs.
    Tensor<T> forward(const Tensor<T>& x) {
        const std::size_t p = static_cast<std::size_t>(cfg_.patch);
        if (x.rank() != 4 || x.dim(1) != p || x.dim(2) != p || x.dim(3) != kInputChannels)
            throw ShapeError("model: input " + shape_str(x.shape()) + " incompatible with patch size " +
                             std::to_string(cfg_.patch) + " (expected N x " + std::to_string(p) + " x " +
                             std::to_string(p) + " x 2)");
        trace_.clear();
        x0_ = x;
        c1_ = conv2d_forward(x0_, conv1_);
        trace_.push_back(c1_.shape());
        b1_ = batchnorm_forward(c1_, bn1_, &bn1_cache_);
        trace_.push_back(b1_.shape());
        a1_ = activation_forward<T>(b1_, cfg_.activation, slopes1_.span());
        trace_.push_back(a1_.shape());
        p1_ = pool2x2_forward(a1_, cfg_.pool, PoolEdge::Ceil, &pool1_cache_);
        trace_.push_back(p1_.shape());
        c2_ = conv2d_forward(p1_, conv2_);
        trace_.push_back(c2_.shape());
        b2_ = batchnorm_forward(c2_, bn2_, &bn2_cache_);
        trace_.push_back(b2_.shape());
        a2_ = activation_forward<T>(b2_, cfg_.activation, slopes2_.span());
        trace_.push_back(a2_.shape());
        p2_ = pool2x2_forward(a2_, cfg_.pool, PoolEdge::Ceil, &pool2_cache_);
        trace_.push_back(p2_.shape());
        const std::size_t n = x.dim(0);
        flat_ = p2_.reshaped({n, p2_.size() / n});
        trace_.push_back(flat_.shape());
        d1_ = dense_forward(flat_, dense1_);
        trace_.push_back(d1_.shape());
        a3_ = activation_forward<T>(d1_, cfg_.activation, slopes3_.span());
        trace_.push_back(a3_.shape());
        Tensor<T> logits = dense_forward(a3_, dense2_);
        trace_.push_back(logits.shape());
        return logits;
    }

    Tensor<T> predict_proba(const Tensor<T>& x) { return softmax(forward(x)); }

    // Backpropagates d(loss)/d(logits) through the cached forward pass and
    // overwrites every gradient slot.
    void backward(const Tensor<T>& grad_logits) {
        auto gd2 = dense_backward(a3_, dense2_, grad_logits);
        g_dense2_w_ = std::move(gd2.grad_w);
        g_dense2_b_ = std::move(gd2.grad_b);
        auto ga3 = activation_backward<T>(d1_, a3_, gd2.grad_x, cfg_.activation, slopes3_.span());
        if (cfg_.activation == Activation::PReLU) g_slopes3_ = std::move(ga3.grad_slopes);
        auto gd1 = dense_backward(flat_, dense1_, ga3.grad_x);
        g_dense1_w_ = std::move(gd1.grad_w);
        g_dense1_b_ = std::move(gd1.grad_b);
        Tensor<T> gp2 = std::move(gd1.grad_x).reshaped(p2_.shape());
        auto ga2 = activation_backward<T>(b2_, a2_, pool2x2_backward(gp2, cfg_.pool, pool2_cache_), cfg_.activation,
                                          slopes2_.span());
        if (cfg_.activation == Activation::PReLU) g_slopes2_ = std::move(ga2.grad_slopes);
        auto gb2 = batchnorm_backward(ga2.grad_x, bn2_, bn2_cache_);
        g_bn2_gamma_ = std::move(gb2.grad_gamma);
        g_bn2_beta_ = std::move(gb2.grad_beta);
        auto gc2 = conv2d_backward(p1_, conv2_, gb2.grad_x);
        g_conv2_w_ = std::move(gc2.grad_w);
        g_conv2_b_ = std::move(gc2.grad_b);
        auto ga1 = activation_backward<T>(b1_, a1_, pool2x2_backward(gc2.grad_x, cfg_.pool, pool1_cache_),
                                          cfg_.activation, slopes1_.span());
        if (cfg_.activation == Activation::PReLU) g_slopes1_ = std::move(ga1.grad_slopes);
        auto gb1 = batchnorm_backward(ga1.grad_x, bn1_, bn1_cache_);
        g_bn1_gamma_ = std::move(gb1.grad_gamma);
        g_bn1_beta_ = std::move(gb1.grad_beta);
        auto gc1 = conv2d_backward(x0_, conv1_, gb1.grad_x, /*need_input_grad=*/false);
        g_conv1_w_ = std::move(gc1.grad_w);
        g_conv1_b_ = std::move(gc1.grad_b);
    }

    // Forward + mean cross-entropy + backward. Returns the loss.
    T loss_and_gradients(const Tensor<T>& x, std::span<const int> labels) {
        const Tensor<T> probs = softmax(forward(x));
        const T loss = cross_entropy(probs, labels);
        backward(softmax_cross_entropy_backward(probs, labels));
        return loss;
    }

    // Copies parameters and buffers from another model of the same config.
    void copy_state_from(Model& other) {
        auto dst = parameters();
        auto src = other.parameters();
        if (dst.size() != src.size()) throw ShapeError("model: incompatible parameter layout");
        for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].value = *src[i].value;
        auto db = buffers();
        auto sb = other.buffers();
        for (std::size_t i = 0; i < db.size(); ++i) *db[i] = *sb[i];
    }

private:
    void allocate_grads() {
        for (auto& p : parameters()) *p.grad = Tensor<T>(p.value->shape());
    }

    ModelConfig cfg_;
    ConvLayer<T> conv1_, conv2_;
    BatchNormLayer<T> bn1_, bn2_;
    DenseLayer<T> dense1_, dense2_;
    Tensor<T> slopes1_, slopes2_, slopes3_;

    Tensor<T> g_conv1_w_, g_conv1_b_, g_conv2_w_, g_conv2_b_;
    Tensor<T> g_bn1_gamma_, g_bn1_beta_, g_bn2_gamma_, g_bn2_beta_;
    Tensor<T> g_dense1_w_, g_dense1_b_, g_dense2_w_, g_dense2_b_;
    Tensor<T> g_slopes1_, g_slopes2_, g_slopes3_;

    // forward cache
    Tensor<T> x0_, c1_, b1_, a1_, p1_, c2_, b2_, a2_, p2_, flat_, d1_, a3_;
    BnCache<T> bn1_cache_, bn2_cache_;
    PoolCache<T> pool1_cache_, pool2_cache_;
    std::vector<Shape> trace_;
};

}  // namespace printattr::nn
