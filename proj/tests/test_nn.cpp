#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "printattr/nn/adam.hpp"
#include "printattr/nn/layers.hpp"
#include "printattr/nn/model.hpp"
#include "printattr/nn/model_io.hpp"
#include "support/gradcheck.hpp"
#include "support/gradient_suite.hpp"

using namespace printattr;
using namespace printattr::nn;
using printattr::testing::naive_conv;
using printattr::testing::random_tensor;

// --- convolution -----------------------------------------------------------

TEST(Conv, OutputShapesMatchArchitectureTable) {
    ConvLayer<float> c1(2, 50), c2(50, 50);
    EXPECT_EQ(conv2d_forward(Tensor<float>({1, 30, 30, 2}), c1).shape(), (Shape{1, 28, 28, 50}));
    EXPECT_EQ(conv2d_forward(Tensor<float>({1, 14, 14, 50}), c2).shape(), (Shape{1, 12, 12, 50}));
}

TEST(Conv, FullSupportKernelSumsInputs) {
    ConvLayer<double> layer(1, 1);
    layer.weights.fill(1.0);
    Tensor<double> x({1, 3, 3, 1});
    std::iota(x.vec().begin(), x.vec().end(), 1.0);
    const auto y = conv2d_forward(x, layer);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
    EXPECT_DOUBLE_EQ(y[0], 45.0);
}

TEST(Conv, RejectsInputSmallerThanKernel) {
    ConvLayer<float> layer(1, 1);
    EXPECT_THROW(conv2d_forward(Tensor<float>({1, 2, 5, 1}), layer), ShapeError);
    EXPECT_THROW(conv2d_forward(Tensor<float>({1, 5, 5, 2}), layer), ShapeError);
}

TEST(Conv, MatchesNaiveReference) {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t h = 3 + rng.below(14), w = 3 + rng.below(14), cin = 1 + rng.below(4), cout = 1 + rng.below(8);
        auto xd = random_tensor({2, h, w, cin}, rng);
        ConvLayer<float> layer(cin, cout);
        layer.weights = random_tensor(layer.weights.shape(), rng).cast<float>();
        layer.bias = random_tensor(layer.bias.shape(), rng).cast<float>();
        const auto x = xd.cast<float>();
        const auto got = conv2d_forward(x, layer);
        const auto want = naive_conv(x, layer.weights, layer.bias);
        ASSERT_EQ(got.shape(), want.shape());
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-5);
    }
}

TEST(Conv, ZeroUpstreamGivesZeroGradients) {
    Rng rng(3);
    ConvLayer<double> layer(2, 3);
    layer.weights = random_tensor(layer.weights.shape(), rng);
    const auto x = random_tensor({1, 5, 5, 2}, rng);
    const auto g = conv2d_backward(x, layer, Tensor<double>({1, 3, 3, 3}));
    for (auto v : g.grad_x.vec()) EXPECT_EQ(v, 0.0);
    for (auto v : g.grad_w.vec()) EXPECT_EQ(v, 0.0);
    for (auto v : g.grad_b.vec()) EXPECT_EQ(v, 0.0);
}

TEST(Conv, BiasGradientIsPerFilterSum) {
    Rng rng(5);
    ConvLayer<double> layer(2, 4);
    const auto x = random_tensor({2, 5, 5, 2}, rng);
    const auto go = random_tensor({2, 3, 3, 4}, rng);
    const auto g = conv2d_backward(x, layer, go);
    for (std::size_t o = 0; o < 4; ++o) {
        double s = 0.0;
        for (std::size_t i = o; i < go.size(); i += 4) s += go[i];
        EXPECT_NEAR(g.grad_b[o], s, 1e-12);
    }
}

TEST(Conv, SinglePixelFiniteDifference) {
    Rng rng(17);
    ConvLayer<double> layer(2, 3);
    layer.weights = random_tensor(layer.weights.shape(), rng);
    auto x = random_tensor({1, 5, 5, 2}, rng);
    const auto r = random_tensor({1, 3, 3, 3}, rng);
    const auto g = conv2d_backward(x, layer, r);
    const std::size_t idx = (2 * 5 + 3) * 2 + 1;
    const double h = 1e-5, saved = x[idx];
    x[idx] = saved + h;
    const double fp = printattr::testing::dot(conv2d_forward(x, layer), r);
    x[idx] = saved - h;
    const double fm = printattr::testing::dot(conv2d_forward(x, layer), r);
    EXPECT_LE(printattr::testing::relative_error(g.grad_x[idx], (fp - fm) / (2 * h)), 1e-4);
}

// --- batch norm --------------------------------------------------------------

TEST(BatchNorm, TrainOutputIsStandardized) {
    Rng rng(2);
    BatchNormLayer<double> bn(3);
    const auto x = random_tensor({4, 5, 5, 3}, rng, -3.0, 7.0);
    const auto y = batchnorm_forward(x, bn);
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        const std::size_t rows = y.size() / 3;
        for (std::size_t r = 0; r < rows; ++r) mean += y[r * 3 + c];
        mean /= rows;
        for (std::size_t r = 0; r < rows; ++r) var += (y[r * 3 + c] - mean) * (y[r * 3 + c] - mean);
        var /= rows;
        EXPECT_NEAR(mean, 0.0, 1e-6);
        EXPECT_NEAR(var, 1.0, 1e-4);  // eps = 1e-5 shrinks the variance slightly
    }
}

TEST(BatchNorm, InferMatchesTrainWhenRunningStatsAreBatchStats) {
    Rng rng(4);
    BatchNormLayer<double> bn(2);
    bn.momentum = 0.0;  // running <- batch
    const auto x = random_tensor({6, 3, 3, 2}, rng, -1.0, 4.0);
    const auto train = batchnorm_forward(x, bn);
    bn.mode = BnMode::Infer;
    const auto infer = batchnorm_forward(x, bn);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(train[i], infer[i], 1e-6);
}

TEST(BatchNorm, ConstantChannelNormalizesToZero) {
    BatchNormLayer<double> bn(1);
    Tensor<double> x({3, 2, 2, 1}, 5.0);
    const auto y = batchnorm_forward(x, bn);
    for (auto v : y.vec()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, TrainBatchOfOneIsRejected) {
    BatchNormLayer<float> bn(2);
    EXPECT_THROW(batchnorm_forward(Tensor<float>({1, 3, 3, 2}), bn), DegenerateBatchError);
}

TEST(BatchNorm, RunningStatsFollowMomentum) {
    BatchNormLayer<double> bn(1);
    Tensor<double> x({2, 1, 1, 1}, std::vector<double>{1.0, 3.0});
    batchnorm_forward(x, bn);
    EXPECT_NEAR(bn.running_mean[0], 0.01 * 2.0, 1e-12);
    EXPECT_NEAR(bn.running_var[0], 0.99 * 1.0 + 0.01 * 1.0, 1e-12);
}

// --- activations, pooling, dense, softmax --------------------------------------

TEST(Activation, Definitions) {
    Tensor<double> x({2}, std::vector<double>{-1.0, 2.0});
    const auto relu = activation_forward<double>(x, Activation::ReLU);
    EXPECT_EQ(relu[0], 0.0);
    EXPECT_EQ(relu[1], 2.0);
    EXPECT_EQ(activation_forward<double>(Tensor<double>({1}, 0.0), Activation::Tanh)[0], 0.0);
    const std::vector<double> slope{0.25};
    EXPECT_EQ(activation_forward<double>(Tensor<double>({1}, -4.0), Activation::PReLU, slope)[0], -1.0);
    EXPECT_NEAR(activation_forward<double>(Tensor<double>({1}, -1.0), Activation::ELU)[0], std::exp(-1.0) - 1.0,
                1e-15);
}

TEST(Pool, HalvesSpatialExtent) {
    EXPECT_EQ(pool2x2_forward(Tensor<float>({1, 28, 28, 50}), Pool::Max).shape(), (Shape{1, 14, 14, 50}));
    EXPECT_THROW(pool2x2_forward(Tensor<float>({1, 13, 12, 1}), Pool::Max), ShapeError);
    EXPECT_EQ(pool2x2_forward(Tensor<float>({1, 13, 13, 1}), Pool::Max, PoolEdge::Ceil).shape(),
              (Shape{1, 7, 7, 1}));
}

TEST(Pool, WindowMaxAndMean) {
    Tensor<double> x({1, 2, 2, 1}, std::vector<double>{1, 2, 3, 4});
    EXPECT_EQ(pool2x2_forward(x, Pool::Max)[0], 4.0);
    EXPECT_EQ(pool2x2_forward(x, Pool::Avg)[0], 2.5);
}

TEST(Pool, MaxTieRoutesToTopLeft) {
    Tensor<double> x({1, 4, 4, 1}, 7.0);
    PoolCache<double> cache;
    pool2x2_forward(x, Pool::Max, PoolEdge::Strict, &cache);
    const auto gx = pool2x2_backward(Tensor<double>({1, 2, 2, 1}, 1.0), Pool::Max, cache);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) EXPECT_EQ(gx[static_cast<std::size_t>(r * 4 + c)], (r % 2 == 0 && c % 2 == 0) ? 1.0 : 0.0);
}

TEST(Softmax, UniformLogitsGiveUniformProbabilities) {
    const auto p = softmax(Tensor<double>({1, 5}, 3.0));
    for (auto v : p.vec()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    const auto p = softmax(Tensor<float>({1, 2}, std::vector<float>{1000.0f, 0.0f}));
    EXPECT_FLOAT_EQ(p[0], 1.0f);
    EXPECT_FLOAT_EQ(p[1], 0.0f);
    EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]));
}

TEST(Softmax, RowsSumToOneAndArePositive) {
    Rng rng(8);
    const auto p = softmax(random_tensor({6, 7}, rng, -20.0, 20.0));
    for (std::size_t r = 0; r < 6; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 7; ++c) {
            EXPECT_GT(p[r * 7 + c], 0.0);
            s += p[r * 7 + c];
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Dense, FlattenOfArchitectureFeatureMap) {
    DenseLayer<float> d(1800, 512);
    EXPECT_EQ(dense_forward(Tensor<float>({3, 6, 6, 50}), d).shape(), (Shape{3, 512}));
    EXPECT_THROW(dense_forward(Tensor<float>({3, 7, 7, 50}), d), ShapeError);
}

TEST(GradientSuite, AllLayersWithinTolerance) {
    for (const auto& r : printattr::testing::run_gradient_suite(3, 99)) {
        EXPECT_LE(r.max_rel_error, 1e-4) << r.name;
    }
}

// --- Adam --------------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    Tensor<double> theta({3}, std::vector<double>{1.0, -2.0, 0.5}), grad({3});
    std::vector<ParamRef<double>> params{{"theta", &theta, &grad}};
    auto state = make_adam_state<double>(params);
    adam_step<double>(params, state);
    EXPECT_EQ(theta.vec(), (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Adam, FirstStepMatchesHandEvaluation) {
    Tensor<double> theta({1}, 1.0), grad({1}, 1.0);
    std::vector<ParamRef<double>> params{{"theta", &theta, &grad}};
    auto state = make_adam_state<double>(params);
    adam_step<double>(params, state);
    // lr_1 = 0.001 / 1.0005, mhat = vhat = 1 (arbitrary-precision evaluation).
    EXPECT_NEAR(theta[0], 0.99900049976011993993, 1e-15);
    EXPECT_EQ(state.t, 1u);
}

TEST(Adam, QuadraticTraceMatchesScriptedOracle) {
    // f = (theta - 3)^2, theta_0 = 0; values from an arbitrary-precision script.
    const double want[10] = {0.00099950024820922872175, 0.0019984925546960064686, 0.0029969716593051152939,
                             0.0039949323436081279855,  0.0049923694434108000487, 0.0059892778608753260422,
                             0.0069856525761678928349,  0.0079814886585489036171, 0.0089767812768312890749,
                             0.0099715257091412786278};
    Tensor<double> theta({1}, 0.0), grad({1});
    std::vector<ParamRef<double>> params{{"theta", &theta, &grad}};
    auto state = make_adam_state<double>(params);
    for (int i = 0; i < 10; ++i) {
        grad[0] = 2.0 * (theta[0] - 3.0);
        adam_step<double>(params, state);
        EXPECT_NEAR(theta[0], want[i], 1e-10) << "step " << i + 1;
    }
}

TEST(Adam, NanGradientAbortsWithoutUpdating) {
    Tensor<double> theta({2}, 1.0), grad({2}, std::vector<double>{0.1, std::nan("")});
    std::vector<ParamRef<double>> params{{"theta", &theta, &grad}};
    auto state = make_adam_state<double>(params);
    EXPECT_THROW(adam_step<double>(params, state), NumericalError);
    EXPECT_EQ(state.t, 0u);
    EXPECT_EQ(theta[0], 1.0);
}

TEST(Adam, RepeatedStepsAreBitReproducible) {
    auto run = [] {
        Tensor<double> theta({2}, std::vector<double>{0.3, -0.7}), grad({2}, std::vector<double>{0.2, -0.4});
        std::vector<ParamRef<double>> params{{"theta", &theta, &grad}};
        auto state = make_adam_state<double>(params);
        adam_step<double>(params, state);
        adam_step<double>(params, state);
        return theta.vec();
    };
    EXPECT_EQ(run(), run());
}

// --- model -------------------------------------------------------------------

TEST(Model, ParameterCountForReferenceConfig) {
    Model<float> m(ModelConfig{.patch = 30, .classes = 18});
    EXPECT_EQ(m.parameter_count(), 955046u);
}

TEST(Model, ForwardTraceMatchesArchitectureTable) {
    Model<float> m(ModelConfig{.patch = 30, .classes = 18});
    m.initialize(1);
    Tensor<float> x({2, 30, 30, 2}, 0.5f);
    const auto logits = m.forward(x);
    EXPECT_EQ(logits.shape(), (Shape{2, 18}));
    const std::vector<Shape> want{{2, 28, 28, 50}, {2, 28, 28, 50}, {2, 28, 28, 50}, {2, 14, 14, 50},
                                  {2, 12, 12, 50}, {2, 12, 12, 50}, {2, 12, 12, 50}, {2, 6, 6, 50},
                                  {2, 1800},       {2, 512},        {2, 512},        {2, 18}};
    EXPECT_EQ(m.trace(), want);
}

TEST(Model, PatchSizeIsParametric) {
    EXPECT_EQ(arch_shapes(32).flatten, 2450u);
    EXPECT_EQ(arch_shapes(22).flatten, 800u);
    Model<float> m(ModelConfig{.patch = 32, .classes = 18});
    m.set_mode(BnMode::Infer);
    EXPECT_EQ(m.forward(Tensor<float>({1, 32, 32, 2})).shape(), (Shape{1, 18}));
}

TEST(Model, RejectsIncompatiblePatchSize) {
    Model<float> m(ModelConfig{.patch = 30, .classes = 4});
    EXPECT_THROW(m.forward(Tensor<float>({1, 28, 28, 2})), ShapeError);
}

TEST(Model, ZeroModelIsUniform) {
    Model<float> m(ModelConfig{.patch = 30, .classes = 5});
    m.zero_parameters();
    Rng rng(1);
    const auto x = random_tensor({3, 30, 30, 2}, rng).cast<float>();
    m.set_mode(BnMode::Infer);
    const auto probs = m.predict_proba(x);
    for (auto p : probs.vec()) EXPECT_FLOAT_EQ(p, 0.2f);
}

TEST(Model, PReLUAddsPerChannelSlopes) {
    Model<float> m(ModelConfig{.patch = 30, .classes = 18, .activation = Activation::PReLU});
    EXPECT_EQ(m.parameter_count(), 955046u + 50 + 50 + 512);
}

TEST(Model, EndToEndGradientMatchesFiniteDifferences) {
    ModelConfig cfg{.patch = 10, .classes = 3, .activation = Activation::Tanh, .pool = Pool::Avg};
    Model<double> m(cfg);
    m.initialize(7);
    Rng rng(9);
    const auto x = random_tensor({3, 10, 10, 2}, rng);
    const std::vector<int> labels{0, 2, 1};
    m.loss_and_gradients(x, labels);
    auto params = m.parameters();
    for (auto& p : params) {
        const Tensor<double> analytic = *p.grad;
        // Spot-check a handful of coordinates per tensor.
        for (std::size_t k = 0; k < std::min<std::size_t>(p.value->size(), 5); ++k) {
            const std::size_t i = (k * 7919) % p.value->size();
            const double saved = (*p.value)[i];
            (*p.value)[i] = saved + 1e-5;
            const double fp = cross_entropy(softmax(m.forward(x)), std::span<const int>(labels));
            (*p.value)[i] = saved - 1e-5;
            const double fm = cross_entropy(softmax(m.forward(x)), std::span<const int>(labels));
            (*p.value)[i] = saved;
            // Conv biases feeding BN have an identically zero gradient; compare those absolutely.
            const double numeric = (fp - fm) / 2e-5;
            if (std::abs(numeric) < 1e-8 && std::abs(analytic[i]) < 1e-8) continue;
            EXPECT_LE(printattr::testing::relative_error(analytic[i], numeric), 1e-4) << p.name << "[" << i << "]";
        }
    }
}

TEST(Model, AdamReducesLossOnSeparableToySet) {
    ModelConfig cfg{.patch = 10, .classes = 2};
    Model<float> m(cfg);
    m.initialize(3);
    Rng rng(21);
    const std::size_t n = 16;
    Tensor<float> x({n, 10, 10, 2});
    std::vector<int> labels(n);
    for (std::size_t s = 0; s < n; ++s) {
        labels[s] = static_cast<int>(s % 2);
        for (std::size_t i = 0; i < 200; ++i)
            x[s * 200 + i] = static_cast<float>((labels[s] ? 0.7 : 0.3) + rng.uniform(-0.2, 0.2));
    }
    auto params = m.parameters();
    auto state = make_adam_state<float>(params);
    const float initial = m.loss_and_gradients(x, labels);
    float last = initial;
    for (int step = 0; step < 200; ++step) {
        last = m.loss_and_gradients(x, labels);
        adam_step<float>(params, state);
    }
    EXPECT_LE(last, 0.5f * initial);
}

TEST(ModelIo, RoundTripPreservesPredictions) {
    Model<float> m(ModelConfig{.patch = 12, .classes = 3, .activation = Activation::PReLU, .pool = Pool::Avg});
    m.initialize(5);
    Rng rng(6);
    const auto x = random_tensor({4, 12, 12, 2}, rng).cast<float>();
    m.forward(x);  // touch running stats
    m.set_mode(BnMode::Infer);
    const auto before = m.predict_proba(x);
    const auto path = std::filesystem::temp_directory_path() / "printattr_model_roundtrip.ptnn";
    save_model(path, m, {"a", "b", "c"}, {{"seed", "5"}});
    auto loaded = load_model(path);
    EXPECT_EQ(loaded.class_names, (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(loaded.metadata.at("seed"), "5");
    EXPECT_EQ(loaded.model.predict_proba(x), before);
    std::filesystem::remove(path);
}

TEST(ModelIo, FilterGridHasOneTilePerFilterChannel) {
    Model<float> m(ModelConfig{.patch = 30, .classes = 2});
    m.initialize(1);
    const auto img = filter_grid(m.conv1(), 4);
    EXPECT_EQ(img.rows(), 5 * (3 * 4 + 2) + 2);
    EXPECT_GT(img.cols(), 2 * 10 * (3 * 4));
}
