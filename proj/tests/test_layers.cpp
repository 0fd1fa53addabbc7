#include <gtest/gtest.h>

#include <cmath>

#include "avaccel/layers.hpp"
#include "support/gradcheck.hpp"

using namespace avaccel;

namespace {

// Direct sum over the definition, with explicit zero padding.
Tensor naive_conv(const Tensor& x, const Conv2dParams& p, std::size_t pad_top,
                  std::size_t pad_left, std::size_t oh, std::size_t ow) {
    const std::size_t b = x.extent(0), h = x.extent(1), w = x.extent(2), c = x.extent(3);
    const std::size_t f = p.filters(), kh = p.kernel_h(), kw = p.kernel_w();
    Tensor y({b, oh, ow, f});
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j)
                for (std::size_t o = 0; o < f; ++o) {
                    double s = p.bias[o];
                    for (std::size_t u = 0; u < kh; ++u)
                        for (std::size_t v = 0; v < kw; ++v)
                            for (std::size_t ch = 0; ch < c; ++ch) {
                                const long iy = long(i * p.stride + u) - long(pad_top);
                                const long ix = long(j * p.stride + v) - long(pad_left);
                                if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
                                s += x.at({n, std::size_t(iy), std::size_t(ix), ch}) *
                                     p.kernels.at({u, v, ch, o});
                            }
                    y.at({n, i, j, o}) = s;
                }
    return y;
}

double scalar_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

class GradientCheck : public ::testing::TestWithParam<std::string> {};

TEST_P(GradientCheck, AnalyticMatchesCentralDifferences) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto results = avaccel::testing::check_gradients(GetParam(), seed);
        ASSERT_FALSE(results.empty());
        for (const auto& r : results) {
            EXPECT_LT(r.rel_error, 1e-4) << r.layer << " " << r.tensor << " seed " << seed;
        }
    }
}

INSTANTIATE_TEST_SUITE_P(AllLayers, GradientCheck,
                         ::testing::ValuesIn(avaccel::testing::gradient_check_kinds()));

TEST(Dense, ForwardIsAffineMap) {
    const DenseParams p{Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}), Tensor::vector({0.5, -1})};
    const auto f = dense_forward(Tensor::matrix({{1, 0, -1}}), p);
    EXPECT_EQ(f.output, Tensor::matrix({{1 - 5 + 0.5, 2 - 6 - 1}}));
    EXPECT_THROW(dense_forward(Tensor::matrix({{1, 2}}), p), ShapeError);
}

TEST(Dense, GlorotInitWithinLimit) {
    Rng rng(1);
    const DenseParams p = init_dense(rng, 30, 20);
    const double limit = std::sqrt(6.0 / 50.0);
    for (Real v : p.weights.values()) EXPECT_LE(std::abs(v), limit);
    for (Real v : p.bias.values()) EXPECT_EQ(v, 0);
}

TEST(Activation, SigmoidStableAtExtremes) {
    EXPECT_EQ(sigmoid(1000), 1.0);
    EXPECT_EQ(sigmoid(-1000), 0.0);
    EXPECT_NEAR(sigmoid(0.3), scalar_sigmoid(0.3), 1e-15);
    const auto f = activation_forward(Activation::sigmoid, Tensor::vector({-800, 800}));
    EXPECT_TRUE(f.output.all_finite());
}

TEST(Activation, ReluZeroesNegatives) {
    const auto f = activation_forward(Activation::relu, Tensor::vector({-1, 0, 2}));
    EXPECT_EQ(f.output, Tensor::vector({0, 0, 2}));
    EXPECT_EQ(activation_backward(Tensor::vector({1, 1, 1}), f.cache), Tensor::vector({0, 0, 1}));
}

TEST(Conv2d, MatchesNaiveLoopOracle) {
    Rng rng(21);
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t h = 3 + rng.below(5), w = 3 + rng.below(5), k = 1 + rng.below(3);
        const std::size_t stride = 1 + rng.below(2);
        const Padding pad = trial % 2 ? Padding::same : Padding::valid;
        Conv2dParams p = init_conv2d(rng, k, k, 2, 3, stride, pad);
        p.bias = rand_normal(rng, {3}, 0, 1);
        const Tensor x = rand_normal(rng, {2, h, w, 2}, 0, 1);
        const auto f = conv2d_forward(x, p);
        const std::size_t oh = conv_output_extent(h, k, stride, pad);
        const std::size_t ow = conv_output_extent(w, k, stride, pad);
        // Same padding splits the total with the extra row/column at the end.
        const std::size_t pt = pad == Padding::same
                                   ? (std::max<long>(0, long((oh - 1) * stride + k) - long(h))) / 2
                                   : 0;
        const std::size_t pl = pad == Padding::same
                                   ? (std::max<long>(0, long((ow - 1) * stride + k) - long(w))) / 2
                                   : 0;
        const Tensor ref = naive_conv(x, p, pt, pl, oh, ow);
        ASSERT_EQ(f.output.shape(), ref.shape());
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(f.output[i], ref[i], 1e-12);
    }
}

TEST(Conv2d, OutputExtents) {
    EXPECT_EQ(conv_output_extent(64, 3, 1, Padding::same), 64u);
    EXPECT_EQ(conv_output_extent(5, 3, 2, Padding::same), 3u);
    EXPECT_EQ(conv_output_extent(5, 3, 1, Padding::valid), 3u);
    EXPECT_EQ(conv_output_extent(6, 3, 2, Padding::valid), 2u);
    EXPECT_THROW(conv_output_extent(2, 3, 1, Padding::valid), ShapeError);
}

TEST(Conv2d, RejectsChannelMismatch) {
    Rng rng(2);
    const Conv2dParams p = init_conv2d(rng, 3, 3, 3, 4);
    EXPECT_THROW(conv2d_forward(Tensor({1, 4, 4, 2}), p), ShapeError);
}

TEST(MaxPool, PicksMaximumAndLowestIndexOnTies) {
    Tensor x({1, 2, 2, 1});
    x[0] = 1;
    x[1] = 3;
    x[2] = 3;
    x[3] = 2;
    const auto f = maxpool2d_forward(x);
    EXPECT_EQ(f.output[0], 3);
    EXPECT_EQ(f.cache.argmax[0], 1u);
    const Tensor g = maxpool2d_backward(Tensor({1, 1, 1, 1}, 1.0), f.cache);
    EXPECT_EQ(g, Tensor({1, 2, 2, 1}, std::vector<Real>{0, 1, 0, 0}));
    EXPECT_THROW(maxpool2d_forward(Tensor({1, 3, 2, 1})), ShapeError);
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
    Rng rng(8);
    BatchNormParams p = init_batchnorm(2);
    const Tensor x = rand_normal(rng, {64, 2}, 3, 4);
    const auto f = batchnorm_forward(x, p, Mode::train);
    for (std::size_t c = 0; c < 2; ++c) {
        double s = 0, ss = 0;
        for (std::size_t i = 0; i < 64; ++i) s += f.output[i * 2 + c];
        for (std::size_t i = 0; i < 64; ++i) ss += f.output[i * 2 + c] * f.output[i * 2 + c];
        EXPECT_NEAR(s / 64, 0, 1e-12);
        // Biased variance plus epsilon in the denominator; inputs have
        // variance ~16 so the epsilon shift stays below 1e-6.
        EXPECT_NEAR(ss / 64, 1, 1e-6);
    }
}

TEST(BatchNorm, RunningStatisticsUpdate) {
    BatchNormParams p = init_batchnorm(1);
    const Tensor x = Tensor({4, 1}, std::vector<Real>{1, 2, 3, 6});
    batchnorm_forward(x, p, Mode::train);
    // mean 3, biased variance (4+1+0+9)/4 = 3.5
    EXPECT_NEAR(p.running_mean[0], 0.9 * 0 + 0.1 * 3, 1e-15);
    EXPECT_NEAR(p.running_var[0], 0.9 * 1 + 0.1 * 3.5, 1e-15);
}

TEST(BatchNorm, EvalModeUsesRunningStatistics) {
    BatchNormParams p = init_batchnorm(1);
    p.running_mean[0] = 2;
    p.running_var[0] = 4;
    p.gamma[0] = 3;
    p.beta[0] = 1;
    const auto f = batchnorm_forward(Tensor({1, 1}, 4.0), p, Mode::eval);
    EXPECT_NEAR(f.output[0], 3 * (4 - 2) / std::sqrt(4 + 1e-5) + 1, 1e-12);
    EXPECT_EQ(p.running_mean[0], 2);  // untouched
}

TEST(BatchNorm, TrainModeNeedsTwoRows) {
    BatchNormParams p = init_batchnorm(1);
    EXPECT_THROW(batchnorm_forward(Tensor({1, 1}), p, Mode::train), ShapeError);
}

TEST(Lstm, CellMatchesScalarOracle) {
    Rng rng(17);
    LstmParams p = init_lstm(rng, 1, 1);
    for (auto& b : p.bias) b[0] = rng.uniform(-1, 1);
    const double x = 0.7, h0 = -0.3, c0 = 0.4;
    auto pre = [&](std::size_t g) {
        return p.input_weights[g][0] * x + p.recurrent_weights[g][0] * h0 + p.bias[g][0];
    };
    const double i = scalar_sigmoid(pre(gate_input));
    const double f = scalar_sigmoid(pre(gate_forget));
    const double o = scalar_sigmoid(pre(gate_output));
    const double g = std::tanh(pre(gate_cell));
    const double c1 = f * c0 + i * g;
    const double h1 = o * std::tanh(c1);
    const auto s = lstm_cell_forward(Tensor({1, 1}, x), Tensor({1, 1}, h0), Tensor({1, 1}, c0), p);
    EXPECT_NEAR(s.c[0], c1, 1e-14);
    EXPECT_NEAR(s.h[0], h1, 1e-14);
}

TEST(Lstm, ForgetBiasInitializedToOne) {
    Rng rng(1);
    const LstmParams p = init_lstm(rng, 3, 4);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(p.bias[gate_forget][k], 1);
        EXPECT_EQ(p.bias[gate_input][k], 0);
    }
}

TEST(Lstm, SequenceEqualsUnrolledCells) {
    Rng rng(5);
    const LstmParams p = init_lstm(rng, 3, 4);
    const Tensor seq = rand_normal(rng, {2, 5, 3}, 0, 1);
    const auto f = lstm_sequence_forward(seq, p);
    Tensor h({2, 4}), c({2, 4});
    for (std::size_t t = 0; t < 5; ++t) {
        const Tensor x = slice(seq, 1, t, t + 1).reshaped({2, 3});
        auto s = lstm_cell_forward(x, h, c, p);
        h = s.h;
        c = s.c;
        EXPECT_EQ(slice(f.output, 1, t, t + 1).reshaped({2, 4}), h);
    }
}

TEST(TimeDistributed, BitExactWithPerStepDense) {
    Rng rng(6);
    const DenseParams p = init_dense(rng, 4, 3);
    const Tensor seq = rand_normal(rng, {3, 5, 4}, 0, 1);
    const auto f = time_distributed_dense_forward(seq, p);
    for (std::size_t t = 0; t < 5; ++t) {
        const Tensor step = dense_forward(slice(seq, 1, t, t + 1).reshaped({3, 4}), p).output;
        EXPECT_EQ(slice(f.output, 1, t, t + 1).reshaped({3, 3}), step);
    }
}
