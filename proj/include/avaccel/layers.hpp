#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "avaccel/rng.hpp"
#include "avaccel/tensor.hpp"

/**
 * Layer vocabulary with explicit backward passes.
 *
 * Every `*_forward` returns its output together with a cache holding what the
 * matching `*_backward` needs. Backward functions return the gradient with
 * respect to the layer input plus the parameter gradients (stored in the same
 * parameter struct type as the forward parameters).
 *
 * Image tensors are channel-last: [batch, height, width, channels].
 */
namespace avaccel {

enum class Activation { relu, tanh, sigmoid };
enum class Padding { same, valid };
enum class Mode { train, eval };

template <typename Cache>
struct Forward {
    Tensor output;
    Cache cache;
};

// ---------------------------------------------------------------- dense

struct DenseParams {
    Tensor weights;  // [in, out]
    Tensor bias;     // [out]

    std::size_t in() const { return weights.extent(0); }
    std::size_t out() const { return weights.extent(1); }
};

struct DenseCache {
    Tensor input;
};

struct DenseGrads {
    Tensor input;
    DenseParams params;
};

/// Glorot-uniform weights, zero bias.
DenseParams init_dense(Rng& rng, std::size_t in, std::size_t out);

/// y = x W + bias, x: [b, in].
Forward<DenseCache> dense_forward(const Tensor& x, const DenseParams& p);
DenseGrads dense_backward(const Tensor& grad_out, const DenseCache& cache, const DenseParams& p,
                          bool need_input_grad = true);

// ---------------------------------------------------------------- activations

struct ActivationCache {
    Activation kind = Activation::relu;
    Tensor input;
    Tensor output;
};

/// sigmoid(x) = 1 / (1 + exp(-x)), evaluated without overflow for any |x|.
Real sigmoid(Real x);

Forward<ActivationCache> activation_forward(Activation kind, const Tensor& x);
Tensor activation_backward(const Tensor& grad_out, const ActivationCache& cache);

// ---------------------------------------------------------------- conv2d

struct Conv2dParams {
    Tensor kernels;  // [kh, kw, in_channels, filters]
    Tensor bias;     // [filters]
    std::size_t stride = 1;
    Padding padding = Padding::same;

    std::size_t kernel_h() const { return kernels.extent(0); }
    std::size_t kernel_w() const { return kernels.extent(1); }
    std::size_t in_channels() const { return kernels.extent(2); }
    std::size_t filters() const { return kernels.extent(3); }
};

struct Conv2dCache {
    Tensor input;
    std::size_t out_h = 0, out_w = 0;
    std::size_t pad_top = 0, pad_left = 0;
};

struct Conv2dGrads {
    Tensor input;
    Conv2dParams params;
};

/// Glorot-uniform kernels with fan_in = kh*kw*in, fan_out = kh*kw*filters.
Conv2dParams init_conv2d(Rng& rng, std::size_t kh, std::size_t kw, std::size_t in_channels,
                         std::size_t filters, std::size_t stride = 1,
                         Padding padding = Padding::same);

/// Output extent along one spatial axis.
/// same:  ceil(n / stride)
/// valid: floor((n - k) / stride) + 1
std::size_t conv_output_extent(std::size_t n, std::size_t k, std::size_t stride, Padding padding);

/// Cross-correlation (the kernel is not flipped):
///   y[b,i,j,f] = bias[f] + sum_{u,v,c} x[b, i*s+u-pt, j*s+v-pl, c] * K[u,v,c,f]
/// with zero padding; for `same` the total padding is split top/left-first
/// with the extra row/column on the bottom/right.
Forward<Conv2dCache> conv2d_forward(const Tensor& x, const Conv2dParams& p);
Conv2dGrads conv2d_backward(const Tensor& grad_out, const Conv2dCache& cache,
                            const Conv2dParams& p, bool need_input_grad = true);

// ---------------------------------------------------------------- max pooling

struct MaxPoolCache {
    Shape input_shape;
    std::vector<std::size_t> argmax;  // linear input index per output element
};

/// 2x2 window, stride 2. Ties go to the lowest linear input index.
Forward<MaxPoolCache> maxpool2d_forward(const Tensor& x);
Tensor maxpool2d_backward(const Tensor& grad_out, const MaxPoolCache& cache);

// ---------------------------------------------------------------- batch norm

struct BatchNormParams {
    Tensor gamma;  // [channels]
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    Real momentum = Real(0.9);
    Real epsilon = Real(1e-5);

    std::size_t channels() const { return gamma.extent(0); }
};

struct BatchNormCache {
    Mode mode = Mode::train;
    Tensor normalized;  // x-hat, same shape as the input
    Tensor inv_std;     // [channels]
};

struct BatchNormGrads {
    Tensor input;
    BatchNormParams params;  // gamma and beta gradients only
};

/// gamma = 1, beta = 0, running mean 0, running variance 1.
BatchNormParams init_batchnorm(std::size_t channels);

/// Normalizes over every axis except the last (channel) one. Train mode uses
/// the batch statistics (biased variance) and folds them into the running
/// statistics as running = momentum*running + (1-momentum)*batch.
Forward<BatchNormCache> batchnorm_forward(const Tensor& x, BatchNormParams& p, Mode mode);
BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormCache& cache,
                                  const BatchNormParams& p);

// ---------------------------------------------------------------- LSTM

/// Gate order used for every per-gate array.
enum Gate : std::size_t { gate_input = 0, gate_forget = 1, gate_output = 2, gate_cell = 3 };

struct LstmParams {
    std::array<Tensor, 4> input_weights;      // [in, hidden]
    std::array<Tensor, 4> recurrent_weights;  // [hidden, hidden]
    std::array<Tensor, 4> bias;               // [hidden]

    std::size_t input_size() const { return input_weights[0].extent(0); }
    std::size_t hidden_size() const { return input_weights[0].extent(1); }
};

/// Glorot-uniform weights; forget-gate bias 1, other biases 0.
LstmParams init_lstm(Rng& rng, std::size_t in, std::size_t hidden);

struct LstmCellCache {
    Tensor x, h_prev, c_prev;
    std::array<Tensor, 4> gates;  // post-activation i, f, o, g
    Tensor c, tanh_c;
};

struct LstmStep {
    Tensor h;
    Tensor c;
    LstmCellCache cache;
};

struct LstmCellGrads {
    Tensor x, h_prev, c_prev;
    LstmParams params;
};

/// i, f, o = sigmoid(x W + h U + b); g = tanh(...);
/// c_t = f*c_prev + i*g; h_t = o*tanh(c_t).
LstmStep lstm_cell_forward(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                           const LstmParams& p);
LstmCellGrads lstm_cell_backward(const Tensor& grad_h, const Tensor& grad_c,
                                 const LstmCellCache& cache, const LstmParams& p);

struct LstmSequenceCache {
    std::vector<LstmCellCache> steps;
};

struct LstmSequenceGrads {
    Tensor input;
    LstmParams params;
};

/// Unrolls the cell over seq [b, t, in] from zero state; returns every h_t as
/// [b, t, hidden].
Forward<LstmSequenceCache> lstm_sequence_forward(const Tensor& seq, const LstmParams& p);
LstmSequenceGrads lstm_sequence_backward(const Tensor& grad_out, const LstmSequenceCache& cache,
                                         const LstmParams& p, bool need_input_grad = true);

// ---------------------------------------------------------------- time-distributed dense

struct TimeDistributedCache {
    Shape input_shape;
    DenseCache dense;
};

/// The same dense layer applied to every step of seq [b, t, d].
Forward<TimeDistributedCache> time_distributed_dense_forward(const Tensor& seq,
                                                             const DenseParams& p);
DenseGrads time_distributed_dense_backward(const Tensor& grad_out,
                                           const TimeDistributedCache& cache,
                                           const DenseParams& p, bool need_input_grad = true);

// ---------------------------------------------------------------- helpers

/// Sum over the leading axis of a rank-2 tensor.
Tensor column_sums(const Tensor& g);

}  // namespace avaccel
