#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "avaccel/tensor.hpp"

namespace avaccel {

/// Mean of |pred - target| over every element.
Real mae_loss(const Tensor& pred, const Tensor& target);

/// sign(pred - target) / n per element; exactly 0 where pred == target.
Tensor mae_grad(const Tensor& pred, const Tensor& target);

enum class OptimizerKind { sgd, adam };

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::adam;
    Real learning_rate = Real(1e-3);
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real epsilon = Real(1e-8);
};

struct OptimizerState {
    OptimizerSettings settings;
    std::uint64_t step = 0;
    // Adam moments keyed like the parameters they track.
    std::map<std::string, Tensor> first_moment;
    std::map<std::string, Tensor> second_moment;
};

/// One trainable tensor and its gradient. `key` must be stable across steps.
struct ParamRef {
    std::string key;
    Tensor* param;
    const Tensor* grad;
};

/// Applies one update to every referenced parameter.
///   sgd:  p -= lr * g
///   adam: m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2;
///         p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// Nothing is modified if any gradient is mis-shaped or non-finite.
void optimizer_step(OptimizerState& state, std::span<const ParamRef> params);

}  // namespace avaccel
