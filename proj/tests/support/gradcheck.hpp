#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "avaccel/tensor.hpp"

namespace avaccel::testing {

/// ||analytic - numeric|| / max(||analytic||, ||numeric||), 0 when both vanish.
double relative_error(const Tensor& analytic, const Tensor& numeric);

/// Scalar function of several tensors.
using LossFn = std::function<double(const std::vector<Tensor>&)>;

/// Central differences of f with respect to every element of point[which].
Tensor numeric_gradient(const LossFn& f, std::vector<Tensor> point, std::size_t which,
                        double eps);

struct GradCheckResult {
    std::string layer;
    std::string tensor;
    std::uint64_t instance;
    double rel_error;
};

/// dense, relu, tanh, sigmoid, conv2d, maxpool, batchnorm, lstm_cell,
/// lstm_sequence, time_distributed_dense, mae.
const std::vector<std::string>& gradient_check_kinds();

/// One random instance of `kind` drawn from `seed`; one result per
/// differentiated tensor.
std::vector<GradCheckResult> check_gradients(const std::string& kind, std::uint64_t seed,
                                             double eps = 1e-5);

}  // namespace avaccel::testing
