#include "gradcheck.hpp"

#include <cmath>

#include "avaccel/layers.hpp"
#include "avaccel/optim.hpp"
#include "avaccel/rng.hpp"

namespace avaccel::testing {

namespace {

double dot(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

// Values bounded away from zero so a relu kink is never straddled.
Tensor away_from_zero(Rng& rng, const Shape& shape) {
    Tensor t(shape);
    for (auto& v : t.values()) v = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.1, 2.0);
    return t;
}

// Distinct values at least 0.05 apart so the pooling argmax is stable.
Tensor distinct_values(Rng& rng, const Shape& shape) {
    Tensor t(shape);
    std::vector<std::size_t> perm(t.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = 0.1 * static_cast<double>(perm[i]) + rng.uniform(-0.02, 0.02);
    }
    return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

using Analytic = std::vector<Tensor>;

std::vector<GradCheckResult> compare(const std::string& layer, std::uint64_t seed,
                                     const std::vector<std::string>& names, const LossFn& f,
                                     const std::vector<Tensor>& point, const Analytic& analytic,
                                     double eps) {
    std::vector<GradCheckResult> out;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const Tensor numeric = numeric_gradient(f, point, i, eps);
        out.push_back({layer, names[i], seed, relative_error(analytic[i], numeric)});
    }
    return out;
}

std::vector<GradCheckResult> check_dense(std::uint64_t seed, double eps) {
    Rng rng(seed);
    const std::size_t b = pick(rng, 1, 4), in = pick(rng, 2, 5), out = pick(rng, 1, 4);
    const std::vector<Tensor> point = {rand_normal(rng, {b, in}, 0, 1),
                                       rand_normal(rng, {in, out}, 0, 1),
                                       rand_normal(rng, {out}, 0, 1)};
    const Tensor r = rand_normal(rng, {b, out}, 0, 1);
    const LossFn f = [&](const std::vector<Tensor>& t) {
        return dot(r, dense_forward(t[0], DenseParams{t[1], t[2]}).output);
    };
    const DenseParams p{point[1], point[2]};
    const auto fw = dense_forward(point[0], p);
    auto g = dense_backward(r, fw.cache, p);
    return compare("dense", seed, {"input", "weights", "bias"}, f, point,
                   {g.input, g.params.weights, g.params.bias}, eps);
}

std::vector<GradCheckResult> check_activation(Activation kind, const std::string& name,
                                              std::uint64_t seed, double eps) {
    Rng rng(seed);
    const Shape shape = {pick(rng, 1, 4), pick(rng, 2, 6)};
    const std::vector<Tensor> point = {kind == Activation::relu
                                           ? away_from_zero(rng, shape)
                                           : rand_normal(rng, shape, 0, 2)};
    const Tensor r = rand_normal(rng, shape, 0, 1);
    const LossFn f = [&](const std::vector<Tensor>& t) {
        return dot(r, activation_forward(kind, t[0]).output);
    };
    const auto fw = activation_forward(kind, point[0]);
    return compare(name, seed, {"input"}, f, point, {activation_backward(r, fw.cache)}, eps);
}

std::vector<GradCheckResult> check_conv2d(std::uint64_t seed, double eps) {
    Rng rng(seed);
    const std::size_t b = pick(rng, 1, 2), h = pick(rng, 3, 6), w = pick(rng, 3, 6);
    const std::size_t c = pick(rng, 1, 3), filters = pick(rng, 1, 3);
    const std::size_t k = pick(rng, 1, 3), stride = pick(rng, 1, 2);
    const Padding padding = rng.uniform() < 0.5 ? Padding::same : Padding::valid;
    Conv2dParams p = init_conv2d(rng, k, k, c, filters, stride, padding);
    p.bias = rand_normal(rng, {filters}, 0, 1);
    const std::vector<Tensor> point = {rand_normal(rng, {b, h, w, c}, 0, 1), p.kernels, p.bias};
    const auto fw = conv2d_forward(point[0], p);
    const Tensor r = rand_normal(rng, fw.output.shape(), 0, 1);
    const LossFn f = [&](const std::vector<Tensor>& t) {
        Conv2dParams q = p;
        q.kernels = t[1];
        q.bias = t[2];
        return dot(r, conv2d_forward(t[0], q).output);
    };
    auto g = conv2d_backward(r, fw.cache, p);
    return compare("conv2d", seed, {"input", "kernels", "bias"}, f, point,
                   {g.input, g.params.kernels, g.params.bias}, eps);
}

std::vector<GradCheckResult> check_maxpool(std::uint64_t seed, double eps) {
    Rng rng(seed);
    const Shape shape = {pick(rng, 1, 2), 2 * pick(rng, 1, 3), 2 * pick(rng, 1, 3),
                         pick(rng, 1, 3)};
    const std::vector<Tensor> point = {distinct_values(rng, shape)};
    const auto fw = maxpool2d_forward(point[0]);
    const Tensor r = rand_normal(rng, fw.output.shape(), 0, 1);
    const LossFn f = [&](const std::vector<Tensor>& t) {
        return dot(r, maxpool2d_forward(t[0]).output);
    };
    return compare("maxpool", seed, {"input"}, f, point, {maxpool2d_backward(r, fw.cache)},
                   eps);
}

std::vector<GradCheckResult> check_batchnorm(std::uint64_t seed, double eps) {
    Rng rng(seed);
    const std::size_t c = pick(rng, 1, 3);
    const Shape shape = rng.uniform() < 0.5 ? Shape{pick(rng, 3, 6), c}
                                            : Shape{pick(rng, 2, 3), 2, 2, c};
    BatchNormParams p = init_batchnorm(c);
    p.gamma = rand_uniform(rng, {c}, 0.5, 1.5);
    p.beta = rand_normal(rng, {c}, 0, 1);
    const std::vector<Tensor> point = {rand_normal(rng, shape, 0, 1), p.gamma, p.beta};
    const Tensor r = rand_normal(rng, shape, 0, 1);
    const LossFn f = [&](const std::vector<Tensor>& t) {
        BatchNormParams q = p;
        q.gamma = t[1];
        q.beta = t[2];
        return dot(r, batchnorm_forward(t[0], q, Mode::train).output);
    };
    BatchNormParams q = p;
    const auto fw = batchnorm_forward(point[0], q, Mode::train);
    auto g = batchnorm_backward(r, fw.cache, p);
    return compare("batchnorm", seed, {"input", "gamma", "beta"}, f, point,
                   {g.input, g.params.gamma, g.params.beta}, eps);
}

std::vector<Tensor> lstm_flat(const LstmParams& p) {
    std::vector<Tensor> t;
    for (const auto& w : p.input_weights) t.push_back(w);
    for (const auto& u : p.recurrent_weights) t.push_back(u);
    for (const auto& b : p.bias) t.push_back(b);
    return t;
}

LstmParams lstm_unflat(const std::vector<Tensor>& t, std::size_t offset) {
    LstmParams p;
    for (std::size_t g = 0; g < 4; ++g) {
        p.input_weights[g] = t[offset + g];
        p.recurrent_weights[g] = t[offset + 4 + g];
        p.bias[g] = t[offset + 8 + g];
    }
    return p;
}

std::vector<std::string> lstm_param_names() {
    std::vector<std::string> names;
    for (const char* kind : {"W", "U", "b"}) {
        for (const char* gate : {"i", "f", "o", "g"}) names.push_back(std::string(kind) + "_" + gate);
    }
    return names;
}

std::vector<GradCheckResult> check_lstm_cell(std::uint64_t seed, double eps) {
    Rng rng(seed);
    const std::size_t b = pick(rng, 1, 3), in = pick(rng, 1, 4), hidden = pick(rng, 1, 4);
    LstmParams p = init_lstm(rng, in, hidden);
    for (auto& bias : p.bias) bias = rand_normal(rng, {hidden}, 0, 0.5);
    std::vector<Tensor> point = {rand_normal(rng, {b, in}, 0, 1),
                                 rand_normal(rng, {b, hidden}, 0, 1),
                                 rand_normal(rng, {b, hidden}, 0, 1)};
    for (auto& t : lstm_flat(p)) point.push_back(t);
    const Tensor rh = rand_normal(rng, {b, hidden}, 0, 1);
    const Tensor rc = rand_normal(rng, {b, hidden}, 0, 1);
    const LossFn f = [&](const std::vector<Tensor>& t) {
        const auto s = lstm_cell_forward(t[0], t[1], t[2], lstm_unflat(t, 3));
        return dot(rh, s.h) + dot(rc, s.c);
    };
    const auto s = lstm_cell_forward(point[0], point[1], point[2], p);
    auto g = lstm_cell_backward(rh, rc, s.cache, p);
    std::vector<std::string> names = {"x", "h_prev", "c_prev"};
    for (auto& n : lstm_param_names()) names.push_back(n);
    Analytic analytic = {g.x, g.h_prev, g.c_prev};
    for (auto& t : lstm_flat(g.params)) analytic.push_back(t);
    return compare("lstm_cell", seed, names, f, point, analytic, eps);
}

std::vector<GradCheckResult> check_lstm_sequence(std::uint64_t seed, double eps) {
    Rng rng(seed);
    const std::size_t b = pick(rng, 1, 2), t = pick(rng, 2, 4), in = pick(rng, 1, 3),
                      hidden = pick(rng, 1, 3);
    const LstmParams p = init_lstm(rng, in, hidden);
    std::vector<Tensor> point = {rand_normal(rng, {b, t, in}, 0, 1)};
    for (auto& x : lstm_flat(p)) point.push_back(x);
    const Tensor r = rand_normal(rng, {b, t, hidden}, 0, 1);
    const LossFn f = [&](const std::vector<Tensor>& x) {
        return dot(r, lstm_sequence_forward(x[0], lstm_unflat(x, 1)).output);
    };
    const auto fw = lstm_sequence_forward(point[0], p);
    auto g = lstm_sequence_backward(r, fw.cache, p);
    std::vector<std::string> names = {"input"};
    for (auto& n : lstm_param_names()) names.push_back(n);
    Analytic analytic = {g.input};
    for (auto& x : lstm_flat(g.params)) analytic.push_back(x);
    return compare("lstm_sequence", seed, names, f, point, analytic, eps);
}

std::vector<GradCheckResult> check_time_distributed(std::uint64_t seed, double eps) {
    Rng rng(seed);
    const std::size_t b = pick(rng, 1, 3), t = pick(rng, 1, 5), d = pick(rng, 1, 4),
                      out = pick(rng, 1, 3);
    const std::vector<Tensor> point = {rand_normal(rng, {b, t, d}, 0, 1),
                                       rand_normal(rng, {d, out}, 0, 1),
                                       rand_normal(rng, {out}, 0, 1)};
    const Tensor r = rand_normal(rng, {b, t, out}, 0, 1);
    const LossFn f = [&](const std::vector<Tensor>& x) {
        return dot(r, time_distributed_dense_forward(x[0], DenseParams{x[1], x[2]}).output);
    };
    const DenseParams p{point[1], point[2]};
    const auto fw = time_distributed_dense_forward(point[0], p);
    auto g = time_distributed_dense_backward(r, fw.cache, p);
    return compare("time_distributed_dense", seed, {"input", "weights", "bias"}, f, point,
                   {g.input, g.params.weights, g.params.bias}, eps);
}

std::vector<GradCheckResult> check_mae(std::uint64_t seed, double eps) {
    Rng rng(seed);
    const Shape shape = {pick(rng, 1, 6), pick(rng, 1, 3)};
    const Tensor target = rand_normal(rng, shape, 0, 1);
    const std::vector<Tensor> point = {add(target, away_from_zero(rng, shape))};
    const LossFn f = [&](const std::vector<Tensor>& x) {
        return static_cast<double>(mae_loss(x[0], target));
    };
    return compare("mae", seed, {"pred"}, f, point, {mae_grad(point[0], target)}, eps);
}

}  // namespace

double relative_error(const Tensor& analytic, const Tensor& numeric) {
    if (analytic.shape() != numeric.shape()) {
        throw ShapeError("relative_error: " + shape_string(analytic.shape()) + " vs " +
                         shape_string(numeric.shape()));
    }
    const double denom = std::max(norm2(analytic), norm2(numeric));
    if (denom == 0) return 0;
    return norm2(sub(analytic, numeric)) / denom;
}

Tensor numeric_gradient(const LossFn& f, std::vector<Tensor> point, std::size_t which,
                        double eps) {
    Tensor grad(point[which].shape());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const Real saved = point[which][i];
        point[which][i] = saved + eps;
        const double up = f(point);
        point[which][i] = saved - eps;
        const double down = f(point);
        point[which][i] = saved;
        grad[i] = static_cast<Real>((up - down) / (2 * eps));
    }
    return grad;
}

const std::vector<std::string>& gradient_check_kinds() {
    static const std::vector<std::string> kinds = {
        "dense",     "relu",      "tanh",          "sigmoid",
        "conv2d",    "maxpool",   "batchnorm",     "lstm_cell",
        "lstm_sequence", "time_distributed_dense", "mae"};
    return kinds;
}

std::vector<GradCheckResult> check_gradients(const std::string& kind, std::uint64_t seed,
                                             double eps) {
    if (kind == "dense") return check_dense(seed, eps);
    if (kind == "relu") return check_activation(Activation::relu, kind, seed, eps);
    if (kind == "tanh") return check_activation(Activation::tanh, kind, seed, eps);
    if (kind == "sigmoid") return check_activation(Activation::sigmoid, kind, seed, eps);
    if (kind == "conv2d") return check_conv2d(seed, eps);
    if (kind == "maxpool") return check_maxpool(seed, eps);
    if (kind == "batchnorm") return check_batchnorm(seed, eps);
    if (kind == "lstm_cell") return check_lstm_cell(seed, eps);
    if (kind == "lstm_sequence") return check_lstm_sequence(seed, eps);
    if (kind == "time_distributed_dense") return check_time_distributed(seed, eps);
    if (kind == "mae") return check_mae(seed, eps);
    throw ConfigError("check_gradients: unknown layer kind " + kind);
}

}  // namespace avaccel::testing
