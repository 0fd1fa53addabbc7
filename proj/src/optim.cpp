#include "avaccel/optim.hpp"

#include <cmath>

namespace avaccel {

namespace {
void check_pair(const Tensor& pred, const Tensor& target, const char* where) {
    if (pred.shape() != target.shape()) {
        throw ShapeError(std::string(where) + ": pred " + shape_string(pred.shape()) +
                         " vs target " + shape_string(target.shape()));
    }
    if (pred.empty()) {
        throw ShapeError(std::string(where) + ": empty input");
    }
}
}  // namespace

Real mae_loss(const Tensor& pred, const Tensor& target) {
    check_pair(pred, target, "mae_loss");
    Real sum = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - target[i]);
    const Real loss = sum / static_cast<Real>(pred.size());
    if (!std::isfinite(loss)) {
        throw NumericError("mae_loss: non-finite loss");
    }
    return loss;
}

Tensor mae_grad(const Tensor& pred, const Tensor& target) {
    check_pair(pred, target, "mae_grad");
    const Real inv_n = Real(1) / static_cast<Real>(pred.size());
    Tensor g(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const Real d = pred[i] - target[i];
        g[i] = d > 0 ? inv_n : (d < 0 ? -inv_n : Real(0));
    }
    return g;
}

void optimizer_step(OptimizerState& state, std::span<const ParamRef> params) {
    for (const ParamRef& ref : params) {
        if (ref.param->shape() != ref.grad->shape()) {
            throw ShapeError("optimizer_step: " + ref.key + " grad " +
                             shape_string(ref.grad->shape()) + " vs param " +
                             shape_string(ref.param->shape()));
        }
        if (!ref.grad->all_finite()) {
            throw NumericError("optimizer_step: non-finite gradient for " + ref.key);
        }
    }
    const OptimizerSettings& s = state.settings;
    ++state.step;
    if (s.kind == OptimizerKind::sgd) {
        for (const ParamRef& ref : params) {
            Tensor& p = *ref.param;
            const Tensor& g = *ref.grad;
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= s.learning_rate * g[i];
        }
        return;
    }
    const Real t = static_cast<Real>(state.step);
    const Real correction1 = Real(1) - std::pow(s.beta1, t);
    const Real correction2 = Real(1) - std::pow(s.beta2, t);
    for (const ParamRef& ref : params) {
        Tensor& p = *ref.param;
        const Tensor& g = *ref.grad;
        auto [m_it, m_new] = state.first_moment.try_emplace(ref.key, p.shape());
        auto [v_it, v_new] = state.second_moment.try_emplace(ref.key, p.shape());
        Tensor& m = m_it->second;
        Tensor& v = v_it->second;
        if (m.shape() != p.shape()) {
            throw ShapeError("optimizer_step: moment shape changed for " + ref.key);
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = s.beta1 * m[i] + (Real(1) - s.beta1) * g[i];
            v[i] = s.beta2 * v[i] + (Real(1) - s.beta2) * g[i] * g[i];
            const Real m_hat = m[i] / correction1;
            const Real v_hat = v[i] / correction2;
            p[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
        }
    }
}

}  // namespace avaccel
