#include "atnet/optimizer.hpp"

#include <cmath>

namespace atnet {

OptimizerState OptimizerState::for_params(const ParameterStore& params, const AdamConfig& config) {
    OptimizerState state;
    state.config = config;
    for (const auto& t : params.tensors()) {
        state.m.emplace_back(t.values.size(), 0.0);
        state.v.emplace_back(t.values.size(), 0.0);
    }
    return state;
}

bool adam_step(ParameterStore& params, const Gradients& grads, OptimizerState& state) {
    auto& tensors = params.tensors();
    if (grads.values.size() != tensors.size() || state.m.size() != tensors.size() || state.v.size() != tensors.size())
        throw InvalidArgument("adam_step: gradient/optimizer layout does not match parameters");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (grads.values[i].size() != tensors[i].values.size() || state.m[i].size() != tensors[i].values.size())
            throw InvalidArgument("adam_step: size mismatch for " + tensors[i].name);
    }
    if (!grads.all_finite()) {
        ++state.rejected_steps;
        return false;
    }

    const AdamConfig& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        auto& p = tensors[i].values;
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto& g = grads.values[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            const double m_hat = m[k] / correction1;
            const double v_hat = v[k] / correction2;
            p[k] = static_cast<float>(static_cast<double>(p[k]) - c.lr * m_hat / (std::sqrt(v_hat) + c.eps));
        }
    }
    return true;
}

}  // namespace atnet
