#include "fedload/adam.hpp"

#include <cmath>

#include "fedload/errors.hpp"

namespace fedload {

void adam_step(ParamTree& params, const ParamTree& grads, AdamState& state,
               const AdamConfig& config) {
    params.require_same_layout(grads, "adam_step");
    if (state.m.empty() && state.step_count == 0) {
        state.m = ParamTree::zeros_like(params);
        state.v = ParamTree::zeros_like(params);
    }
    params.require_same_layout(state.m, "adam_step (first moment)");
    params.require_same_layout(state.v, "adam_step (second moment)");

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bias1 = 1.0 - std::pow(config.beta1, t);
    const double bias2 = 1.0 - std::pow(config.beta2, t);

    auto grad_it = grads.begin();
    auto m_it = state.m.begin();
    auto v_it = state.v.begin();
    for (auto& [path, tensor] : params) {
        const Tensor& g = grad_it->second;
        Tensor& m = m_it->second;
        Tensor& v = v_it->second;
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            tensor[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
        ++grad_it;
        ++m_it;
        ++v_it;
    }
}

}  // namespace fedload
