#include "kmgan/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace kmgan {

void adam_step(ParamSet& params, const NamedGrads& grads, AdamState& state) {
    const AdamConfig& cfg = state.config;
    const std::uint64_t t = state.t + 1;
    const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));

    struct Pending {
        Parameter* param;
        Matrix m, v, value;
    };
    std::vector<Pending> pending;
    for (auto& p : params.entries()) {
        if (!p.trainable) continue;
        auto g = grads.find(p.name);
        if (g == grads.end()) throw std::invalid_argument("adam_step: missing gradient for " + p.name);
        const Matrix& grad = g->second;
        if (grad.rows() != p.tensor.rows() || grad.cols() != p.tensor.cols())
            throw ShapeError("adam_step: gradient shape mismatch for " + p.name);

        auto m_it = state.first_moment.find(p.name);
        Matrix m = m_it == state.first_moment.end() ? Matrix::Zero(grad.rows(), grad.cols()) : m_it->second;
        auto v_it = state.second_moment.find(p.name);
        Matrix v = v_it == state.second_moment.end() ? Matrix::Zero(grad.rows(), grad.cols()) : v_it->second;

        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
        Matrix step = ((m.array() / bias1) / ((v.array() / bias2).sqrt() + cfg.epsilon)).matrix();
        Matrix value = p.tensor.value() - cfg.alpha * step;
        require_finite(value, "adam update of " + p.name);
        pending.push_back({&p, std::move(m), std::move(v), std::move(value)});
    }

    for (auto& u : pending) {
        u.param->tensor.mutable_value() = std::move(u.value);
        state.first_moment[u.param->name] = std::move(u.m);
        state.second_moment[u.param->name] = std::move(u.v);
    }
    state.t = t;
    ++params.step;
}

}  // namespace kmgan
