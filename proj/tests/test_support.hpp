#pragma once

#include "kmgan/rng.hpp"
#include "kmgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace kmgan::testing {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * standard_normal(rng);
    return m;
}

/// |a - n| / max(|a|, |n|, floor), maximised over every entry of every input.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Central-difference check of d f / d inputs. Returns the worst relative error.
inline double max_gradient_error(const ScalarFn& f, const std::vector<Matrix>& inputs, double h = 1e-5) {
    std::vector<Tensor> leaves;
    for (const auto& m : inputs) leaves.emplace_back(m, true);
    Gradients grads = backward(f(leaves));

    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Matrix analytic = grads.of(leaves[k]);
        for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
            auto eval_at = [&](double delta) {
                std::vector<Tensor> probe;
                for (std::size_t q = 0; q < inputs.size(); ++q) {
                    Matrix v = inputs[q];
                    if (q == k) v.data()[i] += delta;
                    probe.emplace_back(std::move(v), false);
                }
                return f(probe).item();
            };
            const double numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
            worst = std::max(worst, relative_error(analytic.data()[i], numeric));
        }
    }
    return worst;
}

}  // namespace kmgan::testing
