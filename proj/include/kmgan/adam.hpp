#pragma once

#include "kmgan/mlp.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace kmgan {

struct AdamConfig {
    double alpha = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t t = 0;
    std::map<std::string, Matrix> first_moment;
    std::map<std::string, Matrix> second_moment;

    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

/// One bias-corrected Adam update of every trainable parameter.
/// Throws std::invalid_argument on a missing gradient key and NumericError on a
/// non-finite update (parameters are left untouched in both cases).
void adam_step(ParamSet& params, const NamedGrads& grads, AdamState& state);

}  // namespace kmgan
