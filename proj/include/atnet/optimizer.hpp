#pragma once

#include <cstdint>
#include <vector>

#include "atnet/network.hpp"

namespace atnet {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    bool operator==(const AdamConfig&) const = default;
};

/// First/second moment estimates mirroring the parameter layout.
struct OptimizerState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::uint64_t rejected_steps = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static OptimizerState for_params(const ParameterStore& params, const AdamConfig& config = {});
    bool operator==(const OptimizerState&) const = default;
};

/// Bias-corrected Adam update. Updated parameters are rounded to float32.
/// Returns false (and counts a rejected step, leaving everything else untouched)
/// when any gradient is non-finite.
bool adam_step(ParameterStore& params, const Gradients& grads, OptimizerState& state);

}  // namespace atnet
