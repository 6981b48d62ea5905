#pragma once

#include <cstdint>

#include "fedload/param_tree.hpp"

namespace fedload {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    ParamTree m;
    ParamTree v;
    std::int64_t step_count = 0;

    bool initialized() const { return !m.empty() || step_count > 0; }
};

// Standard Adam update with bias correction. Initializes the moment trees on
// first use; layouts of params/grads/state must agree thereafter.
void adam_step(ParamTree& params, const ParamTree& grads, AdamState& state,
               const AdamConfig& config);

}  // namespace fedload
