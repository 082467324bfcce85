// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "gnndt/ad/tape.hpp"

namespace gnndt::ad {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    int warmup_steps = 1000;  // linear ramp, then constant

    void validate() const;
};

/// Moment estimates for one tensor. Kept in double regardless of the parameter precision.
struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

/// Learning rate for 1-based optimizer step `step`.
double scheduled_lr(const AdamWConfig& cfg, std::int64_t step);

/// One AdamW update of a single tensor at 1-based step `step` with learning rate `lr`:
/// p <- p - lr*wd*p, then p <- p - lr * mhat / (sqrt(vhat) + eps).
template <class T>
void adamw_update(std::vector<T>& param, const std::vector<T>& grad, AdamMoments& state, std::int64_t step, double lr,
                  const AdamWConfig& cfg, bool decay = true);

template <class T>
class AdamW {
public:
    AdamW(ParameterStore<T>& params, AdamWConfig cfg);

    /// Applies one update from the accumulated gradients. Throws RuntimeFailure without touching any
    /// parameter when a gradient is non-finite.
    void step();
    std::int64_t step_count() const { return step_; }
    double current_lr() const { return scheduled_lr(cfg_, step_ + 1); }
    const AdamWConfig& config() const { return cfg_; }

    std::vector<AdamMoments>& moments() { return moments_; }
    const std::vector<AdamMoments>& moments() const { return moments_; }
    void set_step_count(std::int64_t s) { step_ = s; }

private:
    ParameterStore<T>* params_;
    AdamWConfig cfg_;
    std::vector<AdamMoments> moments_;
    std::int64_t step_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace gnndt::ad
