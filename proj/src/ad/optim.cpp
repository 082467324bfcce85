// SPDX-License-Identifier: Apache-2.0
#include "gnndt/ad/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gnndt/error.hpp"

namespace gnndt::ad {

void AdamWConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("adamw: lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adamw: betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("adamw: eps must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("adamw: weight_decay must be >= 0");
    if (warmup_steps < 0) throw ConfigError("adamw: warmup_steps must be >= 0");
}

double scheduled_lr(const AdamWConfig& cfg, std::int64_t step) {
    if (cfg.warmup_steps <= 0) return cfg.lr;
    const double frac = std::min(1.0, static_cast<double>(std::max<std::int64_t>(step, 0)) / cfg.warmup_steps);
    return cfg.lr * frac;
}

template <class T>
void adamw_update(std::vector<T>& param, const std::vector<T>& grad, AdamMoments& st, std::int64_t step, double lr,
                  const AdamWConfig& cfg, bool decay) {
    if (grad.size() != param.size()) throw std::invalid_argument("adamw: grad/param size mismatch");
    if (st.m.size() != param.size()) st.m.assign(param.size(), 0.0);
    if (st.v.size() != param.size()) st.v.assign(param.size(), 0.0);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    const double shrink = decay ? 1.0 - lr * cfg.weight_decay : 1.0;
    for (std::size_t k = 0; k < param.size(); ++k) {
        const double g = grad[k];
        st.m[k] = cfg.beta1 * st.m[k] + (1.0 - cfg.beta1) * g;
        st.v[k] = cfg.beta2 * st.v[k] + (1.0 - cfg.beta2) * g * g;
        const double mhat = st.m[k] / bc1;
        const double vhat = st.v[k] / bc2;
        double p = static_cast<double>(param[k]) * shrink;
        p -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        param[k] = static_cast<T>(p);
    }
}

template <class T>
AdamW<T>::AdamW(ParameterStore<T>& params, AdamWConfig cfg) : params_(&params), cfg_(cfg) {
    cfg_.validate();
    for (const auto* p : params.all()) moments_.push_back({std::vector<double>(p->value.size(), 0.0),
                                                           std::vector<double>(p->value.size(), 0.0)});
}

template <class T>
void AdamW<T>::step() {
    auto ps = params_->all();
    if (ps.size() != moments_.size()) throw std::logic_error("adamw: parameter set changed after construction");
    for (const auto* p : ps)
        for (T g : p->grad.data)
            if (!std::isfinite(static_cast<double>(g)))
                throw RuntimeFailure("adamw: non-finite gradient in '" + p->name + "', step rejected");
    ++step_;
    const double lr = scheduled_lr(cfg_, step_);
    for (std::size_t k = 0; k < ps.size(); ++k)
        adamw_update(ps[k]->value.data, ps[k]->grad.data, moments_[k], step_, lr, cfg_, ps[k]->decay);
}

template void adamw_update<float>(std::vector<float>&, const std::vector<float>&, AdamMoments&, std::int64_t, double,
                                  const AdamWConfig&, bool);
template void adamw_update<double>(std::vector<double>&, const std::vector<double>&, AdamMoments&, std::int64_t, double,
                                   const AdamWConfig&, bool);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace gnndt::ad
