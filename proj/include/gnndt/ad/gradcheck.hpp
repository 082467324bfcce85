// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include "gnndt/ad/tape.hpp"

namespace gnndt::ad {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
};

using LossFn = std::function<Tensor<double>(Tape<double>&)>;

/// Central differences against reverse mode for every scalar of every parameter (or at most
/// `max_per_param` evenly strided entries of each). rel = |a - f| / max(1e-8, |a| + |f|).
inline GradCheckResult finite_difference_check(const LossFn& loss, ParameterStore<double>& params, double eps = 1e-5,
                                               std::size_t max_per_param = 0) {
    params.zero_grad();
    {
        Tape<double> tape;
        tape.backward(loss(tape));
    }
    auto eval = [&]() {
        Tape<double> tape(false);
        return loss(tape).item();
    };
    GradCheckResult res;
    for (auto* p : params.all()) {
        const std::size_t n = p->value.size();
        const std::size_t stride = (max_per_param == 0 || n <= max_per_param) ? 1 : (n + max_per_param - 1) / max_per_param;
        for (std::size_t k = 0; k < n; k += stride) {
            const double orig = p->value.data[k];
            p->value.data[k] = orig + eps;
            const double up = eval();
            p->value.data[k] = orig - eps;
            const double down = eval();
            p->value.data[k] = orig;
            const double fd = (up - down) / (2.0 * eps);
            const double ad = p->grad.data[k];
            const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
            ++res.checked;
            if (res.checked == 1 || rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_param = p->name;
                res.worst_index = k;
                res.worst_analytic = ad;
                res.worst_numeric = fd;
            }
        }
    }
    return res;
}

}  // namespace gnndt::ad
