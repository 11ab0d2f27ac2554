#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "drsan/tensor.hpp"

namespace drsan {

// Compares reverse-mode gradients against central differences.
//
// forward must rebuild the graph from the current contents of `inputs` and
// return a scalar; it is invoked repeatedly while single elements of the
// inputs are nudged by +/-eps. Returns the worst relative error
//   |analytic - numeric| / max(|analytic|, |numeric|, floor)
// over every element of every input. Use S = double for tight tolerances;
// central differences in float cannot resolve much below 1e-3.
template <typename S>
double finite_diff_check(const std::function<TensorPtr<S>()>& forward,
                         const std::vector<TensorPtr<S>>& inputs,
                         S eps = S(1e-4)) {
    for (const auto& t : inputs) {
        t->ensure_grad();
        t->zero_grad();
    }
    auto loss = forward();
    backward(loss);

    std::vector<std::vector<S>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& t : inputs) {
        t->ensure_grad();
        analytic.push_back(t->grad);
    }

    const double floor = 1e-8;
    double worst = 0.0;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        auto& t = *inputs[ti];
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const S saved = t.data[i];
            t.data[i] = saved + eps;
            const double up = double(forward()->data[0]);
            t.data[i] = saved - eps;
            const double down = double(forward()->data[0]);
            t.data[i] = saved;
            const double numeric = (up - down) / (2.0 * double(eps));
            const double a = double(analytic[ti][i]);
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace drsan
