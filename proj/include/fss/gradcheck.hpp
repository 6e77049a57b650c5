#pragma once

#include <functional>
#include <vector>

#include "fss/tensor.hpp"

namespace fss {

// Central-difference check of analytic gradients. For each coordinate of each
// checked tensor: numeric = (f(w+eps) - f(w-eps)) / (2 eps), relative error
// |analytic - numeric| / max(1, |numeric|). Returns the max over coordinates.
//
// loss_fn must recompute the scalar loss from current tensor contents; the
// analytic grads are captured before checking and compared coordinate-wise.
struct GradCheckItem {
    Tensor* value;
    const Tensor* analytic_grad;
};

double finite_difference_check(const std::function<double()>& loss_fn,
                               const std::vector<GradCheckItem>& items, double eps);

}  // namespace fss
