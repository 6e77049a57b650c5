#include "fss/gradcheck.hpp"

#include <cmath>

namespace fss {

double finite_difference_check(const std::function<double()>& loss_fn,
                               const std::vector<GradCheckItem>& items, double eps) {
    if (eps <= 0.0) throw ConfigError("finite_difference_check: eps must be positive");
    double max_rel = 0.0;
    for (const auto& item : items) {
        Tensor& w = *item.value;
        const Tensor& g = *item.analytic_grad;
        if (!w.same_shape(g))
            throw DimensionError("finite_difference_check: grad shape mismatch");
        for (size_t j = 0; j < w.data.size(); ++j) {
            float saved = w.data[j];
            w.data[j] = saved + static_cast<float>(eps);
            double fp = loss_fn();
            w.data[j] = saved - static_cast<float>(eps);
            double fm = loss_fn();
            w.data[j] = saved;
            double numeric = (fp - fm) / (2.0 * eps);
            double rel = std::abs(g.data[j] - numeric) / std::max(1.0, std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace fss
