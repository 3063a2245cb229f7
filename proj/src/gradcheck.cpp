#include "cotsfa/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cotsfa {

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                           double eps) {
    Tape tape;
    const Tensor x = tape.watch(point);
    const Tensor y = f(x);
    GradCheckResult result;
    Tensor analytic = Tensor::zeros(point.shape());
    if (y.tracked()) {
        tape.backward(y);
        analytic = tape.grad(x);
    }

    std::vector<double> probe = point.to_vector();
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + eps;
        const double up = f(Tensor(point.shape(), probe)).item();
        probe[i] = saved - eps;
        const double down = f(Tensor(point.shape(), probe)).item();
        probe[i] = saved;

        const double numeric = (up - down) / (2.0 * eps);
        const double a = analytic[i];
        if (!std::isfinite(numeric) || !std::isfinite(a)) {
            if (!result.non_finite_index) result.non_finite_index = i;
            continue;
        }
        const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        if (err > result.max_relative_error) {
            result.max_relative_error = err;
            result.worst_index = i;
        }
    }
    return result;
}

}  // namespace cotsfa
