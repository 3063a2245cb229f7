#pragma once

#include <cstddef>
#include <functional>
#include <optional>

#include "cotsfa/tensor.hpp"

namespace cotsfa {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    /// First coordinate where either side was NaN/Inf.
    std::optional<std::size_t> non_finite_index;

    bool passed(double tolerance) const {
        return !non_finite_index && max_relative_error <= tolerance;
    }
};

/// Compares the tape gradient of the scalar `f` at `point` against central
/// differences with step `eps`. Error per coordinate is
/// |analytic - numeric| / max(1, |analytic|).
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                           double eps);

}  // namespace cotsfa
