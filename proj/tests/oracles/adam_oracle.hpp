#pragma once

// Scalar bias-corrected Adam, step by step.

#include <cmath>
#include <vector>

namespace oracle {

inline std::vector<double> adam_trajectory(double theta, const std::vector<double>& grads, double lr,
                                           double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    std::vector<double> out;
    double m = 0.0, v = 0.0;
    for (std::size_t t = 1; t <= grads.size(); ++t) {
        const double g = grads[t - 1];
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double m_hat = m / (1 - std::pow(b1, static_cast<double>(t)));
        const double v_hat = v / (1 - std::pow(b2, static_cast<double>(t)));
        theta -= lr * m_hat / (std::sqrt(v_hat) + eps);
        out.push_back(theta);
    }
    return out;
}

}  // namespace oracle
