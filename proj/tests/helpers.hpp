#pragma once

#include <random>
#include <vector>

#include "cotsfa/matrix.hpp"
#include "cotsfa/random.hpp"
#include "cotsfa/tensor.hpp"

namespace testing {

inline cotsfa::Tensor random_tensor(cotsfa::Shape shape, cotsfa::Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(cotsfa::shape_size(shape));
    for (double& x : v) x = dist(rng);
    return cotsfa::Tensor(std::move(shape), std::move(v));
}

inline cotsfa::Matrix random_matrix(std::size_t rows, std::size_t cols, cotsfa::Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    cotsfa::Matrix m(rows, cols);
    for (double& x : m.values) x = dist(rng);
    return m;
}

inline cotsfa::Matrix constant_matrix(std::size_t rows, std::size_t cols, double value) {
    cotsfa::Matrix m(rows, cols);
    for (double& x : m.values) x = value;
    return m;
}

}  // namespace testing
