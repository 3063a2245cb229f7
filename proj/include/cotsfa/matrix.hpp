#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cotsfa {

/// Mutable row-major block of samples (rows = time steps, cols = channels).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {}

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

}  // namespace cotsfa
