#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cotsfa/tensor.hpp"

// Differentiable tensor operations. Each records a node on the tape of its
// tracked inputs; with no tracked input the result is a plain constant.
namespace cotsfa::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// General axis permutation: out.shape[i] = a.shape[perm[i]].
Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm);
Tensor reshape(const Tensor& a, Shape shape);

// Elementwise with numpy-style broadcasting of the right operand
// (trailing alignment; each of its dims equal to the left's or 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor tanh(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Reduces `axis` away.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);

/// Rank-1 input to scalar: max(v) + log sum exp(v - max(v)).
Tensor logsumexp(const Tensor& v);
/// Stable log-sum-exp along `axis`, which is reduced away.
Tensor logsumexp(const Tensor& a, std::size_t axis);

}  // namespace cotsfa::ops
