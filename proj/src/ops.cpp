#include "cotsfa/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>

#include "cotsfa/errors.hpp"

namespace cotsfa::ops {
namespace {

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
    Tape* tape = nullptr;
    for (const Tensor* t : inputs) {
        if (!t->tracked()) continue;
        if (tape && tape != t->tape()) {
            throw ContractError("operands recorded on different tapes");
        }
        tape = t->tape();
    }
    return tape;
}

Tape* common_tape(std::span<const Tensor> inputs) {
    Tape* tape = nullptr;
    for (const Tensor& t : inputs) {
        if (!t.tracked()) continue;
        if (tape && tape != t.tape()) {
            throw ContractError("operands recorded on different tapes");
        }
        tape = t.tape();
    }
    return tape;
}

Tensor make(Tape* tape, Shape shape, std::vector<double> values, Tape::Backward backward) {
    if (!tape) return Tensor(std::move(shape), std::move(values));
    return tape->record(std::move(shape), std::move(values), std::move(backward));
}

// Runs `fn(grad_buffer)` when `input` lives on `tape`.
template <typename F>
void accumulate(Tape& tape, const Tensor& input, F&& fn) {
    if (input.tape() == &tape) fn(tape.grad_buffer(input.node()));
}

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_string(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

Shape without_axis(const Shape& shape, std::size_t axis) {
    Shape out = shape;
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
    return out;
}

std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

// Visits every flat index of `shape` together with the matching offset under
// `strides` (which may contain zeros for broadcast axes).
template <typename F>
void for_each_strided(const Shape& shape, const std::vector<std::size_t>& strides, F&& fn) {
    const std::size_t n = shape_size(shape);
    if (n == 0) return;
    if (shape.empty()) {
        fn(std::size_t{0}, std::size_t{0});
        return;
    }
    const std::size_t r = shape.size();
    const std::size_t last = shape[r - 1];
    const std::size_t last_stride = strides[r - 1];
    std::vector<std::size_t> idx(r, 0);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < n;) {
        for (std::size_t k = 0; k < last; ++k, ++i) fn(i, offset + k * last_stride);
        for (std::size_t ax = r - 1; ax-- > 0;) {
            ++idx[ax];
            offset += strides[ax];
            if (idx[ax] < shape[ax]) break;
            offset -= strides[ax] * shape[ax];
            idx[ax] = 0;
        }
    }
}

enum class Broadcast { same, scalar, general };

struct BroadcastPlan {
    Broadcast kind = Broadcast::same;
    std::vector<std::size_t> strides;  // right-operand strides in left index space
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    BroadcastPlan plan;
    if (a == b) return plan;
    if (shape_size(b) == 1 && b.size() <= a.size()) {
        plan.kind = Broadcast::scalar;
        return plan;
    }
    if (b.size() > a.size()) {
        throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(b) +
                             " onto " + shape_string(a));
    }
    plan.kind = Broadcast::general;
    const std::size_t pad = a.size() - b.size();
    const auto bstr = row_major_strides(b);
    plan.strides.assign(a.size(), 0);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const std::size_t ad = a[pad + i];
        if (b[i] == ad) {
            plan.strides[pad + i] = bstr[i];
        } else if (b[i] != 1) {
            throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(b) +
                                 " onto " + shape_string(a));
        }
    }
    return plan;
}

// Calls fn(i, j) for each left index i and its right index j.
template <typename F>
void visit(const Shape& a, const BroadcastPlan& plan, F&& fn) {
    const std::size_t n = shape_size(a);
    switch (plan.kind) {
        case Broadcast::same:
            for (std::size_t i = 0; i < n; ++i) fn(i, i);
            break;
        case Broadcast::scalar:
            for (std::size_t i = 0; i < n; ++i) fn(i, std::size_t{0});
            break;
        case Broadcast::general:
            for_each_strided(a, plan.strides, fn);
            break;
    }
}

template <typename Fwd, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, DA da, DB db) {
    auto plan = plan_broadcast(a.shape(), b.shape(), name);
    std::vector<double> out(a.size());
    auto av = a.data();
    auto bv = b.data();
    visit(a.shape(), plan, [&](std::size_t i, std::size_t j) { out[i] = fwd(av[i], bv[j]); });
    Tape* tape = common_tape({&a, &b});
    return make(tape, a.shape(), std::move(out),
                [a, b, plan = std::move(plan), da, db](std::span<const double> g, Tape& t) {
                    auto av = a.data();
                    auto bv = b.data();
                    accumulate(t, a, [&](std::vector<double>& ga) {
                        visit(a.shape(), plan, [&](std::size_t i, std::size_t j) {
                            ga[i] += g[i] * da(av[i], bv[j]);
                        });
                    });
                    accumulate(t, b, [&](std::vector<double>& gb) {
                        visit(a.shape(), plan, [&](std::size_t i, std::size_t j) {
                            gb[j] += g[i] * db(av[i], bv[j]);
                        });
                    });
                });
}

// Elementwise map whose derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
    auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    Tape* tape = common_tape({&a});
    if (!tape) return Tensor(a.shape(), std::move(out));
    auto result = std::make_shared<std::vector<double>>(out);
    return tape->record(a.shape(), std::move(out),
                        [a, result, deriv](std::span<const double> g, Tape& t) {
                            auto av = a.data();
                            accumulate(t, a, [&](std::vector<double>& ga) {
                                for (std::size_t i = 0; i < g.size(); ++i) {
                                    ga[i] += g[i] * deriv(av[i], (*result)[i]);
                                }
                            });
                        });
}

// c[m x n] += a[m x k] * b[k x n]
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
    MutMap(c.data(), m, n).noalias() += ConstMap(a.data(), m, k) * ConstMap(b.data(), k, n);
}

// c[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k) {
    MutMap(c.data(), m, k).noalias() += ConstMap(g.data(), m, n) * ConstMap(b.data(), k, n).transpose();
}

// c[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
    MutMap(c.data(), k, n).noalias() += ConstMap(a.data(), m, k).transpose() * ConstMap(g.data(), m, n);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    gemm_nn(a.data(), b.data(), out, m, k, n);
    return make(common_tape({&a, &b}), {m, n}, std::move(out),
                [a, b, m, k, n](std::span<const double> g, Tape& t) {
                    accumulate(t, a, [&](std::vector<double>& ga) {
                        gemm_nt(g, b.data(), ga, m, n, k);
                    });
                    accumulate(t, b, [&](std::vector<double>& gb) {
                        gemm_tn(a.data(), g, gb, m, k, n);
                    });
                });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) {
        throw DimensionError("transpose: expected a matrix, got " + shape_string(a.shape()));
    }
    return permute(a, {1, 0});
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
    const std::size_t r = a.rank();
    std::vector<bool> seen(r, false);
    if (perm.size() != r) {
        throw DimensionError("permute: permutation size does not match shape " +
                             shape_string(a.shape()));
    }
    for (std::size_t p : perm) {
        if (p >= r || seen[p]) throw DimensionError("permute: invalid permutation");
        seen[p] = true;
    }
    const auto in_strides = row_major_strides(a.shape());
    Shape out_shape(r);
    std::vector<std::size_t> gather(r);
    for (std::size_t i = 0; i < r; ++i) {
        out_shape[i] = a.shape()[perm[i]];
        gather[i] = in_strides[perm[i]];
    }
    auto av = a.data();
    std::vector<double> out(a.size());
    for_each_strided(out_shape, gather, [&](std::size_t i, std::size_t j) { out[i] = av[j]; });
    return make(common_tape({&a}), out_shape, std::move(out),
                [a, out_shape, gather](std::span<const double> g, Tape& t) {
                    accumulate(t, a, [&](std::vector<double>& ga) {
                        for_each_strided(out_shape, gather,
                                         [&](std::size_t i, std::size_t j) { ga[j] += g[i]; });
                    });
                });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size()) {
        throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                             shape_string(shape));
    }
    return make(common_tape({&a}), std::move(shape), a.to_vector(),
                [a](std::span<const double> g, Tape& t) {
                    accumulate(t, a, [&](std::vector<double>& ga) {
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                    });
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        a, [factor](double x) { return x * factor; },
        [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary(
        a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
    return unary(
        a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor exp(const Tensor& a) {
    return unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor tanh(const Tensor& a) {
    return unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make(common_tape({&a}), {}, {s}, [a](std::span<const double> g, Tape& t) {
        accumulate(t, a, [&](std::vector<double>& ga) {
            for (double& v : ga) v += g[0];
        });
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw DomainError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
    const auto s = split_at(a.shape(), axis);
    auto av = a.data();
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t k = 0; k < s.extent; ++k) {
            const double* src = av.data() + (o * s.extent + k) * s.inner;
            double* dst = out.data() + o * s.inner;
            for (std::size_t in = 0; in < s.inner; ++in) dst[in] += src[in];
        }
    }
    return make(common_tape({&a}), without_axis(a.shape(), axis), std::move(out),
                [a, s](std::span<const double> g, Tape& t) {
                    accumulate(t, a, [&](std::vector<double>& ga) {
                        for (std::size_t o = 0; o < s.outer; ++o) {
                            for (std::size_t k = 0; k < s.extent; ++k) {
                                double* dst = ga.data() + (o * s.extent + k) * s.inner;
                                const double* src = g.data() + o * s.inner;
                                for (std::size_t in = 0; in < s.inner; ++in) dst[in] += src[in];
                            }
                        }
                    });
                });
}

Tensor mean(const Tensor& a, std::size_t axis) {
    const std::size_t n = a.dim(axis);
    if (n == 0) throw DomainError("mean over empty axis");
    return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no operands");
    const Shape& ref = parts.front().shape();
    if (axis >= ref.size()) throw DimensionError("concat: axis out of range");
    Shape out_shape = ref;
    out_shape[axis] = 0;
    for (const Tensor& p : parts) {
        bool ok = p.rank() == ref.size();
        for (std::size_t i = 0; ok && i < ref.size(); ++i) {
            if (i != axis && p.shape()[i] != ref[i]) ok = false;
        }
        if (!ok) {
            throw DimensionError("concat: shape " + shape_string(p.shape()) +
                                 " incompatible with " + shape_string(ref));
        }
        out_shape[axis] += p.shape()[axis];
    }
    const auto total = split_at(out_shape, axis);
    std::vector<double> out(shape_size(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        offsets.push_back(offset);
        const std::size_t block = p.shape()[axis] * total.inner;
        auto pv = p.data();
        for (std::size_t o = 0; o < total.outer; ++o) {
            std::copy_n(pv.data() + o * block, block,
                        out.data() + o * total.extent * total.inner + offset * total.inner);
        }
        offset += p.shape()[axis];
    }
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return make(common_tape(parts), out_shape, std::move(out),
                [inputs, offsets, total, axis](std::span<const double> g, Tape& t) {
                    for (std::size_t n = 0; n < inputs.size(); ++n) {
                        const Tensor& p = inputs[n];
                        accumulate(t, p, [&](std::vector<double>& gp) {
                            const std::size_t block = p.shape()[axis] * total.inner;
                            for (std::size_t o = 0; o < total.outer; ++o) {
                                const double* src = g.data() + o * total.extent * total.inner +
                                                    offsets[n] * total.inner;
                                double* dst = gp.data() + o * block;
                                for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                            }
                        });
                    }
                });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    const auto s = split_at(a.shape(), axis);
    if (begin > end || end > s.extent) {
        throw DimensionError("slice: range [" + std::to_string(begin) + ", " +
                             std::to_string(end) + ") out of bounds for shape " +
                             shape_string(a.shape()));
    }
    Shape out_shape = a.shape();
    out_shape[axis] = end - begin;
    const std::size_t block = (end - begin) * s.inner;
    auto av = a.data();
    std::vector<double> out(s.outer * block);
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(av.data() + (o * s.extent + begin) * s.inner, block, out.data() + o * block);
    }
    return make(common_tape({&a}), std::move(out_shape), std::move(out),
                [a, s, begin, block](std::span<const double> g, Tape& t) {
                    accumulate(t, a, [&](std::vector<double>& ga) {
                        for (std::size_t o = 0; o < s.outer; ++o) {
                            double* dst = ga.data() + (o * s.extent + begin) * s.inner;
                            const double* src = g.data() + o * block;
                            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                        }
                    });
                });
}

Tensor logsumexp(const Tensor& v) {
    if (v.rank() != 1) {
        throw DimensionError("logsumexp: expected a vector, got " + shape_string(v.shape()));
    }
    if (v.size() == 0) throw DomainError("logsumexp of empty vector");
    return logsumexp(v, 0);
}

Tensor logsumexp(const Tensor& a, std::size_t axis) {
    const auto s = split_at(a.shape(), axis);
    if (s.extent == 0) throw DomainError("logsumexp over empty axis");
    auto av = a.data();
    std::vector<double> out(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const double* base = av.data() + o * s.extent * s.inner + in;
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < s.extent; ++k) m = std::max(m, base[k * s.inner]);
            double acc = 0.0;
            for (std::size_t k = 0; k < s.extent; ++k) acc += std::exp(base[k * s.inner] - m);
            out[o * s.inner + in] = m + std::log(acc);
        }
    }
    auto result = std::make_shared<std::vector<double>>(out);
    return make(common_tape({&a}), without_axis(a.shape(), axis), std::move(out),
                [a, s, result](std::span<const double> g, Tape& t) {
                    accumulate(t, a, [&](std::vector<double>& ga) {
                        auto av = a.data();
                        for (std::size_t o = 0; o < s.outer; ++o) {
                            for (std::size_t in = 0; in < s.inner; ++in) {
                                const std::size_t r = o * s.inner + in;
                                const std::size_t base = o * s.extent * s.inner + in;
                                for (std::size_t k = 0; k < s.extent; ++k) {
                                    const std::size_t i = base + k * s.inner;
                                    ga[i] += g[r] * std::exp(av[i] - (*result)[r]);
                                }
                            }
                        }
                    });
                });
}

}  // namespace cotsfa::ops
