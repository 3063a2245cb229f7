#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cotsfa {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

/// Dense row-major array of doubles. Storage is shared and immutable, so
/// copies are cheap and a tensor captured by a tape node never changes.
/// A tensor produced while one of its inputs is tracked carries a handle
/// into that tape.
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double value);
    static Tensor zeros(Shape shape);
    static Tensor filled(Shape shape, double value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_->size(); }

    std::span<const double> data() const noexcept { return *data_; }
    double operator[](std::size_t i) const { return (*data_)[i]; }
    double item() const;
    std::vector<double> to_vector() const { return *data_; }

    bool tracked() const noexcept { return tape_ != nullptr; }
    Tape* tape() const noexcept { return tape_; }
    int node() const noexcept { return node_; }

    /// Same values, no tape handle.
    Tensor detach() const;

private:
    friend class Tape;

    Shape shape_;
    std::shared_ptr<const std::vector<double>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

/// Ordered record of differentiable operations. Nodes are appended in
/// evaluation order, so reverse iteration is a valid topological sweep.
/// A tape and everything recorded on it belong to a single thread.
class Tape {
public:
    /// Receives the gradient of the node's output and adds the input
    /// contributions into the tape's gradient buffers.
    using Backward = std::function<void(std::span<const double> grad_out, Tape& tape)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Registers a leaf (typically a parameter) and returns a tracked alias.
    Tensor watch(const Tensor& value);

    /// Registers an operation output. `backward` may be empty for outputs
    /// that do not propagate.
    Tensor record(Shape shape, std::vector<double> values, Backward backward);

    void backward(const Tensor& loss);

    /// Gradient of the most recent backward pass with respect to `t`;
    /// zeros when `t` was unreachable from the loss.
    Tensor grad(const Tensor& t) const;

    /// Buffer for node `id`, zero-initialised on first access during backward.
    std::vector<double>& grad_buffer(int id);

    void clear();
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Shape shape;
        Backward backward;
        bool leaf = false;
    };

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
};

}  // namespace cotsfa
