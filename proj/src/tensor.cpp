#include "cotsfa/tensor.hpp"

#include <numeric>

#include "cotsfa/errors.hpp"

namespace cotsfa {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (shape_size(shape_) != values.size()) {
        throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_string(shape_));
    }
    return shape_[axis];
}

double Tensor::item() const {
    if (size() != 1) {
        throw DimensionError("item() on tensor of shape " + shape_string(shape_));
    }
    return (*data_)[0];
}

Tensor Tensor::detach() const {
    Tensor out = *this;
    out.tape_ = nullptr;
    out.node_ = -1;
    return out;
}

Tensor Tape::watch(const Tensor& value) {
    Tensor out = value.detach();
    out.tape_ = this;
    out.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{value.shape(), {}, true});
    return out;
}

Tensor Tape::record(Shape shape, std::vector<double> values, Backward backward) {
    Tensor out(shape, std::move(values));
    out.tape_ = this;
    out.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{std::move(shape), std::move(backward), false});
    return out;
}

void Tape::backward(const Tensor& loss) {
    if (loss.tape() != this || loss.node() < 0) {
        throw ContractError("backward: loss was not produced on this tape");
    }
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " +
                            shape_string(loss.shape()));
    }
    grads_.assign(nodes_.size(), {});
    grads_[static_cast<std::size_t>(loss.node())] = {1.0};
    for (int id = loss.node(); id >= 0; --id) {
        auto& node = nodes_[static_cast<std::size_t>(id)];
        auto& g = grads_[static_cast<std::size_t>(id)];
        if (g.empty() || node.leaf || !node.backward) continue;
        node.backward(g, *this);
        // Interior gradients are no longer needed once propagated.
        std::vector<double>().swap(g);
    }
}

Tensor Tape::grad(const Tensor& t) const {
    if (t.tape() != this) {
        throw ContractError("grad: tensor is not tracked on this tape");
    }
    const auto id = static_cast<std::size_t>(t.node());
    if (id < grads_.size() && !grads_[id].empty()) {
        return Tensor(t.shape(), grads_[id]);
    }
    return Tensor::zeros(t.shape());
}

std::vector<double>& Tape::grad_buffer(int id) {
    auto& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty()) g.assign(shape_size(nodes_[static_cast<std::size_t>(id)].shape), 0.0);
    return g;
}

void Tape::clear() {
    nodes_.clear();
    grads_.clear();
}

}  // namespace cotsfa
