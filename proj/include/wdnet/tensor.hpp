#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wdnet {

/// Raised for every contract violation in the library (bad shapes, bad
/// configuration, corrupt files). Messages are single-line.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// One record of the differentiation graph. Operation outputs keep their
/// operands alive through `inputs`; the backward rule reads the operands'
/// values, this node's value and this node's gradient, and accumulates into
/// the operands' gradients.
template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::string_view op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    /// Gradient buffer of operand `i`, allocated on first use, or nullptr when
    /// the operand does not take part in differentiation.
    T* input_grad(std::size_t i) {
        Node& in = *inputs[i];
        if (!in.requires_grad) return nullptr;
        if (in.grad.size() != in.value.size()) in.grad.assign(in.value.size(), T(0));
        return in.grad.data();
    }
    const T* input_value(std::size_t i) const { return inputs[i]->value.data(); }
};

/// Dense row-major tensor handle. Copies share the underlying node; values
/// are immutable once produced by an operation. Parameters (leaves created
/// with requires_grad) are the only tensors mutated, by the optimizer.
template <typename T>
class TensorT {
   public:
    using value_type = T;

    TensorT() = default;
    explicit TensorT(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static TensorT zeros(Shape shape, bool requires_grad = false);
    static TensorT full(Shape shape, T value, bool requires_grad = false);
    static TensorT from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
    static TensorT scalar(T value, bool requires_grad = false) {
        return full({1}, value, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(std::size_t axis) const { return node_->shape.at(axis); }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::size_t numel() const { return node_->value.size(); }

    std::span<const T> data() const { return node_->value; }
    std::span<T> mutable_data() { return node_->value; }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad();
    void zero_grad();

    bool requires_grad() const { return node_->requires_grad; }
    T item() const;

    /// Values only, cut from the graph.
    TensorT detach(bool requires_grad = false) const;

    template <typename U>
    TensorT<U> cast(bool requires_grad = false) const {
        std::vector<U> out(node_->value.begin(), node_->value.end());
        return TensorT<U>::from_data(node_->shape, std::move(out), requires_grad);
    }

    const std::shared_ptr<Node<T>>& node() const { return node_; }

   private:
    std::shared_ptr<Node<T>> node_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

/// Builds an operation output. When no operand requires a gradient the
/// result is a plain leaf and the backward rule is dropped.
template <typename T>
TensorT<T> make_result(std::string_view op, Shape shape, std::vector<T> value,
                       const std::vector<TensorT<T>>& inputs,
                       std::function<void(Node<T>&)> backward);

/// Reverse-mode sweep from a scalar. Interior gradients are reset on each
/// call; leaf gradients accumulate, so callers zero parameters beforehand.
template <typename T>
void backward(const TensorT<T>& loss);

/// Zeroes the given parameters' gradients, runs backward and returns a copy
/// of each gradient (all zeros for parameters the loss does not reach).
template <typename T>
std::vector<std::vector<T>> gradients(const TensorT<T>& loss,
                                      std::span<TensorT<T>> params);

/// Number of nodes a backward pass from `loss` visits; used by tests of the
/// traversal invariant.
template <typename T>
std::size_t graph_size(const TensorT<T>& loss);

}  // namespace wdnet
