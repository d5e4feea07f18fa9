#include "wdnet/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace wdnet {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw Error("shape " + to_string(shape) + " has a non-positive extent");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string to_string(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

template <typename T>
TensorT<T> TensorT<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
TensorT<T> TensorT<T>::full(Shape shape, T value, bool requires_grad) {
    auto node = std::make_shared<Node<T>>();
    node->value.assign(wdnet::numel(shape), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return TensorT(std::move(node));
}

template <typename T>
TensorT<T> TensorT<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
    if (wdnet::numel(shape) != data.size()) {
        throw Error("data length " + std::to_string(data.size()) + " does not match shape " +
                    to_string(shape));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return TensorT(std::move(node));
}

template <typename T>
std::span<T> TensorT<T>::mutable_grad() {
    if (node_->grad.size() != node_->value.size()) node_->grad.assign(node_->value.size(), T(0));
    return node_->grad;
}

template <typename T>
void TensorT<T>::zero_grad() {
    node_->grad.assign(node_->value.size(), T(0));
}

template <typename T>
T TensorT<T>::item() const {
    if (numel() != 1) throw Error("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
}

template <typename T>
TensorT<T> TensorT<T>::detach(bool requires_grad) const {
    return from_data(node_->shape, node_->value, requires_grad);
}

template <typename T>
TensorT<T> make_result(std::string_view op, Shape shape, std::vector<T> value,
                       const std::vector<TensorT<T>>& inputs,
                       std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->op = op;
    node->shape = std::move(shape);
    node->value = std::move(value);
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const TensorT<T>& t) { return t.requires_grad(); });
    if (any) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (const auto& t : inputs) node->inputs.push_back(t.node());
        node->backward = std::move(backward);
    }
    return TensorT<T>(std::move(node));
}

namespace {

// Post-order over the differentiable part of the graph. Iterative so deep
// graphs do not overflow the stack.
template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child->requires_grad && !seen.count(child)) {
                seen.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace

template <typename T>
void backward(const TensorT<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw Error("backward() requires a scalar loss, got shape " +
                    (loss.defined() ? to_string(loss.shape()) : std::string("(undefined)")));
    }
    Node<T>* root = loss.node().get();
    if (!root->requires_grad) return;
    auto order = topo_order(root);
    for (Node<T>* n : order) {
        if (n->backward) n->grad.assign(n->value.size(), T(0));
    }
    if (root->grad.size() != 1) root->grad.assign(1, T(0));
    root->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward) n->backward(*n);
    }
}

template <typename T>
std::vector<std::vector<T>> gradients(const TensorT<T>& loss, std::span<TensorT<T>> params) {
    for (auto& p : params) p.zero_grad();
    backward(loss);
    std::vector<std::vector<T>> out;
    out.reserve(params.size());
    for (auto& p : params) out.emplace_back(p.grad().begin(), p.grad().end());
    return out;
}

template <typename T>
std::size_t graph_size(const TensorT<T>& loss) {
    if (!loss.requires_grad()) return 0;
    return topo_order(loss.node().get()).size();
}

#define WDNET_INSTANTIATE(T)                                                                  \
    template class TensorT<T>;                                                                \
    template TensorT<T> make_result<T>(std::string_view, Shape, std::vector<T>,               \
                                       const std::vector<TensorT<T>>&,                        \
                                       std::function<void(Node<T>&)>);                        \
    template void backward<T>(const TensorT<T>&);                                             \
    template std::vector<std::vector<T>> gradients<T>(const TensorT<T>&, std::span<TensorT<T>>); \
    template std::size_t graph_size<T>(const TensorT<T>&);

WDNET_INSTANTIATE(float)
WDNET_INSTANTIATE(double)
#undef WDNET_INSTANTIATE

}  // namespace wdnet
