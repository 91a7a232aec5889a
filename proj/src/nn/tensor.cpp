#include "dvsnet/nn/tensor.hpp"

#include <unordered_set>

#include "dvsnet/error.hpp"

namespace dvsnet::nn {
namespace {
thread_local bool t_grad_enabled = true;
}

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(const Shape& shape) {
    return from(shape, Vec<Scalar>::Zero(numel(shape)));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::full(const Shape& shape, Scalar value) {
    return from(shape, Vec<Scalar>::Constant(numel(shape), value));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from(const Shape& shape, Vec<Scalar> values) {
    if (values.size() != numel(shape))
        throw ShapeError("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
    auto node = std::make_shared<detail::Node<Scalar>>();
    node->shape = shape;
    node->value = std::move(values);
    return Tensor(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::parameter(const Shape& shape, Vec<Scalar> values) {
    Tensor t = from(shape, std::move(values));
    t.node_->requires_grad = true;
    return t;
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

template <typename Scalar>
void Tensor<Scalar>::backward() const {
    if (size() != 1) throw ShapeError("backward() needs a scalar, got " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<detail::Node<Scalar>*> order;
    std::unordered_set<detail::Node<Scalar>*> seen;
    std::vector<std::pair<detail::Node<Scalar>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            auto* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->accumulate(Vec<Scalar>::Ones(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto* n = *it;
        if (n->backward && n->grad.size() != 0) n->backward(*n);
    }
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
    return from(shape(), value());
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::clone() const {
    Tensor t = from(shape(), value());
    t.node_->requires_grad = node_->requires_grad;
    return t;
}

template <typename Scalar>
Tensor<Scalar> make_result(Shape shape, Vec<Scalar> value,
                           std::vector<std::shared_ptr<detail::Node<Scalar>>> parents,
                           std::function<void(detail::Node<Scalar>&)> backward) {
    auto node = std::make_shared<detail::Node<Scalar>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    if (grad_enabled()) {
        bool any = false;
        for (const auto& p : parents) any = any || p->requires_grad;
        if (any) {
            node->requires_grad = true;
            node->parents = std::move(parents);
            node->backward = std::move(backward);
        }
    }
    return Tensor<Scalar>(std::move(node));
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, Vec<float>, std::vector<std::shared_ptr<detail::Node<float>>>,
                                   std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, Vec<double>, std::vector<std::shared_ptr<detail::Node<double>>>,
                                    std::function<void(detail::Node<double>&)>);

}  // namespace dvsnet::nn
