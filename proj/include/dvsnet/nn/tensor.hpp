#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dvsnet::nn {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <typename Scalar>
struct Node {
    Shape shape;
    Vec<Scalar> value;
    Vec<Scalar> grad;  ///< empty until something flows in
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    /// Propagates this->grad into the parents.
    std::function<void(Node&)> backward;

    /// grad += g, allocating on first use.
    template <typename Expr>
    void accumulate(const Expr& g) {
        if (!requires_grad) return;
        if (grad.size() == 0) grad = g;
        else grad += g;
    }
    void ensure_grad() {
        if (grad.size() == 0) grad = Vec<Scalar>::Zero(value.size());
    }
};

}  // namespace detail

/// Graph recording is on by default; disabled inside a NoGradGuard scope
/// (per thread).
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Dense row-major n-d array with optional reverse-mode gradient tracking.
/// Copies share the underlying node; use clone() for a deep copy.
template <typename Scalar>
class Tensor {
public:
    using scalar_type = Scalar;
    using NodePtr = std::shared_ptr<detail::Node<Scalar>>;

    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, Scalar value);
    static Tensor from(const Shape& shape, Vec<Scalar> values);
    /// Leaf that accumulates gradients.
    static Tensor parameter(const Shape& shape, Vec<Scalar> values);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int dim(int axis) const { return node_->shape[static_cast<std::size_t>(axis < 0 ? axis + rank() : axis)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    Eigen::Index size() const { return node_->value.size(); }

    Vec<Scalar>& value() { return node_->value; }
    const Vec<Scalar>& value() const { return node_->value; }
    Vec<Scalar>& grad() { return node_->grad; }
    const Vec<Scalar>& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() != 0; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    Scalar item() const;
    Scalar operator[](Eigen::Index i) const { return node_->value[i]; }

    /// Reverse sweep from this scalar tensor; gradients accumulate into
    /// every reachable node that requires them.
    void backward() const;
    void zero_grad() { node_->grad.resize(0); }

    /// Same values, cut from the graph.
    Tensor detach() const;
    Tensor clone() const;

    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

/// Result node wired to `parents`; records the backward closure only when
/// grad mode is on and some parent needs a gradient.
template <typename Scalar>
Tensor<Scalar> make_result(Shape shape, Vec<Scalar> value,
                           std::vector<std::shared_ptr<detail::Node<Scalar>>> parents,
                           std::function<void(detail::Node<Scalar>&)> backward);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace dvsnet::nn
