#pragma once

#include <span>
#include <vector>

#include "dvsnet/nn/tensor.hpp"

// Differentiable primitives. Layouts are row-major; images are N x C x H x W.
namespace dvsnet::nn {

template <typename S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> add_scalar(const Tensor<S>& a, S s);
template <typename S> Tensor<S> scale(const Tensor<S>& a, S s);

template <typename S> Tensor<S> relu(const Tensor<S>& x);
template <typename S> Tensor<S> sigmoid(const Tensor<S>& x);
/// log(max(x, floor)); the gradient is zero where the clamp is active.
template <typename S> Tensor<S> log_clamped(const Tensor<S>& x, S floor);

template <typename S> Tensor<S> sum(const Tensor<S>& x);
template <typename S> Tensor<S> mean(const Tensor<S>& x);

template <typename S> Tensor<S> reshape(const Tensor<S>& x, const Shape& shape);
template <typename S> Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& perm);
template <typename S> Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis);

/// Cross-correlation with zero padding. `bias` may be undefined.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias, int stride,
                 int padding);

/// x: M x F, weight: O x F, bias: O (may be undefined).
template <typename S> Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias);

/// Batched matmul: B x M x K times B x K x N.
template <typename S> Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b);

/// Numerically stable softmax along `axis`.
template <typename S> Tensor<S> softmax(const Tensor<S>& x, int axis);

/// Adaptive average pooling to out_h x out_w with floor/ceil bin edges.
template <typename S> Tensor<S> adaptive_avg_pool2d(const Tensor<S>& x, int out_h, int out_w);

/// x * gate with gate N x C x 1 x 1 broadcast over the spatial axes.
template <typename S> Tensor<S> channel_scale(const Tensor<S>& x, const Tensor<S>& gate);

/// Statistics over every axis but 1. In training mode batch statistics are
/// used and the running estimates are updated in place.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Vec<S>& running_mean, Vec<S>& running_var, bool training, S momentum, S eps);

/// Heaviside h(v - theta) forward; rectangular surrogate
/// (1/width) * [|v - theta| < width / 2] backward.
template <typename S> Tensor<S> spike(const Tensor<S>& v, S theta, S width);

/// Surrogate derivative used by spike().
template <typename S> S surrogate_grad(S v_minus_theta, S width);

/// out[n] = x[n, labels[n]] for x of shape N x K.
template <typename S> Tensor<S> pick(const Tensor<S>& x, std::span<const int> labels);

}  // namespace dvsnet::nn
