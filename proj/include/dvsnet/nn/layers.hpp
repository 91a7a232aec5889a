#pragma once

#include <string>
#include <vector>

#include "dvsnet/counter_rng.hpp"
#include "dvsnet/nn/ops.hpp"

namespace dvsnet::nn {

template <typename S>
struct NamedTensor {
    std::string name;
    Tensor<S> tensor;
};

template <typename S>
using TensorList = std::vector<NamedTensor<S>>;

/// Kaiming-uniform (ReLU gain) draw for a fan-in: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <typename S>
Vec<S> kaiming_uniform(Eigen::Index count, int fan_in, SplitMix64& rng);

template <typename S>
struct Conv2d {
    Tensor<S> weight;  ///< out x in x k x k
    Tensor<S> bias;    ///< out
    int stride = 1;
    int padding = 0;

    Conv2d() = default;
    /// Padding k/2 keeps H and W at stride 1.
    Conv2d(int in_channels, int out_channels, int kernel, int stride, SplitMix64& rng);

    Tensor<S> operator()(const Tensor<S>& x) const { return conv2d(x, weight, bias, stride, padding); }
    void collect(const std::string& prefix, TensorList<S>& params) const;
};

template <typename S>
struct Linear {
    Tensor<S> weight;  ///< out x in
    Tensor<S> bias;

    Linear() = default;
    Linear(int in_features, int out_features, SplitMix64& rng);

    Tensor<S> operator()(const Tensor<S>& x) const { return linear(x, weight, bias); }
    void collect(const std::string& prefix, TensorList<S>& params) const;
};

template <typename S>
struct BatchNorm {
    Tensor<S> gamma;
    Tensor<S> beta;
    Tensor<S> running_mean;  ///< buffer, not trained; slots x C when slots > 1
    Tensor<S> running_var;   ///< buffer, not trained
    S momentum = S(0.1);
    S eps = S(1e-5);
    int slots = 1;

    BatchNorm() = default;
    /// `slots` > 1 keeps separate running statistics per slot (one per time
    /// step) while sharing gamma and beta.
    explicit BatchNorm(int channels, int slots = 1);

    Tensor<S> operator()(const Tensor<S>& x, bool training, int slot = 0) const;
    void collect(const std::string& prefix, TensorList<S>& params) const;
    void collect_buffers(const std::string& prefix, TensorList<S>& buffers) const;
};

/// Scaled dot-product multi-head self-attention over the token axis of an
/// N x T x D input. No positional encoding.
template <typename S>
struct MultiHeadSelfAttention {
    Linear<S> query, key, value, out;
    int heads = 1;

    MultiHeadSelfAttention() = default;
    MultiHeadSelfAttention(int dim, int heads, SplitMix64& rng);

    Tensor<S> operator()(const Tensor<S>& x) const;
    void collect(const std::string& prefix, TensorList<S>& params) const;
};

/// Leaky integrate-and-fire layer state. v and p are empty before the
/// first step, which is equivalent to zero potential and no prior spike.
template <typename S>
struct LifState {
    Tensor<S> v;
    Tensor<S> p;
    S theta = S(0.3);
    S alpha = S(0.2);

    LifState() = default;
    LifState(S theta_, S alpha_) : theta(theta_), alpha(alpha_) {}
    bool started() const { return v.defined(); }
    void reset() {
        v = {};
        p = {};
    }
};

/// V = alpha * V_prev * (1 - P_prev) + X;  P = h(V - theta).
/// Returns P and stores (V, P) in the state.
template <typename S>
Tensor<S> lif_step(LifState<S>& state, const Tensor<S>& x, S surrogate_width = S(1));

}  // namespace dvsnet::nn
