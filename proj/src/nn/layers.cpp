#include "dvsnet/nn/layers.hpp"

#include <cmath>

#include "dvsnet/error.hpp"

namespace dvsnet::nn {

template <typename S>
Vec<S> kaiming_uniform(Eigen::Index count, int fan_in, SplitMix64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Vec<S> v(count);
    for (Eigen::Index i = 0; i < count; ++i) v[i] = static_cast<S>((2.0 * rng.unit() - 1.0) * bound);
    return v;
}

template <typename S>
Conv2d<S>::Conv2d(int in_channels, int out_channels, int kernel, int stride_, SplitMix64& rng)
    : stride(stride_), padding(kernel / 2) {
    const Shape ws{out_channels, in_channels, kernel, kernel};
    weight = Tensor<S>::parameter(ws, kaiming_uniform<S>(numel(ws), in_channels * kernel * kernel, rng));
    bias = Tensor<S>::parameter({out_channels}, Vec<S>::Zero(out_channels));
}

template <typename S>
void Conv2d<S>::collect(const std::string& prefix, TensorList<S>& params) const {
    params.push_back({prefix + ".weight", weight});
    params.push_back({prefix + ".bias", bias});
}

template <typename S>
Linear<S>::Linear(int in_features, int out_features, SplitMix64& rng) {
    const Shape ws{out_features, in_features};
    weight = Tensor<S>::parameter(ws, kaiming_uniform<S>(numel(ws), in_features, rng));
    bias = Tensor<S>::parameter({out_features}, Vec<S>::Zero(out_features));
}

template <typename S>
void Linear<S>::collect(const std::string& prefix, TensorList<S>& params) const {
    params.push_back({prefix + ".weight", weight});
    params.push_back({prefix + ".bias", bias});
}

template <typename S>
BatchNorm<S>::BatchNorm(int channels, int slots_)
    : gamma(Tensor<S>::parameter({channels}, Vec<S>::Ones(channels))),
      beta(Tensor<S>::parameter({channels}, Vec<S>::Zero(channels))),
      running_mean(Tensor<S>::zeros(slots_ > 1 ? Shape{slots_, channels} : Shape{channels})),
      running_var(Tensor<S>::full(slots_ > 1 ? Shape{slots_, channels} : Shape{channels}, S(1))),
      slots(slots_) {
    if (slots < 1) throw ShapeError("batch_norm: slots must be >= 1");
}

template <typename S>
Tensor<S> BatchNorm<S>::operator()(const Tensor<S>& x, bool training, int slot) const {
    auto& mean = running_mean.node()->value;
    auto& var = running_var.node()->value;
    if (slots == 1 && slot == 0) return batch_norm(x, gamma, beta, mean, var, training, momentum, eps);
    if (slot < 0 || slot >= slots)
        throw ShapeError("batch_norm: slot " + std::to_string(slot) + " outside [0, " + std::to_string(slots) + ")");
    const Eigen::Index C = gamma.size();
    Vec<S> m = mean.segment(slot * C, C), v = var.segment(slot * C, C);
    auto y = batch_norm(x, gamma, beta, m, v, training, momentum, eps);
    mean.segment(slot * C, C) = m;
    var.segment(slot * C, C) = v;
    return y;
}

template <typename S>
void BatchNorm<S>::collect(const std::string& prefix, TensorList<S>& params) const {
    params.push_back({prefix + ".gamma", gamma});
    params.push_back({prefix + ".beta", beta});
}

template <typename S>
void BatchNorm<S>::collect_buffers(const std::string& prefix, TensorList<S>& buffers) const {
    buffers.push_back({prefix + ".running_mean", running_mean});
    buffers.push_back({prefix + ".running_var", running_var});
}

template <typename S>
MultiHeadSelfAttention<S>::MultiHeadSelfAttention(int dim, int heads_, SplitMix64& rng)
    : query(dim, dim, rng), key(dim, dim, rng), value(dim, dim, rng), out(dim, dim, rng), heads(heads_) {
    if (heads < 1 || dim % heads != 0)
        throw ShapeError("mhsa: feature dim " + std::to_string(dim) + " not divisible by " +
                         std::to_string(heads) + " heads");
}

template <typename S>
Tensor<S> MultiHeadSelfAttention<S>::operator()(const Tensor<S>& x) const {
    if (x.rank() != 3) throw ShapeError("mhsa: expected N x T x D, got " + shape_str(x.shape()));
    const int N = x.dim(0), T = x.dim(1), D = x.dim(2);
    if (D % heads != 0)
        throw ShapeError("mhsa: feature dim " + std::to_string(D) + " not divisible by " +
                         std::to_string(heads) + " heads");
    const int dh = D / heads;
    const Tensor<S> flat = reshape(x, {N * T, D});
    // (N*T) x D  ->  (N*heads) x T x dh
    auto split_heads = [&](const Tensor<S>& t) {
        return reshape(permute(reshape(t, {N, T, heads, dh}), {0, 2, 1, 3}), {N * heads, T, dh});
    };
    const Tensor<S> q = split_heads(query(flat));
    const Tensor<S> k = split_heads(key(flat));
    const Tensor<S> v = split_heads(value(flat));
    const Tensor<S> scores = scale(bmm(q, permute(k, {0, 2, 1})), S(1) / std::sqrt(static_cast<S>(dh)));
    const Tensor<S> attn = softmax(scores, 2);
    const Tensor<S> ctx = bmm(attn, v);
    const Tensor<S> merged = reshape(permute(reshape(ctx, {N, heads, T, dh}), {0, 2, 1, 3}), {N * T, D});
    return reshape(out(merged), {N, T, D});
}

template <typename S>
void MultiHeadSelfAttention<S>::collect(const std::string& prefix, TensorList<S>& params) const {
    query.collect(prefix + ".query", params);
    key.collect(prefix + ".key", params);
    value.collect(prefix + ".value", params);
    out.collect(prefix + ".out", params);
}

template <typename S>
Tensor<S> lif_step(LifState<S>& state, const Tensor<S>& x, S surrogate_width) {
    Tensor<S> v;
    if (!state.started() || state.alpha == S(0)) {
        v = x;
    } else {
        if (state.v.shape() != x.shape())
            throw ShapeError("lif_step: input " + shape_str(x.shape()) + " vs state " + shape_str(state.v.shape()));
        // 1 - P_prev
        const Tensor<S> keep = add_scalar(scale(state.p, S(-1)), S(1));
        v = add(scale(mul(state.v, keep), state.alpha), x);
    }
    Tensor<S> p = spike(v, state.theta, surrogate_width);
    state.v = v;
    state.p = p;
    return p;
}

#define DVSNET_INSTANTIATE_LAYERS(S)                                                  \
    template Vec<S> kaiming_uniform<S>(Eigen::Index, int, SplitMix64&);              \
    template struct Conv2d<S>;                                                        \
    template struct Linear<S>;                                                        \
    template struct BatchNorm<S>;                                                     \
    template struct MultiHeadSelfAttention<S>;                                        \
    template Tensor<S> lif_step(LifState<S>&, const Tensor<S>&, S);

DVSNET_INSTANTIATE_LAYERS(float)
DVSNET_INSTANTIATE_LAYERS(double)

}  // namespace dvsnet::nn
