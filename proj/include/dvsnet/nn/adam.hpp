#pragma once

#include <vector>

#include "dvsnet/nn/layers.hpp"

namespace dvsnet::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;  ///< decoupled: p -= lr * wd * p before the Adam update
};

/// Adam with bias correction and decoupled weight decay. Moment buffers
/// are matched to parameters by position, so the list passed to step()
/// must keep the same order across calls.
template <typename S>
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    /// Updates every parameter from its accumulated gradient. Parameters
    /// without a gradient are treated as having a zero gradient. Throws
    /// NumericError naming the first parameter with a non-finite gradient.
    void step(TensorList<S>& params);

    long step_count() const { return steps_; }
    const AdamConfig& config() const { return config_; }
    AdamConfig& config() { return config_; }
    const std::vector<Vec<S>>& first_moments() const { return m_; }
    const std::vector<Vec<S>>& second_moments() const { return v_; }

private:
    AdamConfig config_;
    long steps_ = 0;
    std::vector<Vec<S>> m_;
    std::vector<Vec<S>> v_;
};

/// Scales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename S>
double clip_grad_norm(TensorList<S>& params, double max_norm);

template <typename S>
void zero_grad(TensorList<S>& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace dvsnet::nn
