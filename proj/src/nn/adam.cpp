#include "dvsnet/nn/adam.hpp"

#include <cmath>

#include "dvsnet/error.hpp"

namespace dvsnet::nn {

template <typename S>
void Adam<S>::step(TensorList<S>& params) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Vec<S>::Zero(p.tensor.size()));
            v_.push_back(Vec<S>::Zero(p.tensor.size()));
        }
    }
    if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (m_[i].size() != params[i].tensor.size())
            throw ShapeError("adam: moment shape mismatch for " + params[i].name);
        if (params[i].tensor.has_grad() && !params[i].tensor.grad().allFinite())
            throw NumericError("adam: non-finite gradient in parameter " + params[i].name);
    }
    ++steps_;
    const double lr = config_.lr, b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& t = params[i].tensor;
        auto& w = t.value();
        if (config_.weight_decay != 0.0) w *= static_cast<S>(1.0 - lr * config_.weight_decay);
        const Vec<S> g = t.has_grad() ? t.grad() : Vec<S>::Zero(w.size());
        m_[i] = static_cast<S>(b1) * m_[i] + static_cast<S>(1.0 - b1) * g;
        v_[i] = static_cast<S>(b2) * v_[i] + static_cast<S>(1.0 - b2) * g.cwiseProduct(g);
        for (Eigen::Index j = 0; j < w.size(); ++j) {
            const double mhat = m_[i][j] / c1;
            const double vhat = v_[i][j] / c2;
            w[j] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + config_.eps));
        }
    }
}

template <typename S>
double clip_grad_norm(TensorList<S>& params, double max_norm) {
    double sq = 0;
    for (const auto& p : params)
        if (p.tensor.has_grad()) sq += p.tensor.grad().template cast<double>().squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        const S f = static_cast<S>(max_norm / norm);
        for (auto& p : params)
            if (p.tensor.has_grad()) p.tensor.grad() *= f;
    }
    return norm;
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm(TensorList<float>&, double);
template double clip_grad_norm(TensorList<double>&, double);

}  // namespace dvsnet::nn
