#pragma once

// Single-frame logistic regression: the static-appearance baseline used to
// show that a class pair is separable only through its dynamics.

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "dvsnet/counter_rng.hpp"
#include "dvsnet/events.hpp"

namespace ref {

struct FrameSample {
    Eigen::VectorXd x;
    int y = 0;  // 0 or 1
};

inline Eigen::VectorXd frame_features(const dvsnet::LumaFrame& f) {
    Eigen::VectorXd v(f.data.size() + 1);
    for (Eigen::Index i = 0; i < f.data.size(); ++i) v[i] = f.data.data()[i] / 255.0;
    v[f.data.size()] = 1.0;
    return v;
}

// Random single frames drawn from the sequences of classes a (y=0) and b (y=1).
inline std::vector<FrameSample> frame_samples(const dvsnet::Dataset& d, int a, int b, int per_sequence,
                                              std::uint64_t seed) {
    dvsnet::SplitMix64 rng(seed);
    std::vector<FrameSample> out;
    for (const auto& s : d.sequences) {
        if (s.label != a && s.label != b) continue;
        for (int k = 0; k < per_sequence; ++k) {
            const auto& f = s.frames[rng.below(s.frames.size())];
            out.push_back({frame_features(f), s.label == b ? 1 : 0});
        }
    }
    return out;
}

// Full-batch gradient descent with L2 regularization.
inline Eigen::VectorXd fit_logistic(const std::vector<FrameSample>& train, int iters = 2000, double lr = 0.5,
                                    double l2 = 1e-3) {
    const Eigen::Index d = train.front().x.size();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXd g = l2 * w;
        for (const auto& s : train) {
            const double p = 1.0 / (1.0 + std::exp(-w.dot(s.x)));
            g += (p - s.y) * s.x / static_cast<double>(train.size());
        }
        w -= lr * g;
    }
    return w;
}

inline double logistic_accuracy(const Eigen::VectorXd& w, const std::vector<FrameSample>& test) {
    int ok = 0;
    for (const auto& s : test) ok += (w.dot(s.x) > 0 ? 1 : 0) == s.y;
    return static_cast<double>(ok) / static_cast<double>(test.size());
}

}  // namespace ref
