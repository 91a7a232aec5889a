#include "dvsnet/gradcheck_suite.hpp"

#include <cmath>
#include <functional>

#include "dvsnet/adsn.hpp"
#include "dvsnet/counter_rng.hpp"
#include "dvsnet/nn/layers.hpp"
#include "dvsnet/nn/ops.hpp"

namespace dvsnet {

using T = nn::Tensor<double>;
namespace ops = nn;

namespace {

struct Gen {
    SplitMix64 rng;
    // Keeps values at least `gap` away from zero so kinks are never straddled.
    T normal(const nn::Shape& s, double scale = 1.0, double gap = 0.0) {
        nn::Vec<double> v(nn::numel(s));
        for (auto& x : v) {
            x = scale * rng.normal();
            if (gap > 0 && std::abs(x) < gap) x = x < 0 ? x - gap : x + gap;
        }
        return T::from(s, v);
    }
    T uniform(const nn::Shape& s, double lo, double hi) {
        nn::Vec<double> v(nn::numel(s));
        for (auto& x : v) x = lo + (hi - lo) * rng.unit();
        return T::from(s, v);
    }
};

// Projects an output onto fixed random weights so every output element
// contributes a distinct gradient.
T project(const T& out, const T& weights) { return ops::sum(ops::mul(out, weights)); }

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed) {
    Gen g{SplitMix64(seed)};
    std::vector<GradCheckCase> cases;
    auto check = [&](const std::string& name, const std::function<T()>& f, const std::vector<T>& ins,
                     double threshold = 1e-6) {
        cases.push_back({name, nn::check_gradients(f, ins), threshold});
    };
    auto unary = [&](const std::string& name, const T& x, const nn::Shape& out_shape,
                     const std::function<T(const T&)>& op) {
        const T w = g.normal(out_shape);
        check(name, [=] { return project(op(x), w); }, {x});
    };

    {
        const T a = g.normal({2, 3, 4}), b = g.normal({2, 3, 4}), w = g.normal({2, 3, 4});
        check("add", [=] { return project(ops::add(a, b), w); }, {a, b});
        check("sub", [=] { return project(ops::sub(a, b), w); }, {a, b});
        check("mul", [=] { return project(ops::mul(a, b), w); }, {a, b});
    }
    unary("add_scalar", g.normal({5, 3}), {5, 3}, [](const T& x) { return ops::add_scalar(x, 0.7); });
    unary("scale", g.normal({5, 3}), {5, 3}, [](const T& x) { return ops::scale(x, -1.3); });
    unary("relu", g.normal({4, 6}, 1.0, 0.05), {4, 6}, [](const T& x) { return ops::relu(x); });
    unary("sigmoid", g.normal({4, 6}), {4, 6}, [](const T& x) { return ops::sigmoid(x); });
    unary("log_clamped", g.uniform({4, 6}, 0.2, 2.0), {4, 6},
          [](const T& x) { return ops::log_clamped(x, 1e-12); });
    unary("sum", g.normal({3, 4}), {1}, [](const T& x) { return ops::sum(x); });
    unary("mean", g.normal({3, 4}), {1}, [](const T& x) { return ops::mean(x); });
    unary("reshape", g.normal({2, 6}), {3, 4}, [](const T& x) { return ops::reshape(x, {3, 4}); });
    unary("permute", g.normal({2, 3, 4}), {4, 2, 3}, [](const T& x) { return ops::permute(x, {2, 0, 1}); });
    {
        const T a = g.normal({2, 3, 4}), b = g.normal({2, 2, 4}), w = g.normal({2, 5, 4});
        check("concat", [=] { return project(ops::concat(std::vector<T>{a, b}, 1), w); }, {a, b});
    }
    {
        const T x = g.normal({2, 3, 7, 6}), k = g.normal({4, 3, 3, 3}, 0.5), b = g.normal({4});
        const T w1 = g.normal({2, 4, 7, 6}), w2 = g.normal({2, 4, 4, 3});
        check("conv2d", [=] { return project(ops::conv2d(x, k, b, 1, 1), w1); }, {x, k, b});
        check("conv2d_stride2", [=] { return project(ops::conv2d(x, k, b, 2, 1), w2); }, {x, k, b});
    }
    {
        const T x = g.normal({5, 4}), w = g.normal({3, 4}), b = g.normal({3}), p = g.normal({5, 3});
        check("linear", [=] { return project(ops::linear(x, w, b), p); }, {x, w, b});
    }
    {
        const T a = g.normal({2, 3, 4}), b = g.normal({2, 4, 5}), w = g.normal({2, 3, 5});
        check("bmm", [=] { return project(ops::bmm(a, b), w); }, {a, b});
    }
    unary("softmax", g.normal({3, 7}), {3, 7}, [](const T& x) { return ops::softmax(x, 1); });
    unary("softmax_axis0", g.normal({4, 2, 3}), {4, 2, 3}, [](const T& x) { return ops::softmax(x, 0); });
    unary("adaptive_avg_pool2d", g.normal({2, 3, 7, 5}), {2, 3, 3, 2},
          [](const T& x) { return ops::adaptive_avg_pool2d(x, 3, 2); });
    {
        const T x = g.normal({2, 3, 4, 4}), s = g.normal({2, 3, 1, 1}), w = g.normal({2, 3, 4, 4});
        check("channel_scale", [=] { return project(ops::channel_scale(x, s), w); }, {x, s});
    }
    {
        const T x = g.normal({3, 2, 3, 3}), gamma = g.normal({2}), beta = g.normal({2}), w = g.normal({3, 2, 3, 3});
        auto rm = std::make_shared<nn::Vec<double>>(nn::Vec<double>::Zero(2));
        auto rv = std::make_shared<nn::Vec<double>>(nn::Vec<double>::Ones(2));
        check("batch_norm_train",
              [=] { return project(ops::batch_norm(x, gamma, beta, *rm, *rv, true, 0.1, 1e-5), w); },
              {x, gamma, beta});
        *rm = g.normal({2}).value();
        *rv = g.uniform({2}, 0.5, 2.0).value();
        check("batch_norm_eval",
              [=] { return project(ops::batch_norm(x, gamma, beta, *rm, *rv, false, 0.1, 1e-5), w); },
              {x, gamma, beta});
    }
    {
        const T logits = g.normal({4, 7});
        const std::vector<int> labels{0, 3, 6, 3};
        check("pick_log_loss", [=] { return cross_entropy_loss(ops::softmax(logits, 1), labels); }, {logits});
    }
    {
        SplitMix64 init(seed + 1);
        const nn::MultiHeadSelfAttention<double> mhsa(8, 2, init);
        const T x = g.normal({2, 5, 8}), w = g.normal({2, 5, 8});
        std::vector<T> ins{x};
        nn::TensorList<double> params;
        mhsa.collect("mhsa", params);
        for (const auto& p : params) ins.push_back(p.tensor);
        check("mhsa", [=] { return project(mhsa(x), w); }, ins, 1e-5);
    }
    {
        SplitMix64 init(seed + 2);
        const MultiScaleAttention<double> msa(2, 2, {3, 5}, init);
        const T x = g.normal({1, 2, 8, 8}), w = g.normal({1, 2, 8, 8});
        std::vector<T> ins{x};
        nn::TensorList<double> params;
        msa.collect("msa", params);
        for (const auto& p : params) ins.push_back(p.tensor);
        check("multiscale_attention", [=] { return project(msa(x, false), w); }, ins, 1e-5);
    }
    {
        // Non-spiking composition of the network: extractor convolutions,
        // guide attention, token attention, head and loss.
        AdsnConfig c;
        c.input_height = 16;
        c.input_width = 16;
        c.base_channels = 2;
        c.attention_scales = {3, 5};
        c.heads = 2;
        c.n_steps = 1;
        c.head_hidden = 6;
        c.seed = seed;
        const Adsn<double> net(c);
        const T gray = g.uniform({2, 2, 16, 16}, 0, 1), ev = g.uniform({2, 2, 16, 16}, 0, 1);
        const std::vector<int> labels{1, 5};
        auto path = [=] {
            const T ls = net.spatial_reduce(gray);
            const T fs = net.spatial_conv2(
                ops::relu(net.spatial_bn(net.spatial_conv1(ops::add(net.spatial_msa(ls, false), ls)), false)));
            const T fe = net.event_conv2(net.event_conv1(net.event_msa(ev, false)));
            const T guided = net.guide_attention(fs, fe, false);
            const int F = c.feature_channels(), th = c.token_height(), tw = c.token_width();
            const T tokens =
                ops::permute(ops::reshape(ops::adaptive_avg_pool2d(guided, th, tw), {2, F, th * tw}), {0, 2, 1});
            const T att = ops::reshape(ops::permute(net.attention(tokens), {0, 2, 1}), {2, F * th * tw});
            const T logits = net.head2(ops::sigmoid(net.head1(att)));
            return cross_entropy_loss(ops::softmax(logits, 1), labels);
        };
        std::vector<T> ins{gray, ev};
        for (const auto& p : net.parameters()) ins.push_back(p.tensor);
        check("network_loss_path", path, ins);
    }
    return cases;
}

}  // namespace dvsnet
