#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "dvsnet/error.hpp"
#include "dvsnet/gradcheck_suite.hpp"
#include "dvsnet/nn/adam.hpp"
#include "dvsnet/nn/checkpoint.hpp"
#include "dvsnet/nn/gradcheck.hpp"
#include "dvsnet/nn/layers.hpp"

using namespace dvsnet;
using namespace dvsnet::nn;
using T = Tensor<double>;

namespace {

Vec<double> randn(SplitMix64& rng, Eigen::Index n) {
    Vec<double> v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
}

T rand_param(SplitMix64& rng, const Shape& s) { return T::parameter(s, randn(rng, numel(s))); }

// Direct nested-loop cross-correlation.
Vec<double> naive_conv(const T& x, const T& w, const T& b, int stride, int pad) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), K = w.dim(0), k = w.dim(2);
    const int Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
    Vec<double> out = Vec<double>::Zero(N * K * Ho * Wo);
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < K; ++o)
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j) {
                    double acc = b.defined() ? b[o] : 0.0;
                    for (int c = 0; c < C; ++c)
                        for (int u = 0; u < k; ++u)
                            for (int v = 0; v < k; ++v) {
                                const int y = i * stride + u - pad, xx = j * stride + v - pad;
                                if (y < 0 || y >= H || xx < 0 || xx >= W) continue;
                                acc += x[((n * C + c) * H + y) * W + xx] * w[((o * C + c) * k + u) * k + v];
                            }
                    out[((n * K + o) * Ho + i) * Wo + j] = acc;
                }
    return out;
}

}  // namespace

TEST_CASE("tensor construction checks sizes") {
    CHECK_THROWS_AS(T::from({2, 3}, Vec<double>::Zero(5)), ShapeError);
    const auto z = T::zeros({2, 3});
    CHECK(z.size() == 6);
    CHECK(z.value().isZero());
    const auto c = T::full({4}, 2.5);
    CHECK(c.value().sum() == 10.0);
}

TEST_CASE("conv2d identity and impulse") {
    SplitMix64 rng(1);
    const auto x = T::from({1, 3, 4, 5}, randn(rng, 60));
    Vec<double> eye = Vec<double>::Zero(9);
    for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1;
    const auto y = conv2d(x, T::from({3, 3, 1, 1}, eye), T{}, 1, 0);
    CHECK(y.shape() == x.shape());
    CHECK(y.value() == x.value());

    Vec<double> impulse = Vec<double>::Zero(25);
    impulse[12] = 1;
    const auto p = conv2d(T::from({1, 1, 5, 5}, impulse), T::full({1, 1, 3, 3}, 1.0), T{}, 1, 1);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            const bool inside = std::abs(i - 2) <= 1 && std::abs(j - 2) <= 1;
            CHECK(p[i * 5 + j] == (inside ? 1.0 : 0.0));
        }
}

TEST_CASE("conv2d matches direct loops") {
    SplitMix64 rng(2);
    for (int stride : {1, 2}) {
        const auto x = T::from({2, 3, 7, 6}, randn(rng, 2 * 3 * 7 * 6));
        const auto w = T::from({4, 3, 3, 3}, randn(rng, 4 * 27));
        const auto b = T::from({4}, randn(rng, 4));
        const auto y = conv2d(x, w, b, stride, 1);
        const auto ref = naive_conv(x, w, b, stride, 1);
        REQUIRE(y.size() == ref.size());
        CHECK((y.value() - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("conv2d shape errors name the dimensions") {
    const auto x = T::zeros({1, 3, 5, 5});
    try {
        conv2d(x, T::zeros({2, 4, 3, 3}), T{}, 1, 1);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("3 channels") != std::string::npos);
    }
    CHECK_THROWS_AS(conv2d(x, T::zeros({2, 3, 2, 2}), T{}, 1, 1), ShapeError);
}

TEST_CASE("conv2d gradient matches finite differences") {
    SplitMix64 rng(3);
    auto x = rand_param(rng, {2, 3, 5, 5});
    auto w = rand_param(rng, {2, 3, 3, 3});
    auto b = rand_param(rng, {2});
    const auto r = check_gradients([&] { return sum(mul(conv2d(x, w, b, 1, 1), conv2d(x, w, b, 1, 1))); }, {x, w, b});
    CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("softmax properties") {
    const auto u = softmax(T::full({2, 5}, 3.0), 1);
    for (Eigen::Index i = 0; i < u.size(); ++i) CHECK(u[i] == doctest::Approx(0.2).epsilon(1e-15));

    SplitMix64 rng(4);
    const auto logits = T::from({3, 6}, randn(rng, 18) * 10);
    const auto p = softmax(logits, 1);
    const auto q = softmax(add_scalar(logits, 123.0), 1);
    for (int r = 0; r < 3; ++r) CHECK(std::abs(p.value().segment(r * 6, 6).sum() - 1) < 1e-6);
    CHECK((p.value() - q.value()).cwiseAbs().maxCoeff() < 1e-6);

    const auto big = softmax(T::from({1, 2}, Vec<double>{{1000.0, 0.0}}), 1);
    CHECK(std::isfinite(big[0]));
    CHECK(big[0] == doctest::Approx(1.0));
}

TEST_CASE("adaptive pooling") {
    const auto c = adaptive_avg_pool2d(T::full({2, 3, 5, 7}, 0.75), 1, 1);
    CHECK(c.shape() == Shape{2, 3, 1, 1});
    for (Eigen::Index i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(0.75));

    // 5 -> 2 bins: [0, 3) and [2, 5) under floor/ceil edges.
    Vec<double> v(5);
    v << 1, 2, 3, 4, 5;
    const auto p = adaptive_avg_pool2d(T::from({1, 1, 1, 5}, v), 1, 2);
    CHECK(p[0] == doctest::Approx(2.0));
    CHECK(p[1] == doctest::Approx(4.0));
}

TEST_CASE("batch norm statistics") {
    SplitMix64 rng(5);
    const int N = 4, C = 3, H = 2, W = 3;
    const auto x = T::from({N, C, H, W}, randn(rng, N * C * H * W) * 2 + Vec<double>::Constant(N * C * H * W, 1.5));
    Vec<double> rm = Vec<double>::Zero(C), rv = Vec<double>::Ones(C);
    const auto y = batch_norm(x, T::full({C}, 1.0), T::full({C}, 0.0), rm, rv, true, 0.1, 1e-5);
    const int M = N * H * W;
    for (int c = 0; c < C; ++c) {
        double m = 0, m2 = 0, xm = 0, xm2 = 0;
        for (int n = 0; n < N; ++n)
            for (int i = 0; i < H * W; ++i) {
                const int idx = (n * C + c) * H * W + i;
                m += y[idx];
                m2 += y[idx] * y[idx];
                xm += x[idx];
                xm2 += x[idx] * x[idx];
            }
        m /= M;
        CHECK(std::abs(m) < 1e-12);
        CHECK(m2 / M == doctest::Approx(1.0).epsilon(1e-4));
        xm /= M;
        const double unbiased = (xm2 / M - xm * xm) * M / (M - 1);
        CHECK(rm[c] == doctest::Approx(0.1 * xm));
        CHECK(rv[c] == doctest::Approx(0.9 + 0.1 * unbiased));
    }
    // Evaluation mode uses the stored estimates.
    Vec<double> em = Vec<double>::Constant(C, 2.0), ev = Vec<double>::Constant(C, 4.0);
    const auto e = batch_norm(T::full({1, C, 1, 1}, 4.0), T::full({C}, 1.0), T::full({C}, 0.5), em, ev, false, 0.1, 0.0);
    for (int c = 0; c < C; ++c) CHECK(e[c] == doctest::Approx(1.5));
    CHECK(em[0] == 2.0);
}

TEST_CASE("batch norm gradient matches finite differences") {
    SplitMix64 rng(6);
    auto x = rand_param(rng, {3, 2, 2, 3});
    auto g = rand_param(rng, {2});
    auto b = rand_param(rng, {2});
    auto coeff = T::from({3, 2, 2, 3}, randn(rng, 36));
    Vec<double> rm = Vec<double>::Zero(2), rv = Vec<double>::Ones(2);
    const auto r = check_gradients(
        [&] { return sum(mul(batch_norm(x, g, b, rm, rv, true, 0.1, 1e-5), coeff)); }, {x, g, b});
    CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("batch norm slots keep separate statistics") {
    BatchNorm<double> bn(2, 3);
    CHECK(bn.running_mean.shape() == Shape{3, 2});
    const auto x = T::full({2, 2, 1, 1}, 0.0);
    Vec<double> v(4);
    v << 1, 2, 3, 4;
    bn(T::from({2, 2, 1, 1}, v), true, 1);
    CHECK(bn.running_mean.value().segment(0, 2).isZero());
    CHECK(bn.running_mean.value()[2] == doctest::Approx(0.1 * 2));
    CHECK(bn.running_mean.value()[3] == doctest::Approx(0.1 * 3));
    CHECK(bn.running_mean.value().segment(4, 2).isZero());
    CHECK_THROWS_AS(bn(x, false, 3), ShapeError);
}

TEST_CASE("linear and bmm match loops") {
    SplitMix64 rng(7);
    const auto x = T::from({3, 4}, randn(rng, 12));
    const auto w = T::from({2, 4}, randn(rng, 8));
    const auto b = T::from({2}, randn(rng, 2));
    const auto y = linear(x, w, b);
    for (int m = 0; m < 3; ++m)
        for (int o = 0; o < 2; ++o) {
            double acc = b[o];
            for (int f = 0; f < 4; ++f) acc += x[m * 4 + f] * w[o * 4 + f];
            CHECK(y[m * 2 + o] == doctest::Approx(acc));
        }
    CHECK_THROWS_AS(linear(x, T::zeros({2, 5}), T{}), ShapeError);

    const auto a = T::from({2, 2, 3}, randn(rng, 12));
    const auto c = T::from({2, 3, 2}, randn(rng, 12));
    const auto p = bmm(a, c);
    for (int bi = 0; bi < 2; ++bi)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                double acc = 0;
                for (int k = 0; k < 3; ++k) acc += a[(bi * 2 + i) * 3 + k] * c[(bi * 3 + k) * 2 + j];
                CHECK(p[(bi * 2 + i) * 2 + j] == doctest::Approx(acc));
            }
}

TEST_CASE("permute and concat move elements") {
    Vec<double> v(6);
    v << 0, 1, 2, 3, 4, 5;
    const auto x = T::from({2, 3}, v);
    const auto t = permute(x, {1, 0});
    CHECK(t.shape() == Shape{3, 2});
    CHECK(t[1] == 3);
    CHECK(t[2] == 1);
    const auto c = concat<double>({x, x}, 1);
    CHECK(c.shape() == Shape{2, 6});
    CHECK(c[3] == 0);
    CHECK(c[6] == 3);
    CHECK_THROWS_AS(concat<double>({x, T::zeros({3, 3})}, 1), ShapeError);
    CHECK_THROWS_AS(reshape(x, {4}), ShapeError);
}

TEST_CASE("mhsa single token is the projected value") {
    SplitMix64 rng(8);
    MultiHeadSelfAttention<double> mh(8, 2, rng);
    const auto x = T::from({3, 1, 8}, randn(rng, 24));
    const auto y = mh(x);
    const auto flat = reshape(x, {3, 8});
    const auto ref = mh.out(mh.value(flat));
    CHECK((y.value() - ref.value()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mhsa is permutation equivariant") {
    SplitMix64 rng(9);
    MultiHeadSelfAttention<double> mh(6, 3, rng);
    const int Tn = 5, D = 6;
    const auto x = T::from({1, Tn, D}, randn(rng, Tn * D));
    const int perm[Tn] = {3, 0, 4, 1, 2};
    Vec<double> xp(Tn * D);
    for (int t = 0; t < Tn; ++t) xp.segment(t * D, D) = x.value().segment(perm[t] * D, D);
    const auto y = mh(x);
    const auto yp = mh(T::from({1, Tn, D}, xp));
    for (int t = 0; t < Tn; ++t)
        CHECK((yp.value().segment(t * D, D) - y.value().segment(perm[t] * D, D)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mhsa rejects indivisible heads") {
    SplitMix64 rng(10);
    CHECK_THROWS_AS(MultiHeadSelfAttention<double>(6, 4, rng), ShapeError);
}

TEST_CASE("mhsa gradient matches finite differences") {
    SplitMix64 rng(11);
    MultiHeadSelfAttention<double> mh(4, 2, rng);
    auto x = rand_param(rng, {2, 3, 4});
    auto coeff = T::from({2, 3, 4}, randn(rng, 24));
    TensorList<double> params;
    mh.collect("mh", params);
    std::vector<T> inputs{x};
    for (auto& p : params) inputs.push_back(p.tensor);
    const auto r = check_gradients([&] { return sum(mul(mh(x), coeff)); }, inputs);
    CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("lif worked traces") {
    LifState<double> s(0.3, 0.2);
    auto p1 = lif_step(s, T::full({1}, 0.5));
    CHECK(s.v[0] == 0.5);
    CHECK(p1[0] == 1.0);
    auto p2 = lif_step(s, T::full({1}, 0.0));
    CHECK(s.v[0] == 0.0);
    CHECK(p2[0] == 0.0);

    LifState<double> q(0.3, 0.2);
    CHECK(lif_step(q, T::full({1}, 0.2))[0] == 0.0);
    CHECK(lif_step(q, T::full({1}, 0.2))[0] == 0.0);
    CHECK(q.v[0] == doctest::Approx(0.24).epsilon(1e-15));
    CHECK_THROWS_AS(lif_step(q, T::full({2}, 0.2)), ShapeError);
}

TEST_CASE("lif reset property and binary spikes") {
    SplitMix64 rng(12);
    const int n = 10000;
    LifState<double> s(0.3, 0.2);
    s.v = T::from({n}, randn(rng, n));
    Vec<double> prev(n);
    for (int i = 0; i < n; ++i) prev[i] = rng.below(2);
    s.p = T::from({n}, prev);
    const Vec<double> x = randn(rng, n);
    const Vec<double> v_before = s.v.value();
    const auto p = lif_step(s, T::from({n}, x));
    for (int i = 0; i < n; ++i) {
        CHECK((p[i] == 0.0 || p[i] == 1.0));
        const double expect = prev[i] == 1 ? x[i] : 0.2 * v_before[i] + x[i];
        if (prev[i] == 1) CHECK(s.v[i] == x[i]);
        else CHECK(s.v[i] == doctest::Approx(expect));
        CHECK(p[i] == (s.v[i] >= 0.3 ? 1.0 : 0.0));
    }
}

TEST_CASE("lif chain with no leak and huge threshold is silent") {
    SplitMix64 rng(13);
    std::vector<LifState<double>> layers(3, LifState<double>(1e300, 0.0));
    for (int t = 0; t < 5; ++t) {
        auto x = T::from({20}, randn(rng, 20) * 100);
        for (auto& l : layers) x = lif_step(l, x);
        CHECK(x.value().isZero());
    }
}

TEST_CASE("surrogate gradient window") {
    CHECK(surrogate_grad(0.0, 0.5) == 2.0);
    CHECK(surrogate_grad(0.5, 0.5) == 0.0);
    CHECK(surrogate_grad(0.4, 1.0) == 1.0);
    CHECK(surrogate_grad(-0.6, 1.0) == 0.0);

    Vec<double> v(3);
    v << 0.3, 0.75, 2.0;
    auto x = T::parameter({3}, v);
    auto s = spike(x, 0.3, 1.0);
    CHECK(s[0] == 1.0);
    CHECK(s[1] == 1.0);
    sum(s).backward();
    CHECK(x.grad()[0] == 1.0);
    CHECK(x.grad()[1] == 1.0);
    CHECK(x.grad()[2] == 0.0);
    CHECK_THROWS_AS(spike(x, 0.3, 0.0), DomainError);
}

TEST_CASE("adam leaves parameters alone without gradient or decay") {
    AdamConfig cfg;
    cfg.weight_decay = 0;
    Adam<double> adam(cfg);
    SplitMix64 rng(14);
    auto w = rand_param(rng, {5});
    const Vec<double> before = w.value();
    TensorList<double> params{{"w", w}};
    w.grad() = Vec<double>::Zero(5);
    adam.step(params);
    CHECK(w.value() == before);
}

TEST_CASE("adam first step moves by lr") {
    AdamConfig cfg;
    cfg.weight_decay = 0;
    cfg.lr = 0.01;
    Adam<double> adam(cfg);
    auto w = T::parameter({2}, Vec<double>{{1.0, -2.0}});
    TensorList<double> params{{"w", w}};
    w.grad() = Vec<double>{{3.7, -0.02}};
    adam.step(params);
    CHECK(w[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(w[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
}

TEST_CASE("adam weight decay is decoupled") {
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    Adam<double> adam(cfg);
    auto w = T::parameter({1}, Vec<double>::Constant(1, 2.0));
    TensorList<double> params{{"w", w}};
    w.grad() = Vec<double>::Zero(1);
    adam.step(params);
    CHECK(w[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("adam descends a quadratic bowl") {
    AdamConfig cfg;
    cfg.lr = 0.05;
    cfg.weight_decay = 0;
    Adam<double> adam(cfg);
    auto w = T::parameter({1}, Vec<double>::Constant(1, 1.0));
    TensorList<double> params{{"w", w}};
    for (int i = 0; i < 200; ++i) {
        zero_grad(params);
        mul(w, w).backward();
        adam.step(params);
    }
    CHECK(std::abs(w[0]) < 1e-2);
}

TEST_CASE("adam names a non-finite gradient") {
    Adam<double> adam;
    auto a = T::parameter({1}, Vec<double>::Zero(1));
    auto b = T::parameter({2}, Vec<double>::Zero(2));
    TensorList<double> params{{"layer.a", a}, {"layer.b", b}};
    a.grad() = Vec<double>::Zero(1);
    b.grad() = Vec<double>{{0.0, std::numeric_limits<double>::quiet_NaN()}};
    try {
        adam.step(params);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("layer.b") != std::string::npos);
    }
}

TEST_CASE("gradient clipping") {
    auto a = T::parameter({2}, Vec<double>::Zero(2));
    auto b = T::parameter({1}, Vec<double>::Zero(1));
    TensorList<double> params{{"a", a}, {"b", b}};
    a.grad() = Vec<double>{{3.0, 0.0}};
    b.grad() = Vec<double>::Constant(1, 4.0);
    CHECK(clip_grad_norm(params, 2.5) == doctest::Approx(5.0));
    CHECK(a.grad()[0] == doctest::Approx(1.5));
    CHECK(b.grad()[0] == doctest::Approx(2.0));
    CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(2.5));
    CHECK(b.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("no-grad scope records nothing") {
    auto w = T::parameter({2}, Vec<double>::Ones(2));
    {
        NoGradGuard guard;
        CHECK_FALSE(grad_enabled());
        const auto y = mul(w, w);
        CHECK(y.node()->parents.empty());
    }
    CHECK(grad_enabled());
}

TEST_CASE("CKPT1 round trip is bit exact") {
    SplitMix64 rng(15);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<CheckpointRecord> recs;
        const int count = 1 + static_cast<int>(rng.below(5));
        for (int i = 0; i < count; ++i) {
            CheckpointRecord r;
            r.name = "t" + std::to_string(trial) + "." + std::to_string(i);
            const int rank = static_cast<int>(rng.below(4));
            std::int64_t n = 1;
            for (int d = 0; d < rank; ++d) {
                r.shape.push_back(1 + static_cast<int>(rng.below(4)));
                n *= r.shape.back();
            }
            for (std::int64_t k = 0; k < n; ++k) {
                std::uint32_t bits = static_cast<std::uint32_t>(rng());
                float f;
                std::memcpy(&f, &bits, 4);
                if (!std::isfinite(f)) f = 0.5f;
                r.data.push_back(f);
            }
            recs.push_back(r);
        }
        const auto bytes = encode_records(recs);
        const auto back = parse_checkpoint(bytes);
        REQUIRE(back.size() == recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(back[i].name == recs[i].name);
            CHECK(back[i].shape == recs[i].shape);
            CHECK(std::memcmp(back[i].data.data(), recs[i].data.data(), recs[i].data.size() * 4) == 0);
        }
        CHECK(encode_records(back) == bytes);
    }
}

TEST_CASE("CKPT1 layout") {
    std::vector<CheckpointRecord> recs{{"ab", {2}, {1.0f, -2.0f}}};
    const auto b = encode_records(recs);
    CHECK(std::string(b.begin(), b.begin() + 5) == "CKPT1");
    CHECK(b.size() == 5 + 4 + 2 + 2 + 1 + 4 + 8);
    CHECK(b[5] == 1);
    CHECK(b[9] == 2);
    CHECK(b[13] == 1);
    CHECK(b[14] == 2);
}

TEST_CASE("CKPT1 load checks names and shapes") {
    auto a = Tensor<float>::parameter({2, 2}, Vec<float>::Constant(4, 1.5f));
    auto b = Tensor<float>::parameter({3}, Vec<float>::Constant(3, -1.0f));
    const auto bytes = encode_checkpoint(TensorList<float>{{"a", a}, {"b", b}});

    auto a2 = Tensor<float>::zeros({2, 2});
    auto b2 = Tensor<float>::zeros({3});
    TensorList<float> ok{{"b", b2}, {"a", a2}};
    decode_checkpoint(bytes, ok);
    CHECK(a2.value() == a.value());
    CHECK(b2.value() == b.value());

    auto wrong = Tensor<float>::zeros({4});
    TensorList<float> bad_shape{{"a", wrong}, {"b", b2}};
    try {
        decode_checkpoint(bytes, bad_shape);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("tensor a") != std::string::npos);
    }
    TensorList<float> missing{{"a", a2}, {"b", b2}, {"c", b2}};
    CHECK_THROWS_AS(decode_checkpoint(bytes, missing), DataError);
    TensorList<float> extra{{"a", a2}};
    CHECK_THROWS_AS(decode_checkpoint(bytes, extra), DataError);

    auto broken = bytes;
    broken[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(broken, ok), DataError);
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    CHECK_THROWS_AS(decode_checkpoint(cut, ok), DataError);
}

TEST_CASE("CKPT1 file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "dvsnet_test_nn.ckpt";
    SplitMix64 rng(16);
    auto w = Tensor<float>::parameter({3, 2}, randn(rng, 6).cast<float>());
    save_checkpoint(path, TensorList<float>{{"w", w}});
    auto w2 = Tensor<float>::zeros({3, 2});
    TensorList<float> t{{"w", w2}};
    load_checkpoint(path, t);
    CHECK(w2.value() == w.value());
    std::filesystem::remove(path);
}

TEST_CASE("every primitive passes the gradient suite") {
    const auto results = run_gradcheck_suite(1);
    CHECK(results.size() >= 20);
    for (const auto& r : results) {
        INFO(r.name);
        CHECK(r.passed());
    }
}
