#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "dvsnet/error.hpp"
#include "dvsnet/v2e.hpp"
#include "support/v2e_reference.hpp"

using namespace dvsnet;

namespace {

LogFrame constant_log(int w, int h, double v) {
    LogFrame f;
    f.data = Plane<double>::Constant(h, w, v);
    return f;
}

LumaFrame constant_luma(int w, int h, int dn, std::int64_t t_us) {
    LumaFrame f;
    f.data = Plane<std::uint8_t>::Constant(h, w, static_cast<std::uint8_t>(dn));
    f.t_us = t_us;
    return f;
}

// Per-polarity event counts of a static scene simulated for `seconds`.
std::pair<long, long> static_counts(int dn, double seconds, const V2eParams& p, int w = 32, int h = 32) {
    V2eSimulator sim(p);
    sim.reset(constant_luma(w, h, dn, 0));
    const int steps = static_cast<int>(std::lround(seconds * 60));
    long on = 0, off = 0;
    for (int k = 1; k <= steps; ++k)
        for (const auto& e : sim.step(constant_luma(w, h, dn, std::llround(k * 1e6 / 60))))
            (e.polarity == Polarity::On ? on : off)++;
    return {on, off};
}

}  // namespace

TEST_CASE("init_state without mismatch") {
    V2eParams p;
    p.sigma_theta = 0;
    const auto s = init_state(constant_log(4, 3, 2.0), p);
    CHECK((s.l_mem == 2.0).all());
    CHECK((s.l_lp == 2.0).all());
    CHECK((s.theta_on == 0.2).all());
    CHECK((s.theta_off == 0.2).all());
    CHECK((s.leak_accum == 0.0).all());
    CHECK_THROWS_AS(init_state(LogFrame{}, p), DomainError);
}

TEST_CASE("threshold mismatch statistics") {
    V2eParams p;
    p.seed = 99;
    const auto s = init_state(constant_log(100, 100, 1.0), p);
    const double mean = s.theta_on.mean();
    const double sd = std::sqrt((s.theta_on - mean).square().sum() / (s.theta_on.size() - 1));
    CHECK(std::fabs(mean - 0.2) < 0.001);
    CHECK(std::fabs(sd - 0.02) < 0.004);
    CHECK((s.theta_on >= kMinThreshold).all());
    // ON and OFF thresholds are drawn independently.
    CHECK((s.theta_on != s.theta_off).count() > 9900);

    const auto again = init_state(constant_log(100, 100, 1.0), p);
    CHECK((again.theta_on == s.theta_on).all());
    CHECK((again.theta_off == s.theta_off).all());
    CHECK((again.rng_key == s.rng_key).all());
}

TEST_CASE("bandwidth model") {
    V2eParams p;
    CHECK(bandwidth(1.0, p) == doctest::Approx(p.f3db_max));
    CHECK(bandwidth(0.0, p) == doctest::Approx(0.1 * p.f3db_max));
    CHECK(bandwidth(0.5, p) == doctest::Approx(300 * (0.1 + 0.9 * 0.5)));
    CHECK(bandwidth(0.5, p) == doctest::Approx(165.0));
}

TEST_CASE("lowpass step") {
    V2eParams p;
    p.sigma_theta = 0;
    auto s = init_state(constant_log(2, 2, 0.0), p);
    const auto target = constant_log(2, 2, 1.0);
    const Plane<double> half = Plane<double>::Constant(2, 2, 0.5);

    lowpass_step(s, target, half, 0.0, p);
    CHECK((s.l_lp == 0.0).all());

    // 2*pi*165/60 > 1: full tracking.
    lowpass_step(s, target, half, 1.0 / 60, p);
    CHECK((s.l_lp == 1.0).all());

    s = init_state(constant_log(2, 2, 0.0), p);
    const double dt = 1e-4;
    const double eps = 2 * std::numbers::pi * 165.0 * dt;
    lowpass_step(s, target, half, dt, p);
    CHECK(s.l_lp(0, 0) == doctest::Approx(eps).epsilon(1e-12));

    p.filter = FilterKind::Exact;
    s = init_state(constant_log(2, 2, 0.0), p);
    lowpass_step(s, target, half, dt, p);
    CHECK(s.l_lp(1, 1) == doctest::Approx(1 - std::exp(-eps)).epsilon(1e-12));

    CHECK_THROWS_AS(lowpass_step(s, target, half, -1.0, p), DomainError);
}

TEST_CASE("quantization into threshold multiples") {
    V2eParams p;
    p.sigma_theta = 0;
    auto s = init_state(constant_log(1, 1, 0.0), p);

    s.l_lp(0, 0) = 0.5;
    auto ev = emit_events(s, 0, 1000);
    CHECK(ev.size() == 2);
    for (const auto& e : ev) CHECK(e.polarity == Polarity::On);
    CHECK(s.l_mem(0, 0) == doctest::Approx(0.4));

    ev = emit_events(s, 1000, 2000);
    CHECK(ev.empty());
    CHECK(s.l_mem(0, 0) == doctest::Approx(0.4));

    s = init_state(constant_log(1, 1, 0.0), p);
    s.l_lp(0, 0) = -0.45;
    ev = emit_events(s, 0, 1000);
    CHECK(ev.size() == 2);
    for (const auto& e : ev) CHECK(e.polarity == Polarity::Off);
    CHECK(s.l_mem(0, 0) == doctest::Approx(-0.4));

    s = init_state(constant_log(1, 1, 0.0), p);
    s.l_lp(0, 0) = 0.4000001;
    ev = emit_events(s, 0, 1000);
    CHECK(ev.size() == 2);
    // Evenly spaced in (t0, t1].
    CHECK(ev[0].t_us == 500);
    CHECK(ev[1].t_us == 1000);

    CHECK_THROWS_AS(emit_events(s, 10, 10), DomainError);
}

TEST_CASE("leak lowers the memorised level") {
    V2eParams p;
    p.leak_rate = 0;
    auto s = init_state(constant_log(3, 3, 1.0), p);
    leak_step(s, 5.0, p);
    CHECK((s.l_mem == 1.0).all());

    p.leak_rate = 0.1;
    leak_step(s, 2.0, p);
    CHECK((s.l_mem - (1.0 - 0.1 * 0.2 * 2.0)).abs().maxCoeff() < 1e-15);
}

TEST_CASE("leak event rate on a static scene") {
    V2eParams p;
    p.noise_rate = 0;
    p.seed = 5;
    const auto [on, off] = static_counts(128, 100.0, p);
    const double per_pixel = static_cast<double>(on) / (32 * 32);
    CHECK(off == 0);
    CHECK(per_pixel > 10 * 0.8);
    CHECK(per_pixel < 10 * 1.2);
}

TEST_CASE("leak events are decorrelated by threshold mismatch") {
    V2eParams p;
    p.noise_rate = 0;
    p.seed = 11;
    const int w = 10, h = 10;
    // 20 us frames so first-event times resolve well below the phase spread.
    const std::int64_t dt_us = 20;
    V2eSimulator sim(p);
    sim.reset(constant_luma(w, h, 128, 0));
    std::map<int, std::int64_t> first;
    for (std::int64_t t = dt_us; t <= 20'000'000 && static_cast<int>(first.size()) < w * h; t += dt_us)
        for (const auto& e : sim.step(constant_luma(w, h, 128, t))) first.emplace(e.y * w + e.x, e.t_us);
    REQUIRE(static_cast<int>(first.size()) == w * h);
    std::map<std::int64_t, int> by_time;
    for (const auto& [px, t] : first) ++by_time[t];
    int shared = 0;
    for (const auto& [t, n] : by_time)
        if (n > 1) shared += n;
    CHECK(shared <= w * h / 100);
}

TEST_CASE("shot noise") {
    V2eParams p;
    auto s = init_state(constant_log(4, 4, 1.0), p);
    const Plane<double> dark = Plane<double>::Zero(4, 4);
    CHECK(shot_noise_step(s, dark, 0.0, 0, 1, p).empty());
    CHECK(noise_rate(0.0, p) == doctest::Approx(1.0));
    CHECK(noise_rate(1.0, p) == doctest::Approx(0.25));

    p.noise_rate = 100;
    CHECK_THROWS_AS(shot_noise_step(s, dark, 0.02, 0, 20000, p), DomainError);

    // A noise event resets the pixel to its filtered level.
    p.noise_rate = 1000;
    s = init_state(constant_log(4, 4, 1.0), p);
    s.l_lp = Plane<double>::Constant(4, 4, 1.1);
    const auto ev = shot_noise_step(s, dark, 1e-3, 0, 1000, p);
    for (const auto& e : ev) {
        CHECK(s.l_mem(e.y, e.x) == 1.1);
        CHECK(e.t_us >= 1);
        CHECK(e.t_us <= 1000);
    }
}

TEST_CASE("shot noise rate and polarity balance") {
    V2eParams p;
    p.leak_rate = 0;
    p.seed = 3;
    // Luma 0 is darkness, 255 full white.
    const auto [on_d, off_d] = static_counts(0, 50.0, p);
    const double dark = static_cast<double>(on_d + off_d) / (32 * 32 * 50.0);
    CHECK(dark == doctest::Approx(1.0).epsilon(0.2));
    const auto [on_b, off_b] = static_counts(255, 50.0, p);
    const double bright = static_cast<double>(on_b + off_b) / (32 * 32 * 50.0);
    CHECK(bright == doctest::Approx(0.25).epsilon(0.2));
    CHECK(std::fabs(static_cast<double>(on_d - off_d)) / static_cast<double>(on_d + off_d) < 0.05);
}

TEST_CASE("static scene without leak or noise is silent") {
    V2eParams p = ref::noise_off();
    std::vector<LumaFrame> frames;
    for (int k = 0; k < 30; ++k) frames.push_back(constant_luma(6, 5, 90, k * 16667));
    CHECK(convert_video(frames, p).events.empty());
    CHECK_THROWS_AS(convert_video(std::span(frames).first(1), p), DomainError);
}

TEST_CASE("step of one log unit gives five ON events") {
    V2eParams p = ref::noise_off();
    p.sigma_theta = 0;
    p.f3db_max = 1e9;
    // ln(82/30) = 1.0055; floor(1.0055/0.2) = 5.
    const std::vector<LumaFrame> frames{constant_luma(1, 1, 30, 0), constant_luma(1, 1, 82, 16667)};
    const auto s = convert_video(frames, p);
    REQUIRE(s.events.size() == 5);
    for (const auto& e : s.events) CHECK(e.polarity == Polarity::On);
}

TEST_CASE("simulator matches the single-pixel reference") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        auto p = ref::noise_off(seed);
        if (seed % 2 == 0) p.filter = FilterKind::Exact;
        const auto frames = ref::random_video(100 + seed, 8, 8, 50);
        const auto expected = ref::simulate_array(frames, p);
        const auto got = convert_video(frames, p, static_cast<int>(seed % 3) + 1);
        REQUIRE(got.events.size() == expected.size());
        bool same = true;
        for (std::size_t i = 0; i < expected.size(); ++i) {
            const auto &a = got.events[i], &b = expected[i];
            same = same && a.t_us == b.t_us && a.x == b.x && a.y == b.y && a.polarity == b.polarity;
        }
        CHECK(same);
    }
}

TEST_CASE("residual stays below one threshold per pixel") {
    for (std::uint64_t seed : {7u, 8u, 9u}) {
        const auto p = ref::noise_off(seed);
        const auto frames = ref::random_video(seed, 6, 5, 40);
        const auto s = convert_video(frames, p);
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 6; ++x) {
                const auto tr = ref::simulate_pixel(frames, x, y, p);
                long on = 0, off = 0;
                for (const auto& e : s.events)
                    if (e.x == x && e.y == y) (e.polarity == Polarity::On ? on : off)++;
                const double residual = on * tr.theta_on - off * tr.theta_off - (tr.l_lp_final - tr.l_initial);
                CHECK(std::fabs(residual) < std::max(tr.theta_on, tr.theta_off));
            }
    }
}

TEST_CASE("doubling the threshold never adds events") {
    auto p = ref::noise_off(4);
    p.sigma_theta = 0;
    p.f3db_max = 1e9;
    auto p2 = p;
    p2.theta_on *= 2;
    p2.theta_off *= 2;
    const auto frames = ref::random_video(77, 8, 8, 30);
    const auto a = convert_video(frames, p), b = convert_video(frames, p2);
    std::map<int, int> ca, cb;
    for (const auto& e : a.events) ++ca[e.y * 8 + e.x];
    for (const auto& e : b.events) ++cb[e.y * 8 + e.x];
    for (int i = 0; i < 64; ++i) CHECK(cb[i] <= ca[i]);
}

TEST_CASE("streams are sorted, in-interval and thread independent") {
    V2eParams p;
    p.noise_rate = 5;
    p.leak_rate = 1;
    p.seed = 21;
    const auto frames = ref::random_video(5, 16, 13, 20);
    const auto one = convert_video(frames, p, 1);
    const auto four = convert_video(frames, p, 4);
    const auto seven = convert_video(frames, p, 7);
    REQUIRE(one.events.size() == four.events.size());
    REQUIRE(one.events.size() == seven.events.size());
    for (std::size_t i = 0; i < one.events.size(); ++i) {
        CHECK(one.events[i].t_us == four.events[i].t_us);
        CHECK(one.events[i].x == seven.events[i].x);
        CHECK(one.events[i].polarity == four.events[i].polarity);
    }
    CHECK(std::is_sorted(one.events.begin(), one.events.end(), event_less));
    CHECK(one.events.front().t_us > frames.front().t_us);
    CHECK(one.events.back().t_us <= frames.back().t_us);
}

TEST_CASE("seed changes noise but not signal") {
    // With mismatch, leak and shot noise off the seed has nothing to act on.
    auto a = ref::noise_off(1), b = ref::noise_off(2);
    a.sigma_theta = b.sigma_theta = 0;
    const auto frames = ref::random_video(8, 8, 8, 10);
    const auto sa = convert_video(frames, a), sb = convert_video(frames, b);
    REQUIRE(sa.events.size() == sb.events.size());
    for (std::size_t i = 0; i < sa.events.size(); ++i) CHECK(sa.events[i].t_us == sb.events[i].t_us);

    V2eParams n1, n2;
    n1.noise_rate = n2.noise_rate = 20;
    n1.sigma_theta = n2.sigma_theta = 0;
    n1.seed = 1;
    n2.seed = 2;
    const auto s1 = convert_video(frames, n1), s2 = convert_video(frames, n2);
    bool differ = s1.events.size() != s2.events.size();
    for (std::size_t i = 0; !differ && i < s1.events.size(); ++i)
        differ = s1.events[i].t_us != s2.events[i].t_us || s1.events[i].x != s2.events[i].x;
    CHECK(differ);
}

TEST_CASE("parameter validation") {
    V2eParams p;
    p.theta_on = 0;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = {};
    p.bw_floor = 0;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = {};
    p.noise_bright_factor = 1;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = {};
    p.leak_rate = -1;
    CHECK_THROWS_AS(p.validate(), DomainError);
}
