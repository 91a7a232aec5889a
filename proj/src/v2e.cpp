#include "dvsnet/v2e.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <thread>

#include "dvsnet/counter_rng.hpp"
#include "dvsnet/error.hpp"

namespace dvsnet {
namespace {

constexpr std::uint64_t kNoiseLaneEvent = 2;
constexpr std::uint64_t kNoiseLaneTime = 3;

RowRange all_rows(const PixelArrayState& state) { return {0, state.height()}; }

void check_rows(const PixelArrayState& state, RowRange rows) {
    if (rows.begin < 0 || rows.end > state.height() || rows.begin > rows.end)
        throw DomainError("row range out of bounds");
}

void check_dt(double dt_s) {
    if (!(dt_s >= 0.0)) throw DomainError("time step must be non-negative, got " + std::to_string(dt_s));
}

template <typename Fn>
void for_row_bands(int height, int threads, Fn&& fn) {
    threads = std::clamp(threads, 1, std::max(1, height));
    if (threads == 1) {
        fn(0, RowRange{0, height});
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(threads);
    for (int w = 0; w < threads; ++w) {
        const RowRange rows{height * w / threads, height * (w + 1) / threads};
        workers.emplace_back([&fn, w, rows] { fn(w, rows); });
    }
    for (auto& t : workers) t.join();
}

}  // namespace

void V2eParams::validate() const {
    if (!(theta_on > 0)) throw DomainError("theta_on must be > 0");
    if (!(theta_off > 0)) throw DomainError("theta_off must be > 0");
    if (!(sigma_theta >= 0)) throw DomainError("sigma_theta must be >= 0");
    if (!(f3db_max > 0)) throw DomainError("f3db_max must be > 0");
    if (!(bw_floor > 0 && bw_floor <= 1)) throw DomainError("bw_floor must be in (0, 1]");
    if (!(leak_rate >= 0)) throw DomainError("leak_rate must be >= 0");
    if (!(noise_rate >= 0)) throw DomainError("noise_rate must be >= 0");
    if (!(noise_bright_factor > 0 && noise_bright_factor < 1))
        throw DomainError("noise_bright_factor must be in (0, 1)");
}

PixelArrayState init_state(const LogFrame& first, const V2eParams& params) {
    params.validate();
    if (first.data.size() == 0) throw DomainError("init_state: zero-sized frame");
    if (!first.data.isFinite().all()) throw DomainError("init_state: non-finite log intensity");

    const int h = first.height(), w = first.width();
    PixelArrayState s;
    s.l_mem = first.data;
    s.l_lp = first.data;
    s.theta_on.resize(h, w);
    s.theta_off.resize(h, w);
    s.leak_accum = Plane<double>::Zero(h, w);
    s.rng_key.resize(h, w);
    for (Eigen::Index i = 0; i < s.l_mem.size(); ++i) {
        const std::uint64_t key = split_seed(params.seed, static_cast<std::uint64_t>(i));
        s.rng_key.data()[i] = key;
        s.theta_on.data()[i] =
            std::max(kMinThreshold, params.theta_on + params.sigma_theta * counter_normal(key, 0));
        s.theta_off.data()[i] =
            std::max(kMinThreshold, params.theta_off + params.sigma_theta * counter_normal(key, 1));
    }
    return s;
}

double bandwidth(double y_norm, const V2eParams& params) {
    return params.f3db_max * (params.bw_floor + (1.0 - params.bw_floor) * y_norm);
}

void lowpass_step(PixelArrayState& state, const Plane<double>& target_log,
                  const Plane<double>& luma_norm, double dt_s, const V2eParams& params,
                  RowRange rows) {
    check_dt(dt_s);
    check_rows(state, rows);
    const double two_pi_dt = 2.0 * std::numbers::pi * dt_s;
    for (int y = rows.begin; y < rows.end; ++y) {
        for (int x = 0; x < state.width(); ++x) {
            const double wdt = two_pi_dt * bandwidth(luma_norm(y, x), params);
            const double eps =
                params.filter == FilterKind::Euler ? std::min(1.0, wdt) : 1.0 - std::exp(-wdt);
            double& lp = state.l_lp(y, x);
            lp = eps >= 1.0 ? target_log(y, x) : lp + eps * (target_log(y, x) - lp);
        }
    }
}

void lowpass_step(PixelArrayState& state, const LogFrame& target, const Plane<double>& luma_norm,
                  double dt_s, const V2eParams& params) {
    if (target.height() != state.height() || target.width() != state.width() ||
        luma_norm.rows() != state.height() || luma_norm.cols() != state.width())
        throw DomainError("lowpass_step: frame size does not match pixel array");
    lowpass_step(state, target.data, luma_norm, dt_s, params, all_rows(state));
}

std::vector<DvsEvent> emit_events(PixelArrayState& state, std::int64_t t0_us, std::int64_t t1_us,
                                  RowRange rows) {
    check_rows(state, rows);
    if (t1_us <= t0_us) throw DomainError("emit_events: empty interval");
    const std::int64_t span = t1_us - t0_us;
    std::vector<DvsEvent> out;
    for (int y = rows.begin; y < rows.end; ++y) {
        for (int x = 0; x < state.width(); ++x) {
            const double delta = state.l_lp(y, x) - state.l_mem(y, x);
            long n = 0;
            Polarity pol = Polarity::On;
            double theta = 0;
            if (delta > 0) {
                theta = state.theta_on(y, x);
                n = static_cast<long>(std::floor(delta / theta));
            } else if (delta < 0) {
                theta = state.theta_off(y, x);
                n = static_cast<long>(std::floor(-delta / theta));
                pol = Polarity::Off;
            }
            if (n == 0) continue;
            state.l_mem(y, x) += (pol == Polarity::On ? 1.0 : -1.0) * static_cast<double>(n) * theta;
            for (long k = 1; k <= n; ++k) {
                const std::int64_t t = std::max(t0_us + 1, t0_us + (k * span) / n);
                out.push_back({t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), pol});
            }
        }
    }
    return out;
}

std::vector<DvsEvent> emit_events(PixelArrayState& state, std::int64_t t0_us, std::int64_t t1_us) {
    return emit_events(state, t0_us, t1_us, all_rows(state));
}

void leak_step(PixelArrayState& state, double dt_s, const V2eParams& params, RowRange rows) {
    check_dt(dt_s);
    check_rows(state, rows);
    const double decrement = params.leak_rate * params.theta_on * dt_s;
    if (decrement == 0.0) return;
    const int n = rows.end - rows.begin;
    state.l_mem.middleRows(rows.begin, n) -= decrement;
    state.leak_accum.middleRows(rows.begin, n) += decrement;
}

void leak_step(PixelArrayState& state, double dt_s, const V2eParams& params) {
    leak_step(state, dt_s, params, all_rows(state));
}

double noise_rate(double y_norm, const V2eParams& params) {
    return params.noise_rate * (1.0 - (1.0 - params.noise_bright_factor) * y_norm);
}

std::vector<DvsEvent> shot_noise_step(PixelArrayState& state, const Plane<double>& luma_norm,
                                      double dt_s, std::int64_t t0_us, std::int64_t t1_us,
                                      const V2eParams& params, RowRange rows) {
    check_dt(dt_s);
    check_rows(state, rows);
    // The darkest pixel has the highest rate; reject the step up front.
    if (params.noise_rate * dt_s > 1.0)
        throw DomainError("shot noise probability " + std::to_string(params.noise_rate * dt_s) +
                          " exceeds 1; use a smaller time step");
    std::vector<DvsEvent> out;
    if (dt_s == 0.0 || params.noise_rate == 0.0) return out;
    const std::int64_t span = std::max<std::int64_t>(1, t1_us - t0_us);
    for (int y = rows.begin; y < rows.end; ++y) {
        for (int x = 0; x < state.width(); ++x) {
            // Each polarity gets half the rate so ON + OFF together fire at r.
            const double p = 0.5 * noise_rate(luma_norm(y, x), params) * dt_s;
            const std::uint64_t key = state.rng_key(y, x);
            const double u = to_unit(counter_hash(key, state.step, kNoiseLaneEvent));
            Polarity pol;
            if (u < p) pol = Polarity::On;
            else if (u > 1.0 - p) pol = Polarity::Off;
            else continue;
            const double ut = to_unit(counter_hash(key, state.step, kNoiseLaneTime));
            const std::int64_t t =
                std::min(t1_us, t0_us + 1 + static_cast<std::int64_t>(ut * static_cast<double>(span)));
            out.push_back({t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), pol});
            state.l_mem(y, x) = state.l_lp(y, x);
        }
    }
    return out;
}

std::vector<DvsEvent> shot_noise_step(PixelArrayState& state, const Plane<double>& luma_norm,
                                      double dt_s, std::int64_t t0_us, std::int64_t t1_us,
                                      const V2eParams& params) {
    return shot_noise_step(state, luma_norm, dt_s, t0_us, t1_us, params, all_rows(state));
}

V2eSimulator::V2eSimulator(V2eParams params, int threads)
    : params_(params), threads_(std::max(1, threads)) {
    params_.validate();
}

void V2eSimulator::reset(const LumaFrame& first) {
    if (first.width() > 65535 || first.height() > 65535)
        throw DomainError("frame too large for 16-bit event coordinates");
    state_ = init_state(to_log_frame(first), params_);
    last_t_us_ = first.t_us;
    initialized_ = true;
}

std::vector<DvsEvent> V2eSimulator::step(const LumaFrame& next) {
    if (!initialized_) throw DomainError("V2eSimulator::step before reset");
    if (next.width() != state_.width() || next.height() != state_.height())
        throw DomainError("frame size does not match pixel array");
    if (next.t_us <= last_t_us_)
        throw DomainError("frame timestamps must strictly increase (" + std::to_string(last_t_us_) +
                          " -> " + std::to_string(next.t_us) + ")");
    const std::int64_t t0 = last_t_us_, t1 = next.t_us;
    const double dt = static_cast<double>(t1 - t0) * 1e-6;
    if (params_.noise_rate * dt > 1.0)
        throw DomainError("shot noise probability exceeds 1; use a smaller time step");
    const LogFrame log = to_log_frame(next);
    const Plane<double> luma = normalized_luma(next);

    std::vector<std::vector<DvsEvent>> bands(static_cast<std::size_t>(threads_));
    for_row_bands(state_.height(), threads_, [&](int w, RowRange rows) {
        lowpass_step(state_, log.data, luma, dt, params_, rows);
        leak_step(state_, dt, params_, rows);
        auto events = emit_events(state_, t0, t1, rows);
        auto noise = shot_noise_step(state_, luma, dt, t0, t1, params_, rows);
        events.insert(events.end(), noise.begin(), noise.end());
        bands[static_cast<std::size_t>(w)] = std::move(events);
    });
    ++state_.step;
    last_t_us_ = t1;

    std::vector<DvsEvent> out;
    for (auto& b : bands) out.insert(out.end(), b.begin(), b.end());
    std::sort(out.begin(), out.end(), event_less);
    return out;
}

EventStream convert_video(std::span<const LumaFrame> frames, const V2eParams& params, int threads) {
    if (frames.size() < 2) throw DomainError("convert_video needs at least two frames");
    V2eSimulator sim(params, threads);
    sim.reset(frames.front());
    EventStream stream;
    stream.width = frames.front().width();
    stream.height = frames.front().height();
    for (std::size_t k = 1; k < frames.size(); ++k) {
        auto events = sim.step(frames[k]);
        stream.events.insert(stream.events.end(), events.begin(), events.end());
    }
    return stream;
}

}  // namespace dvsnet
