#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dvsnet/ingest.hpp"

namespace dvsnet {

enum class Polarity : std::uint8_t { Off = 0, On = 1 };

struct DvsEvent {
    std::int64_t t_us = 0;
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    Polarity polarity = Polarity::On;

    friend bool operator==(const DvsEvent&, const DvsEvent&) = default;
};

/// Stream order: time, then row, column, polarity.
inline bool event_less(const DvsEvent& a, const DvsEvent& b) {
    if (a.t_us != b.t_us) return a.t_us < b.t_us;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.polarity < b.polarity;
}

struct EventStream {
    int width = 0;
    int height = 0;
    std::vector<DvsEvent> events;

    friend bool operator==(const EventStream&, const EventStream&) = default;
};

enum class FilterKind { Euler, Exact };

struct V2eParams {
    double theta_on = 0.2;           ///< nominal ON threshold, log units
    double theta_off = 0.2;          ///< nominal OFF threshold, log units
    double sigma_theta = 0.02;       ///< per-pixel threshold mismatch std-dev
    double f3db_max = 300.0;         ///< cutoff at full white, Hz
    double bw_floor = 0.1;           ///< cutoff floor as a fraction of f3db_max
    double leak_rate = 0.1;          ///< Hz
    double noise_rate = 1.0;         ///< shot-noise rate in darkness, Hz
    double noise_bright_factor = 0.25;  ///< rate multiplier at full white
    std::uint64_t seed = 0;
    FilterKind filter = FilterKind::Euler;

    /// Throws DomainError on the first violated constraint.
    void validate() const;
};

inline constexpr double kMinThreshold = 0.01;

struct PixelArrayState {
    Plane<double> l_mem;
    Plane<double> l_lp;
    Plane<double> theta_on;
    Plane<double> theta_off;
    Plane<double> leak_accum;  ///< total leak decrement applied so far
    Plane<std::uint64_t> rng_key;
    std::uint64_t step = 0;    ///< interval counter fed to the noise RNG

    int width() const { return static_cast<int>(l_mem.cols()); }
    int height() const { return static_cast<int>(l_mem.rows()); }
};

/// Half-open row band [begin, end) a worker owns.
struct RowRange {
    int begin = 0;
    int end = 0;
};

PixelArrayState init_state(const LogFrame& first, const V2eParams& params);

/// Cutoff frequency (Hz) for a normalized luma in [0, 1].
double bandwidth(double y_norm, const V2eParams& params);

void lowpass_step(PixelArrayState& state, const Plane<double>& target_log,
                  const Plane<double>& luma_norm, double dt_s, const V2eParams& params,
                  RowRange rows);
void lowpass_step(PixelArrayState& state, const LogFrame& target, const Plane<double>& luma_norm,
                  double dt_s, const V2eParams& params);

/// Quantizes l_lp - l_mem into threshold multiples; events are spread
/// evenly over (t0_us, t1_us]. Output is in per-pixel generation order.
std::vector<DvsEvent> emit_events(PixelArrayState& state, std::int64_t t0_us, std::int64_t t1_us,
                                  RowRange rows);
std::vector<DvsEvent> emit_events(PixelArrayState& state, std::int64_t t0_us, std::int64_t t1_us);

/// Lowers l_mem by leak_rate * theta_on(nominal) * dt. The resulting ON
/// events come out of the next emit_events call.
void leak_step(PixelArrayState& state, double dt_s, const V2eParams& params, RowRange rows);
void leak_step(PixelArrayState& state, double dt_s, const V2eParams& params);

/// Noise rate (Hz) at a normalized luma.
double noise_rate(double y_norm, const V2eParams& params);

/// Draws at most one ON or OFF noise event per pixel for the interval.
/// Does not advance state.step; the caller owns the interval counter.
std::vector<DvsEvent> shot_noise_step(PixelArrayState& state, const Plane<double>& luma_norm,
                                      double dt_s, std::int64_t t0_us, std::int64_t t1_us,
                                      const V2eParams& params, RowRange rows);
std::vector<DvsEvent> shot_noise_step(PixelArrayState& state, const Plane<double>& luma_norm,
                                      double dt_s, std::int64_t t0_us, std::int64_t t1_us,
                                      const V2eParams& params);

/// Streaming front end: feed frames one at a time.
class V2eSimulator {
public:
    explicit V2eSimulator(V2eParams params, int threads = 1);

    void reset(const LumaFrame& first);
    /// Advances to `next` and returns the sorted events of that interval.
    std::vector<DvsEvent> step(const LumaFrame& next);

    const PixelArrayState& state() const { return state_; }
    const V2eParams& params() const { return params_; }

private:
    V2eParams params_;
    int threads_;
    PixelArrayState state_;
    std::int64_t last_t_us_ = 0;
    bool initialized_ = false;
};

/// Runs the whole pixel pipeline over a frame sequence. Output is sorted
/// and identical for any thread count.
EventStream convert_video(std::span<const LumaFrame> frames, const V2eParams& params,
                          int threads = 1);

}  // namespace dvsnet
