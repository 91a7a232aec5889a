#include "dvsnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dvsnet/counter_rng.hpp"
#include "dvsnet/error.hpp"
#include "dvsnet/events.hpp"

namespace dvsnet {

void SynthParams::validate() const {
    if (classes < 1 || classes > 7) throw DomainError("synth: classes must be in [1, 7]");
    if (train_per_class < 1 || test_per_class < 0) throw DomainError("synth: sequence counts must be positive");
    if (length_frames < 2) throw DomainError("synth: length_frames must be >= 2");
    if (width < 8 || height < 8) throw DomainError("synth: frames must be at least 8x8");
    if (!(fps > 0)) throw DomainError("synth: fps must be positive");
    if (!(pixel_noise >= 0)) throw DomainError("synth: pixel_noise must be >= 0");
}

const std::vector<std::string>& synth_class_names() {
    static const std::vector<std::string> names{"static",     "blink_slow", "blink_fast", "drift_left",
                                                "drift_right", "pulse",      "drift_down"};
    return names;
}

namespace {

constexpr double kTau = 2 * std::numbers::pi;

// Blink periods are chosen so that both divide the default sequence length,
// keeping cyclic clip reads seamless.
constexpr double kSlowPeriod = 48.0;
constexpr double kFastPeriod = 6.0;
constexpr double kPulsePeriod = 12.0;
constexpr double kDriftSpeed = 0.5;  // px per frame

struct Pose {
    double cx, cy;
    double lid;    // 0 open, 1 closed
    double pupil;  // radius scale
};

Pose pose_at(int label, double t, double phase, double cx0, double cy0, int w, int h) {
    Pose p{cx0, cy0, 0.0, 1.0};
    auto wave = [&](double period) { return 0.5 * (1 - std::cos(kTau * (t / period + phase))); };
    auto wrap = [](double v, double span) { return v - span * std::floor(v / span); };
    switch (label) {
        case 0: break;
        case 1: p.lid = wave(kSlowPeriod); break;
        case 2: p.lid = wave(kFastPeriod); break;
        case 3: p.cx = wrap(cx0 - kDriftSpeed * t + phase * w, w); break;
        case 4: p.cx = wrap(cx0 + kDriftSpeed * t + phase * w, w); break;
        case 5: p.pupil = 0.6 + 0.8 * wave(kPulsePeriod); break;
        case 6: p.cy = wrap(cy0 + kDriftSpeed * t + phase * h, h); break;
        default: throw DomainError("synth: label out of range");
    }
    return p;
}

// Anti-aliased by 4x4 supersampling.
double coverage(double px, double py, const Pose& pose, double rx, double ry, double r_pupil, int w, int h,
                double bg, double sclera, double iris) {
    double acc = 0;
    for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx) {
            const double x = px + (sx + 0.5) / 4, y = py + (sy + 0.5) / 4;
            // Torus distance so drifting blobs wrap around the border.
            double dx = std::fabs(x - pose.cx), dy = std::fabs(y - pose.cy);
            dx = std::min(dx, w - dx);
            dy = std::min(dy, h - dy);
            const double e = (dx / rx) * (dx / rx) + (dy / ry) * (dy / ry);
            double v = bg;
            const double open_half = ry * (1 - pose.lid);
            if (e <= 1 && dy <= open_half) {
                const double r = std::hypot(dx, dy);
                v = r <= r_pupil * pose.pupil ? iris : sclera;
            }
            acc += v;
        }
    return acc / 16;
}

}  // namespace

std::vector<LumaFrame> synth_sequence(int label, const SynthParams& params, std::uint64_t seq_seed) {
    params.validate();
    if (label < 0 || label >= params.classes) throw DomainError("synth: label out of range");
    SplitMix64 rng(seq_seed);
    const int w = params.width, h = params.height;
    const double phase = rng.unit();
    const double cx0 = w * (0.35 + 0.3 * rng.unit()), cy0 = h * (0.35 + 0.3 * rng.unit());
    const double rx = w * (0.22 + 0.06 * rng.unit()), ry = rx * 0.55;
    const double r_pupil = ry * 0.75;
    const double bg = 150 + 50 * rng.unit(), sclera = 215 + 30 * rng.unit(), iris = 25 + 30 * rng.unit();

    std::vector<LumaFrame> frames;
    frames.reserve(static_cast<std::size_t>(params.length_frames));
    for (int k = 0; k < params.length_frames; ++k) {
        const Pose pose = pose_at(label, k, phase, cx0, cy0, w, h);
        LumaFrame f;
        f.data.resize(h, w);
        f.t_us = std::llround(k * 1e6 / params.fps);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double v = coverage(x, y, pose, rx, ry, r_pupil, w, h, bg, sclera, iris) +
                                 params.pixel_noise * rng.normal();
                f.data(y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        frames.push_back(std::move(f));
    }
    return frames;
}

void synth_dataset(const std::filesystem::path& root, const SynthParams& params) {
    namespace fs = std::filesystem;
    params.validate();
    if (fs::exists(root) && !fs::is_empty(root)) throw DataError("target directory " + root.string() + " is not empty");
    fs::create_directories(root);
    {
        std::string labels;
        for (const auto& n : synth_class_names()) labels += n + "\n";
        write_file_bytes(root / "labels.txt", std::span(reinterpret_cast<const std::uint8_t*>(labels.data()), labels.size()));
    }
    std::uint64_t counter = 0;
    for (const std::string split : {"train", "test"}) {
        const int per_class = split == "train" ? params.train_per_class : params.test_per_class;
        for (int c = 0; c < params.classes; ++c)
            for (int i = 0; i < per_class; ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "c%d_%04d", c, i);
                const fs::path dir = root / split / name;
                fs::create_directories(dir / "frames");
                const auto frames = synth_sequence(c, params, split_seed(params.seed, counter++));
                for (std::size_t k = 0; k < frames.size(); ++k) {
                    char fname[32];
                    std::snprintf(fname, sizeof fname, "%06zu.pgm", k);
                    write_file_bytes(dir / "frames" / fname, encode_pgm(frames[k]));
                }
                SequenceMeta meta;
                meta.fps = params.fps;
                meta.label = c;
                write_meta(dir / "meta.txt", meta);
            }
    }
}

}  // namespace dvsnet
