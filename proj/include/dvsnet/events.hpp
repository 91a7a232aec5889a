#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dvsnet/counter_rng.hpp"
#include "dvsnet/ingest.hpp"
#include "dvsnet/v2e.hpp"

namespace dvsnet {

// ---------------------------------------------------------------------------
// Stream persistence

enum class StreamFormat { Csv, Evt1 };

/// EVT1 layout: "EVT1", u32 width, u32 height, u64 count, then per event
/// u64 t_us, u16 x, u16 y, u8 polarity, u8 pad. All little-endian.
std::vector<std::uint8_t> encode_evt1(const EventStream& stream);
EventStream decode_evt1(std::span<const std::uint8_t> bytes);

/// CSV with header `t_us,x,y,p`, p = 1 for ON. CSV has no dimensions, so
/// they are passed in on read.
std::string encode_csv(const EventStream& stream);
EventStream decode_csv(std::string_view text, int width, int height);

void write_stream(const std::filesystem::path& path, const EventStream& stream, StreamFormat format);
EventStream read_stream(const std::filesystem::path& path, StreamFormat format, int width = 0,
                        int height = 0);

/// Throws DataError if events are out of order or out of bounds.
void check_stream(const EventStream& stream);

// ---------------------------------------------------------------------------
// Aggregation

/// Two-channel event histogram over (t_start_us, t_end_us].
struct EventFrame {
    Plane<std::int32_t> on_counts;
    Plane<std::int32_t> off_counts;
    std::int64_t t_start_us = 0;
    std::int64_t t_end_us = 0;

    int width() const { return static_cast<int>(on_counts.cols()); }
    int height() const { return static_cast<int>(on_counts.rows()); }
};

EventFrame aggregate(const EventStream& stream, std::int64_t t_start_us, std::int64_t t_end_us,
                     int width, int height);

// ---------------------------------------------------------------------------
// Clip sampling

/// x used event frames with y skipped frames between neighbours.
struct ClipSpec {
    int x = 4;
    int y = 3;
    double fps = 60.0;

    void validate() const;
    std::string name() const;  ///< "E4-S3"
};

/// Parses "E4-S3" (also accepts "E4S3" and lower case).
ClipSpec parse_clip_spec(std::string_view text);

/// x + (x - 1) * y.
int clip_duration_frames(const ClipSpec& spec);
inline double clip_duration_seconds(const ClipSpec& spec) {
    return clip_duration_frames(spec) / spec.fps;
}

/// One recorded sequence with its event stream.
struct Sequence {
    std::string id;
    std::vector<LumaFrame> frames;
    EventStream events;
    int label = 0;
    double fps = 60.0;

    int length() const { return static_cast<int>(frames.size()); }
    /// Event window that ends at frame `index`.
    std::pair<std::int64_t, std::int64_t> frame_window(int index) const;
};

struct Clip {
    std::vector<EventFrame> event_frames;
    LumaFrame first_gray;
    LumaFrame last_gray;
    LumaFrame second_gray;             ///< frame start + 1, for the I1/I2 input variant
    std::vector<LumaFrame> used_gray;  ///< grayscale frame for each used index
    std::vector<int> frame_indices;    ///< used source frames (already wrapped)
    int start = 0;
    int label = 0;
};

/// Uniform start in [0, L - T]; 0 when the sequence is shorter than T.
int draw_clip_start(int sequence_length, const ClipSpec& spec, SplitMix64& rng);

/// Source frame indices used by a clip starting at `start`, read cyclically.
std::vector<int> clip_frame_indices(int sequence_length, const ClipSpec& spec, int start);

Clip sample_clip(const Sequence& seq, const ClipSpec& spec, int start);
Clip sample_clip(const Sequence& seq, const ClipSpec& spec, SplitMix64& rng);

// ---------------------------------------------------------------------------
// Dataset layout

inline constexpr int kNumClasses = 7;

struct Dataset {
    std::vector<std::string> class_names;
    std::vector<Sequence> sequences;
};

std::vector<std::string> read_labels(const std::filesystem::path& root);

/// Loads root/<split>/<seq>/ directories in name order. Uses events.evt1
/// when present, otherwise runs the simulator (and caches the result when
/// `write_cache` is set).
Dataset load_split(const std::filesystem::path& root, const std::string& split,
                   const V2eParams& v2e, int threads, bool write_cache = false);

}  // namespace dvsnet
