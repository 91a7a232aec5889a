#include "dvsnet/events.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "dvsnet/error.hpp"

namespace dvsnet {
namespace {

constexpr char kEvt1Magic[4] = {'E', 'V', 'T', '1'};
constexpr std::size_t kEvt1HeaderBytes = 20;
constexpr std::size_t kEvt1RecordBytes = 14;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t pos) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    return static_cast<T>(v);
}

template <typename T>
T parse_field(std::string_view field, int lineno, const char* name) {
    T value{};
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw DataError("CSV line " + std::to_string(lineno) + ": bad " + name + " field '" +
                        std::string(field) + "'");
    return value;
}

}  // namespace

void check_stream(const EventStream& stream) {
    for (std::size_t i = 0; i < stream.events.size(); ++i) {
        const auto& e = stream.events[i];
        if (e.x >= stream.width || e.y >= stream.height)
            throw DataError("event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," +
                            std::to_string(e.y) + ") outside " + std::to_string(stream.width) + "x" +
                            std::to_string(stream.height));
        if (e.polarity != Polarity::On && e.polarity != Polarity::Off)
            throw DataError("event " + std::to_string(i) + " has invalid polarity");
        if (i > 0 && event_less(e, stream.events[i - 1]))
            throw DataError("event stream not sorted at index " + std::to_string(i));
    }
}

std::vector<std::uint8_t> encode_evt1(const EventStream& stream) {
    check_stream(stream);
    std::vector<std::uint8_t> out;
    out.reserve(kEvt1HeaderBytes + kEvt1RecordBytes * stream.events.size());
    out.insert(out.end(), std::begin(kEvt1Magic), std::end(kEvt1Magic));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(stream.width));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(stream.height));
    put_le<std::uint64_t>(out, stream.events.size());
    for (const auto& e : stream.events) {
        put_le<std::uint64_t>(out, static_cast<std::uint64_t>(e.t_us));
        put_le<std::uint16_t>(out, e.x);
        put_le<std::uint16_t>(out, e.y);
        out.push_back(static_cast<std::uint8_t>(e.polarity));
        out.push_back(0);
    }
    return out;
}

EventStream decode_evt1(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || !std::equal(std::begin(kEvt1Magic), std::end(kEvt1Magic), bytes.begin()))
        throw DecodeError("EVT1: bad magic", 0);
    if (bytes.size() < kEvt1HeaderBytes) throw DecodeError("EVT1: truncated header", bytes.size());
    EventStream s;
    s.width = static_cast<int>(get_le<std::uint32_t>(bytes, 4));
    s.height = static_cast<int>(get_le<std::uint32_t>(bytes, 8));
    const auto count = get_le<std::uint64_t>(bytes, 12);
    const std::size_t complete = (bytes.size() - kEvt1HeaderBytes) / kEvt1RecordBytes;
    if (complete < count)
        throw DecodeError("EVT1: truncated record (header declares " + std::to_string(count) + " events)",
                          kEvt1HeaderBytes + complete * kEvt1RecordBytes);
    s.events.resize(count);
    std::size_t pos = kEvt1HeaderBytes;
    for (auto& e : s.events) {
        e.t_us = static_cast<std::int64_t>(get_le<std::uint64_t>(bytes, pos));
        e.x = get_le<std::uint16_t>(bytes, pos + 8);
        e.y = get_le<std::uint16_t>(bytes, pos + 10);
        const std::uint8_t p = bytes[pos + 12];
        if (p > 1) throw DecodeError("EVT1: invalid polarity byte", pos + 12);
        e.polarity = static_cast<Polarity>(p);
        pos += kEvt1RecordBytes;
    }
    check_stream(s);
    return s;
}

std::string encode_csv(const EventStream& stream) {
    check_stream(stream);
    std::string out = "t_us,x,y,p\n";
    out.reserve(out.size() + 20 * stream.events.size());
    for (const auto& e : stream.events) {
        out += std::to_string(e.t_us);
        out += ',';
        out += std::to_string(e.x);
        out += ',';
        out += std::to_string(e.y);
        out += ',';
        out += e.polarity == Polarity::On ? '1' : '0';
        out += '\n';
    }
    return out;
}

EventStream decode_csv(std::string_view text, int width, int height) {
    EventStream s;
    s.width = width;
    s.height = height;
    int lineno = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (lineno == 1 && line.starts_with("t_us")) continue;
        std::string_view fields[4];
        std::size_t start = 0;
        for (int f = 0; f < 4; ++f) {
            const auto comma = f < 3 ? line.find(',', start) : line.size();
            if (comma == std::string_view::npos)
                throw DataError("CSV line " + std::to_string(lineno) + ": expected 4 fields");
            fields[f] = line.substr(start, comma - start);
            start = comma + 1;
        }
        if (fields[3].find(',') != std::string_view::npos)
            throw DataError("CSV line " + std::to_string(lineno) + ": expected 4 fields");
        DvsEvent e;
        e.t_us = parse_field<std::int64_t>(fields[0], lineno, "t_us");
        e.x = parse_field<std::uint16_t>(fields[1], lineno, "x");
        e.y = parse_field<std::uint16_t>(fields[2], lineno, "y");
        const int p = parse_field<int>(fields[3], lineno, "p");
        if (p != 0 && p != 1) throw DataError("CSV line " + std::to_string(lineno) + ": p must be 0 or 1");
        e.polarity = p == 1 ? Polarity::On : Polarity::Off;
        s.events.push_back(e);
    }
    check_stream(s);
    return s;
}

void write_stream(const std::filesystem::path& path, const EventStream& stream, StreamFormat format) {
    if (format == StreamFormat::Evt1) {
        write_file_bytes(path, encode_evt1(stream));
    } else {
        const auto text = encode_csv(stream);
        write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }
}

EventStream read_stream(const std::filesystem::path& path, StreamFormat format, int width, int height) {
    const auto bytes = read_file_bytes(path);
    if (format == StreamFormat::Evt1) return decode_evt1(bytes);
    return decode_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                      width, height);
}

EventFrame aggregate(const EventStream& stream, std::int64_t t_start_us, std::int64_t t_end_us,
                     int width, int height) {
    if (t_end_us <= t_start_us) throw DomainError("aggregate: t_end must exceed t_start");
    EventFrame f;
    f.on_counts = Plane<std::int32_t>::Zero(height, width);
    f.off_counts = Plane<std::int32_t>::Zero(height, width);
    f.t_start_us = t_start_us;
    f.t_end_us = t_end_us;
    const auto& ev = stream.events;
    // Streams are time-sorted; locate the window by bisection.
    auto first = std::partition_point(ev.begin(), ev.end(),
                                      [&](const DvsEvent& e) { return e.t_us <= t_start_us; });
    for (auto it = first; it != ev.end() && it->t_us <= t_end_us; ++it) {
        if (it->x >= width || it->y >= height)
            throw DataError("aggregate: event at (" + std::to_string(it->x) + "," +
                            std::to_string(it->y) + ") outside " + std::to_string(width) + "x" +
                            std::to_string(height));
        auto& plane = it->polarity == Polarity::On ? f.on_counts : f.off_counts;
        ++plane(it->y, it->x);
    }
    return f;
}

void ClipSpec::validate() const {
    if (x < 1) throw DomainError("clip spec: x must be >= 1");
    if (y < 0) throw DomainError("clip spec: y must be >= 0");
    if (!(fps > 0)) throw DomainError("clip spec: fps must be positive");
}

std::string ClipSpec::name() const { return "E" + std::to_string(x) + "-S" + std::to_string(y); }

ClipSpec parse_clip_spec(std::string_view text) {
    auto fail = [&] { return DomainError("cannot parse protocol '" + std::string(text) + "', expected Ex-Sy"); };
    std::size_t pos = 0;
    auto expect = [&](char c) {
        if (pos >= text.size() || std::toupper(static_cast<unsigned char>(text[pos])) != c) throw fail();
        ++pos;
    };
    auto number = [&] {
        int v = 0;
        const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + text.size(), v);
        if (ec != std::errc()) throw fail();
        pos = static_cast<std::size_t>(ptr - text.data());
        return v;
    };
    ClipSpec spec;
    expect('E');
    spec.x = number();
    if (pos < text.size() && (text[pos] == '-' || text[pos] == '_')) ++pos;
    expect('S');
    spec.y = number();
    if (pos != text.size()) throw fail();
    spec.validate();
    return spec;
}

int clip_duration_frames(const ClipSpec& spec) {
    spec.validate();
    return spec.x + (spec.x - 1) * spec.y;
}

std::pair<std::int64_t, std::int64_t> Sequence::frame_window(int index) const {
    const auto& t = frames[static_cast<std::size_t>(index)].t_us;
    if (index > 0) return {frames[static_cast<std::size_t>(index) - 1].t_us, t};
    return {t - std::llround(1e6 / fps), t};
}

int draw_clip_start(int sequence_length, const ClipSpec& spec, SplitMix64& rng) {
    if (sequence_length < 1) throw DataError("cannot sample from an empty sequence");
    const int span = sequence_length - clip_duration_frames(spec);
    if (span <= 0) return 0;
    return static_cast<int>(rng.below(static_cast<std::uint64_t>(span) + 1));
}

std::vector<int> clip_frame_indices(int sequence_length, const ClipSpec& spec, int start) {
    if (sequence_length < 1) throw DataError("cannot sample from an empty sequence");
    spec.validate();
    std::vector<int> idx(static_cast<std::size_t>(spec.x));
    for (int k = 0; k < spec.x; ++k) idx[static_cast<std::size_t>(k)] = (start + k * (spec.y + 1)) % sequence_length;
    return idx;
}

Clip sample_clip(const Sequence& seq, const ClipSpec& spec, int start) {
    if (seq.frames.empty()) throw DataError("sequence " + seq.id + " has no frames");
    if (start < 0) throw DomainError("clip start must be non-negative");
    const int len = seq.length();
    Clip clip;
    clip.start = start;
    clip.label = seq.label;
    clip.frame_indices = clip_frame_indices(len, spec, start);
    const int w = seq.frames.front().width(), h = seq.frames.front().height();
    for (int i : clip.frame_indices) {
        const auto [t0, t1] = seq.frame_window(i);
        clip.event_frames.push_back(aggregate(seq.events, t0, t1, w, h));
        clip.used_gray.push_back(seq.frames[static_cast<std::size_t>(i)]);
    }
    clip.first_gray = seq.frames[static_cast<std::size_t>(start % len)];
    clip.second_gray = seq.frames[static_cast<std::size_t>((start + 1) % len)];
    clip.last_gray = seq.frames[static_cast<std::size_t>((start + clip_duration_frames(spec) - 1) % len)];
    return clip;
}

Clip sample_clip(const Sequence& seq, const ClipSpec& spec, SplitMix64& rng) {
    return sample_clip(seq, spec, draw_clip_start(seq.length(), spec, rng));
}

std::vector<std::string> read_labels(const std::filesystem::path& root) {
    std::ifstream in(root / "labels.txt");
    if (!in) throw DataError("missing " + (root / "labels.txt").string());
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) names.push_back(line);
    }
    if (names.empty()) throw DataError("labels.txt is empty");
    return names;
}

Dataset load_split(const std::filesystem::path& root, const std::string& split, const V2eParams& v2e,
                   int threads, bool write_cache) {
    Dataset ds;
    ds.class_names = read_labels(root);
    const auto dir = root / split;
    if (!std::filesystem::is_directory(dir)) throw DataError("missing split directory " + dir.string());
    std::vector<std::filesystem::path> seq_dirs;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_directory()) seq_dirs.push_back(entry.path());
    std::sort(seq_dirs.begin(), seq_dirs.end());
    if (seq_dirs.empty()) throw DataError("no sequences under " + dir.string());

    for (const auto& sd : seq_dirs) {
        Sequence seq;
        seq.id = sd.filename().string();
        SequenceMeta meta;
        seq.frames = read_frame_directory(sd, &meta);
        seq.fps = meta.fps;
        seq.label = meta.label;
        if (seq.label < 0 || seq.label >= static_cast<int>(ds.class_names.size()))
            throw DataError(sd.string() + ": label " + std::to_string(seq.label) + " out of range");
        const auto cache = sd / "events.evt1";
        if (std::filesystem::exists(cache)) {
            seq.events = read_stream(cache, StreamFormat::Evt1);
            if (seq.events.width != seq.frames.front().width() || seq.events.height != seq.frames.front().height())
                throw DataError(cache.string() + ": dimensions do not match frames");
        } else if (seq.frames.size() >= 2) {
            seq.events = convert_video(seq.frames, v2e, threads);
            if (write_cache) write_stream(cache, seq.events, StreamFormat::Evt1);
        } else {
            seq.events = {seq.frames.front().width(), seq.frames.front().height(), {}};
        }
        ds.sequences.push_back(std::move(seq));
    }
    return ds;
}

}  // namespace dvsnet
