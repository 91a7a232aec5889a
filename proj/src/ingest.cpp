#include "dvsnet/ingest.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "dvsnet/error.hpp"

namespace dvsnet {
namespace {

// Reads one whitespace-delimited unsigned integer from a PNM header,
// skipping '#' comments.
int read_pnm_int(std::span<const std::uint8_t> raw, std::size_t& pos) {
    for (;;) {
        while (pos < raw.size() && std::isspace(raw[pos])) ++pos;
        if (pos < raw.size() && raw[pos] == '#') {
            while (pos < raw.size() && raw[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    if (pos >= raw.size()) throw DecodeError("PGM header truncated", pos);
    if (!std::isdigit(raw[pos])) throw DecodeError("PGM header expects a decimal integer", pos);
    long value = 0;
    while (pos < raw.size() && std::isdigit(raw[pos])) {
        value = value * 10 + (raw[pos] - '0');
        if (value > (1L << 24)) throw DecodeError("PGM header value too large", pos);
        ++pos;
    }
    return static_cast<int>(value);
}

LumaFrame decode_pgm(std::span<const std::uint8_t> raw) {
    if (raw.size() < 2 || raw[0] != 'P' || raw[1] != '5')
        throw DecodeError("PGM magic 'P5' missing", 0);
    std::size_t pos = 2;
    const int width = read_pnm_int(raw, pos);
    const int height = read_pnm_int(raw, pos);
    const std::size_t maxval_pos = pos;
    const int maxval = read_pnm_int(raw, pos);
    if (width <= 0 || height <= 0) throw DecodeError("PGM dimensions must be positive", maxval_pos);
    if (maxval != 255) throw DecodeError("PGM maxval must be 255", maxval_pos);
    if (pos >= raw.size() || !std::isspace(raw[pos]))
        throw DecodeError("PGM header must end with one whitespace byte", pos);
    ++pos;
    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (raw.size() - pos < n) throw DecodeError("PGM payload truncated", raw.size());
    LumaFrame frame;
    frame.data.resize(height, width);
    std::memcpy(frame.data.data(), raw.data() + pos, n);
    return frame;
}

LumaFrame decode_png(std::span<const std::uint8_t> raw) {
    if (raw.size() < 8 || png_sig_cmp(raw.data(), 0, 8) != 0)
        throw DecodeError("PNG signature missing", 0);
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, raw.data(), raw.size()))
        throw DecodeError(std::string("PNG header invalid: ") + image.message, 8);
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw DecodeError("PNG payload invalid: " + msg, raw.size());
    }
    const int width = static_cast<int>(image.width);
    const int height = static_cast<int>(image.height);
    LumaFrame frame;
    frame.data.resize(height, width);
    if (color) {
        for (int i = 0; i < width * height; ++i)
            frame.data.data()[i] = rgb_to_luma(pixels[3 * i], pixels[3 * i + 1], pixels[3 * i + 2]);
    } else {
        std::memcpy(frame.data.data(), pixels.data(), pixels.size());
    }
    return frame;
}

LumaFrame decode_rgb(std::span<const std::uint8_t> raw, int width, int height) {
    if (width <= 0 || height <= 0)
        throw DecodeError("RGB triplets need positive width and height", 0);
    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (raw.size() < 3 * n) throw DecodeError("RGB payload truncated", raw.size());
    LumaFrame frame;
    frame.data.resize(height, width);
    for (std::size_t i = 0; i < n; ++i)
        frame.data.data()[i] = rgb_to_luma(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]);
    return frame;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::uint8_t rgb_to_luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

LumaFrame decode_frame(std::span<const std::uint8_t> raw, ImageFormat format, int width,
                       int height) {
    switch (format) {
        case ImageFormat::Pgm: return decode_pgm(raw);
        case ImageFormat::Png: return decode_png(raw);
        case ImageFormat::RgbTriplets: return decode_rgb(raw, width, height);
    }
    throw DecodeError("unknown image format", 0);
}

std::vector<std::uint8_t> encode_pgm(const LumaFrame& frame) {
    const std::string header = "P5\n" + std::to_string(frame.width()) + " " +
                               std::to_string(frame.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), frame.data.data(), frame.data.data() + frame.data.size());
    return out;
}

double lin_log(double luma_dn) {
    if (!(luma_dn >= 0.0 && luma_dn <= 255.0))
        throw DomainError("lin_log: luma " + std::to_string(luma_dn) + " outside [0, 255]");
    static const double kJunctionLog = std::log(kLinLogJunctionDn);
    if (luma_dn <= kLinLogJunctionDn) return luma_dn / kLinLogJunctionDn * kJunctionLog;
    return std::log(luma_dn);
}

LogFrame to_log_frame(const LumaFrame& frame) {
    // 256-entry table; every DN maps through lin_log exactly once.
    static const auto table = [] {
        std::array<double, 256> t{};
        for (int i = 0; i < 256; ++i) t[i] = lin_log(i);
        return t;
    }();
    LogFrame out;
    out.t_us = frame.t_us;
    out.data = frame.data.unaryExpr([](std::uint8_t y) { return table[y]; });
    return out;
}

Plane<double> normalized_luma(const LumaFrame& frame) {
    return frame.data.cast<double>() / 255.0;
}

SequenceMeta read_meta(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    SequenceMeta meta;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "fps") {
                meta.fps = std::stod(value);
                if (!(meta.fps > 0)) throw DataError("fps must be positive");
            } else if (key == "label") {
                meta.label = std::stoi(value);
            }
            // Other keys are informational.
        } catch (const std::logic_error&) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad value for " + key);
        }
    }
    return meta;
}

void write_meta(const std::filesystem::path& path, const SequenceMeta& meta) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    std::ostringstream fps;
    fps << meta.fps;
    out << "fps=" << fps.str() << "\n";
    if (meta.label >= 0) out << "label=" << meta.label << "\n";
}

std::vector<LumaFrame> read_frame_directory(const std::filesystem::path& seq_dir,
                                            SequenceMeta* meta_out) {
    SequenceMeta meta;
    if (std::filesystem::exists(seq_dir / "meta.txt")) meta = read_meta(seq_dir / "meta.txt");
    const auto frames_dir = seq_dir / "frames";
    if (!std::filesystem::is_directory(frames_dir))
        throw DataError("missing frames directory " + frames_dir.string());

    std::map<long, std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(frames_dir)) {
        const auto ext = entry.path().extension().string();
        if (ext != ".pgm" && ext != ".png") continue;
        const auto stem = entry.path().stem().string();
        long index = 0;
        const auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), index);
        if (ec != std::errc() || ptr != stem.data() + stem.size())
            throw DataError("frame file name is not numeric: " + entry.path().string());
        files[index] = entry.path();
    }
    if (files.empty()) throw DataError("no frames in " + frames_dir.string());

    std::vector<LumaFrame> frames;
    frames.reserve(files.size());
    long k = 0;
    for (const auto& [index, file] : files) {
        const auto bytes = read_file_bytes(file);
        const auto format = file.extension() == ".png" ? ImageFormat::Png : ImageFormat::Pgm;
        LumaFrame frame;
        try {
            frame = decode_frame(bytes, format);
        } catch (const DecodeError& e) {
            throw DecodeError(file.string() + ": " + e.what(), e.offset());
        }
        if (!frames.empty() &&
            (frame.width() != frames.front().width() || frame.height() != frames.front().height()))
            throw DataError("frame size changes within sequence at " + file.string());
        frame.t_us = std::llround(static_cast<double>(k) * 1e6 / meta.fps);
        frames.push_back(std::move(frame));
        ++k;
    }
    if (meta_out) *meta_out = meta;
    return frames;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace dvsnet
