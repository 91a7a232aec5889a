#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dvsnet {

/// Row-major per-pixel image plane. Rows are y, columns are x.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 8-bit luma frame in digital numbers.
struct LumaFrame {
    Plane<std::uint8_t> data;
    std::int64_t t_us = 0;

    int width() const { return static_cast<int>(data.cols()); }
    int height() const { return static_cast<int>(data.rows()); }
};

/// Log-intensity frame (natural-log units).
struct LogFrame {
    Plane<double> data;
    std::int64_t t_us = 0;

    int width() const { return static_cast<int>(data.cols()); }
    int height() const { return static_cast<int>(data.rows()); }
};

enum class ImageFormat { Pgm, Png, RgbTriplets };

/// Decodes one image. RgbTriplets is a headerless interleaved R,G,B byte
/// buffer and needs explicit dimensions; the other formats carry their own.
LumaFrame decode_frame(std::span<const std::uint8_t> raw, ImageFormat format, int width = 0,
                       int height = 0);

/// Binary P5 with maxval 255.
std::vector<std::uint8_t> encode_pgm(const LumaFrame& frame);

/// BT.601 luma, rounded to nearest.
std::uint8_t rgb_to_luma(std::uint8_t r, std::uint8_t g, std::uint8_t b);

inline constexpr double kLinLogJunctionDn = 20.0;

/// Lin-log intensity map: linear below the junction, natural log above,
/// continuous at the junction.
double lin_log(double luma_dn);

/// Y / 255.
inline double normalize_luma(double luma_dn) { return luma_dn / 255.0; }

LogFrame to_log_frame(const LumaFrame& frame);
Plane<double> normalized_luma(const LumaFrame& frame);

/// `key=value` sequence metadata from meta.txt.
struct SequenceMeta {
    double fps = 60.0;
    int label = -1;
};

SequenceMeta read_meta(const std::filesystem::path& path);
void write_meta(const std::filesystem::path& path, const SequenceMeta& meta);

/// Loads frames/%06d.{pgm,png} in index order and stamps t_us = k * 1e6 / fps.
std::vector<LumaFrame> read_frame_directory(const std::filesystem::path& seq_dir,
                                            SequenceMeta* meta_out = nullptr);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dvsnet
