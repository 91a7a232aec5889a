#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dvsnet/nn/layers.hpp"

namespace dvsnet::nn {

/// CKPT1: magic "CKPT1", u32 tensor count, then per tensor u16 name length,
/// UTF-8 name, u8 rank, u32 dims, f32 data. Little-endian throughout.
template <typename S>
std::vector<std::uint8_t> encode_checkpoint(const TensorList<S>& tensors);

/// Copies stored values into `targets`, matched by name. Every target must
/// be present with an identical shape and the file may hold nothing else;
/// the error names the first offending tensor.
template <typename S>
void decode_checkpoint(std::span<const std::uint8_t> bytes, TensorList<S>& targets);

/// Raw records, for inspection and round-trip tests.
struct CheckpointRecord {
    std::string name;
    Shape shape;
    std::vector<float> data;
};
std::vector<CheckpointRecord> parse_checkpoint(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_records(const std::vector<CheckpointRecord>& records);

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const TensorList<S>& tensors);
template <typename S>
void load_checkpoint(const std::filesystem::path& path, TensorList<S>& targets);

}  // namespace dvsnet::nn
