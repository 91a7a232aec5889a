#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dvsnet/ingest.hpp"

namespace dvsnet {

/// Synthetic eye-like sequences. Every class has the same single-frame
/// appearance distribution once the phase is randomized; they differ in how
/// the blob moves.
struct SynthParams {
    int classes = 7;
    int train_per_class = 10;
    int test_per_class = 5;
    int length_frames = 48;
    int width = 32;
    int height = 24;
    double fps = 60.0;
    double pixel_noise = 1.0;  ///< DN, Gaussian
    std::uint64_t seed = 1;

    void validate() const;
};

/// Class names in label order.
const std::vector<std::string>& synth_class_names();

/// Renders one sequence of class `label`; `seq_seed` fixes phase, position
/// and contrast.
std::vector<LumaFrame> synth_sequence(int label, const SynthParams& params, std::uint64_t seq_seed);

/// Writes labels.txt and train/test sequence directories under `root`.
/// Throws DataError when `root` exists and is not empty.
void synth_dataset(const std::filesystem::path& root, const SynthParams& params);

}  // namespace dvsnet
