#pragma once

#include <filesystem>
#include <string>

#include "dvsnet/adsn.hpp"
#include "dvsnet/config.hpp"
#include "dvsnet/synth.hpp"
#include "dvsnet/training.hpp"
#include "dvsnet/v2e.hpp"

namespace dvsnet::cli {

struct EvalSettings {
    ClipSpec spec{};
    int reps = 20;
    int batch_size = 32;
    std::string split = "test";
};

/// Every tunable of every subcommand. Keys are namespaced by module
/// (v2e.*, model.*, train.*, eval.*, synth.*); `seed` feeds all of them.
struct RunConfig {
    std::uint64_t seed = 1;
    V2eParams v2e{};
    AdsnConfig model{};
    TrainConfig train{};
    EvalSettings eval{};
    SynthParams synth{};

    RunConfig();

    /// Throws DomainError for unknown keys or malformed values.
    void set(const std::string& key, const std::string& value);
    void merge_file(const std::filesystem::path& path);
    /// Fills in seeds and checks every section.
    void finalize();
    KeyValues resolved() const;
};

void write_resolved(const std::filesystem::path& path, const RunConfig& config);

}  // namespace dvsnet::cli
