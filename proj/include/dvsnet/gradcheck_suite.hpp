#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dvsnet/nn/gradcheck.hpp"

namespace dvsnet {

struct GradCheckCase {
    std::string name;
    nn::GradCheckResult result;
    double threshold = 1e-6;

    bool passed() const { return result.max_rel_error < threshold; }
};

/// Finite-difference checks at f64 for every differentiable primitive and
/// for the composed non-spiking path of the network ending in the loss.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 7);

}  // namespace dvsnet
