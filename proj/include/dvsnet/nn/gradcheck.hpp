#pragma once

#include <functional>
#include <vector>

#include "dvsnet/nn/tensor.hpp"

namespace dvsnet::nn {

struct GradCheckResult {
    double max_rel_error = 0;
    double max_abs_error = 0;
    long checked = 0;
};

/// Compares reverse-mode gradients of a scalar-valued `loss` with central
/// differences on every element of every input. `loss` is re-evaluated
/// with perturbed input values, so it must read the inputs through the
/// tensors passed here. Relative error is |a - n| / max(|a|, |n|, f) with
/// f = max(floor, scale_floor * largest |a|), so entries that are zero up to
/// round-off (e.g. key biases under softmax) do not dominate.
GradCheckResult check_gradients(const std::function<Tensor<double>()>& loss,
                                const std::vector<Tensor<double>>& inputs, double step = 1e-5,
                                double floor = 1e-6, double scale_floor = 1e-3);

}  // namespace dvsnet::nn
