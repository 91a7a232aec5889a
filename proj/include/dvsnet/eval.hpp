#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dvsnet/adsn.hpp"
#include "dvsnet/events.hpp"

namespace dvsnet {

/// Rows are ground truth, columns are predictions.
struct ConfusionMatrix {
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> counts;

    explicit ConfusionMatrix(int classes = kNumClasses);
    static ConfusionMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows);

    int classes() const { return static_cast<int>(counts.rows()); }
    std::int64_t total() const { return counts.sum(); }
    void add(int truth, int predicted);
};

/// trace / total. Throws DomainError on an empty matrix.
double war(const ConfusionMatrix& cm);
/// Mean per-class recall. Throws DomainError naming the first class
/// without samples.
double uar(const ConfusionMatrix& cm, const std::vector<std::string>& class_names = {});
/// Per-class recall; NaN for classes without samples.
std::vector<double> class_recalls(const ConfusionMatrix& cm);

/// Maps a batch of clips to predicted labels.
using Predictor = std::function<std::vector<int>(const std::vector<const Clip*>&)>;

/// Inference-mode predictor over a trained model.
Predictor model_predictor(const Adsn<float>& model);

struct ProtocolReport {
    ClipSpec spec;
    int reps = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> class_names;
    std::vector<double> war_per_rep;
    std::vector<double> uar_per_rep;
    ConfusionMatrix pooled;  ///< summed over repetitions
    double war_mean = 0, war_std = 0;
    double uar_mean = 0, uar_std = 0;

    std::vector<double> class_accuracy() const { return class_recalls(pooled); }
    /// Aligned table for people.
    std::string table() const;
    /// `metric=value` lines.
    std::string machine() const;
};

/// Repetition r samples one random-start clip per sequence from stream
/// split_seed(seed, r). Repetitions run on up to `threads` workers; clips
/// are batched in sequence order in chunks of `batch_size`, so results do
/// not depend on the thread count.
ProtocolReport evaluate_protocol(const Predictor& predict, const Dataset& data, const ClipSpec& spec, int reps,
                                 std::uint64_t seed, int threads = 1, int batch_size = 32);

}  // namespace dvsnet
