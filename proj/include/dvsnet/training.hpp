#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dvsnet/adsn.hpp"
#include "dvsnet/config.hpp"
#include "dvsnet/events.hpp"
#include "dvsnet/nn/adam.hpp"

namespace dvsnet {

struct TrainConfig {
    int epochs = 200;
    int batch_size = 32;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double clip_norm = 5.0;  ///< global gradient norm cap; <= 0 disables
    ClipSpec clip_spec{};
    int bn_passes = 5;  ///< passes re-estimating batch norm statistics after training
    double target_war = 0;  ///< stop once an epoch reaches this training WAR; 0 disables
    std::uint64_t seed = 1;

    void validate() const;
    nn::AdamConfig adam() const;
};

void apply_train_value(TrainConfig& config, const std::string& key, const std::string& value);
KeyValues train_key_values(const TrainConfig& config);

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0;
    double war = 0;  ///< accuracy of the training-mode predictions
    double max_grad_norm = 0;
};

/// Argmax per row.
template <typename S>
std::vector<int> argmax_rows(const nn::Tensor<S>& probs);

/// Owns a model and its optimizer. Every epoch draws a fresh random clip per
/// training sequence from stream split_seed(seed, epoch).
class Trainer {
public:
    Trainer(AdsnConfig model_config, TrainConfig train_config);

    EpochStats run_epoch(const Dataset& data);
    /// Re-estimates every batch norm running statistic as the plain average
    /// of batch statistics with the weights frozen.
    void recalibrate_batch_norm(const Dataset& data, int passes);
    /// Runs the remaining epochs, stopping early at target_war, then
    /// recalibrates batch norm.
    std::vector<EpochStats> fit(const Dataset& data, const std::function<void(const EpochStats&)>& on_epoch = {});

    Adsn<float>& model() { return model_; }
    const Adsn<float>& model() const { return model_; }
    nn::Adam<float>& optimizer() { return adam_; }
    const TrainConfig& config() const { return config_; }
    int epochs_done() const { return epoch_; }

private:
    Adsn<float> model_;
    TrainConfig config_;
    nn::Adam<float> adam_;
    nn::TensorList<float> params_;
    int epoch_ = 0;
};

/// One optimisation step on an already built batch. Returns the loss value
/// and writes the predictions. Throws NumericError on a non-finite loss.
double train_step(Adsn<float>& model, nn::Adam<float>& adam, nn::TensorList<float>& params,
                  const AdsnBatch<float>& batch, double clip_norm, std::vector<int>* predictions = nullptr,
                  double* grad_norm = nullptr);

void save_model(const std::filesystem::path& checkpoint, const Adsn<float>& model);
/// Loads parameters and buffers into `model`; its config must match the file.
void load_model(const std::filesystem::path& checkpoint, Adsn<float>& model);

}  // namespace dvsnet
