#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "dvsnet/events.hpp"
#include "dvsnet/nn/layers.hpp"

namespace dvsnet {

/// How the class score is read out of the final spiking layer.
enum class OutputMode {
    MeanPotential,  ///< softmax of the time-averaged membrane potential
    LastPotential,  ///< softmax of the last step's membrane potential
    LastSpike,      ///< softmax of the last step's binary spike vector
};

/// Which grayscale frames feed the spatial extractor.
enum class InputMode {
    FirstLast,    ///< [I1, In]
    FirstOnly,    ///< [I1, I1]
    FirstSecond,  ///< [I1, I2]
    AllFrames,    ///< every grayscale frame under a used event frame
};

enum class EventFrameMode { Counts, Binary };

struct AdsnConfig {
    int input_height = 72;
    int input_width = 96;
    int base_channels = 16;
    std::vector<int> attention_scales{3, 5, 7};
    int heads = 4;
    int n_steps = 4;
    double theta = 0.3;
    double alpha = 0.2;
    double surrogate_width = 1.0;
    int head_hidden = 64;
    OutputMode output_mode = OutputMode::MeanPotential;
    InputMode input_mode = InputMode::FirstLast;
    EventFrameMode event_frame = EventFrameMode::Counts;
    std::uint64_t seed = 1;

    void validate() const;
    /// Grayscale channels entering the spatial extractor.
    int gray_channels() const { return input_mode == InputMode::AllFrames ? n_steps : 2; }
    int feature_channels() const { return 4 * base_channels; }
    int token_height() const { return input_height / 8; }
    int token_width() const { return input_width / 8; }
};

std::string to_string(OutputMode m);
std::string to_string(InputMode m);
std::string to_string(EventFrameMode m);
OutputMode parse_output_mode(const std::string& s);
InputMode parse_input_mode(const std::string& s);
EventFrameMode parse_event_frame_mode(const std::string& s);

/// key=value lines, one per AdsnConfig field.
std::string format_config(const AdsnConfig& config);
/// Applies one key=value setting; throws DomainError on unknown keys.
void apply_config_value(AdsnConfig& config, const std::string& key, const std::string& value);
AdsnConfig read_adsn_config(const std::filesystem::path& path);
void write_adsn_config(const std::filesystem::path& path, const AdsnConfig& config);

/// Network-ready tensors for a batch of clips.
template <typename S>
struct AdsnBatch {
    nn::Tensor<S> gray;                 ///< N x gray_channels x H x W, each frame min-max scaled to [0, 1]
    std::vector<nn::Tensor<S>> events;  ///< n_steps tensors of N x 2 x H x W
    std::vector<int> labels;

    int size() const { return gray.dim(0); }
};

/// Box-resamples, normalizes, and stacks clips. Event counts are scaled by
/// 1 / max(1, 99th percentile) per clip, or binarized.
template <typename S>
AdsnBatch<S> make_batch(const std::vector<const Clip*>& clips, const AdsnConfig& config);

/// Area-average resample of a plane to the given size.
Plane<double> resample_area(const Plane<double>& src, int height, int width);

/// Multi-scale attention: parallel k x k branches weighted per channel by
/// a softmax over branches of a pooled score, then fused by a 1 x 1 conv.
template <typename S>
struct MultiScaleAttention {
    std::vector<nn::Conv2d<S>> branches;
    nn::Conv2d<S> score_reduce;  ///< 1 x 1 inside the score head
    nn::BatchNorm<S> score_bn;
    nn::Conv2d<S> score_expand;  ///< 1 x 1 inside the score head
    nn::Conv2d<S> fuse;

    MultiScaleAttention() = default;
    /// `steps` > 1 gives the score batch norm separate running statistics
    /// for every (time step, branch) pair.
    MultiScaleAttention(int in_channels, int out_channels, const std::vector<int>& scales, SplitMix64& rng,
                        int steps = 1);

    /// Pooled score of branch `b`, N x C x 1 x 1.
    nn::Tensor<S> score(const nn::Tensor<S>& branch, bool training, int b = 0, int step = 0) const;
    /// Branch weights, N x branches x C (softmax over the branch axis).
    nn::Tensor<S> weights(const std::vector<nn::Tensor<S>>& branch_outputs, bool training, int step = 0) const;
    nn::Tensor<S> operator()(const nn::Tensor<S>& x, bool training, int step = 0) const;
    void collect(const std::string& prefix, nn::TensorList<S>& params) const;
    void collect_buffers(const std::string& prefix, nn::TensorList<S>& buffers) const;
};

/// F_e * gate + F_e with the gate broadcast over H x W.
template <typename S>
nn::Tensor<S> guide_combine(const nn::Tensor<S>& event_features, const nn::Tensor<S>& gate);

/// Spiking states carried across time steps of one clip.
template <typename S>
struct TemporalStates {
    nn::LifState<S> msa;    ///< after the multi-scale attention
    nn::LifState<S> conv1;  ///< after the first stride-2 conv
    nn::LifState<S> attn;   ///< on the self-attention output
    nn::LifState<S> head1;
    nn::LifState<S> head2;  ///< final layer; its potential is the output

    TemporalStates() = default;
    TemporalStates(S theta, S alpha) : msa(theta, alpha), conv1(theta, alpha), attn(theta, alpha), head1(theta, alpha), head2(theta, alpha) {}
    void reset() {
        msa.reset();
        conv1.reset();
        attn.reset();
        head1.reset();
        head2.reset();
    }
};

template <typename S>
struct SpatialFeatures {
    nn::Tensor<S> features;  ///< F_s, N x 4C x H/4 x W/4
    nn::Tensor<S> spikes;    ///< J_s, same shape, binary
};

template <typename S>
struct AdsnOutput {
    nn::Tensor<S> probs;                    ///< R, N x 7
    nn::Tensor<S> scores;                   ///< pre-softmax readout
    std::vector<nn::Tensor<S>> potentials;  ///< O_t per step, N x 7
    std::vector<nn::Tensor<S>> spikes;      ///< every spike tensor produced
};

struct ForwardOptions {
    bool training = false;
    bool carry_state = true;  ///< false resets all spiking states before every step
};

template <typename S>
class Adsn {
public:
    explicit Adsn(AdsnConfig config);

    const AdsnConfig& config() const { return config_; }

    SpatialFeatures<S> spatial_extract(const nn::Tensor<S>& gray, bool training) const;
    /// Gate F_p = sigmoid(phi(C1(GAP(F_s * F_e)))), N x 4C x 1 x 1.
    /// `step` selects the time step's batch-norm running statistics.
    nn::Tensor<S> guide_gate(const nn::Tensor<S>& spatial, const nn::Tensor<S>& event_features, bool training,
                             int step = 0) const;
    nn::Tensor<S> guide_attention(const nn::Tensor<S>& spatial, const nn::Tensor<S>& event_features, bool training,
                                  int step = 0) const;
    /// F_e^t for one event frame; advances the two extractor spiking states.
    nn::Tensor<S> event_features(const nn::Tensor<S>& event_frame, TemporalStates<S>& states, bool training,
                                 std::vector<nn::Tensor<S>>* spikes = nullptr, int step = 0) const;
    /// One time step; returns O_t (membrane potential of the final layer).
    nn::Tensor<S> temporal_step(int t, const nn::Tensor<S>& event_frame, const SpatialFeatures<S>& spatial,
                                TemporalStates<S>& states, bool training,
                                std::vector<nn::Tensor<S>>* spikes = nullptr) const;

    AdsnOutput<S> forward(const AdsnBatch<S>& batch, ForwardOptions options = {}) const;

    /// -(1/7) * mean over the batch of log R[label], R clamped at 1e-12.
    nn::Tensor<S> loss(const nn::Tensor<S>& probs, std::span<const int> labels) const;

    nn::TensorList<S> parameters() const;
    nn::TensorList<S> buffers() const;
    /// Parameters followed by buffers; the checkpoint payload.
    nn::TensorList<S> state_tensors() const;
    std::vector<nn::BatchNorm<S>*> batch_norms();

    // Sub-modules are public so tests can perform weight surgery.
    nn::Conv2d<S> spatial_reduce;
    MultiScaleAttention<S> spatial_msa;
    nn::Conv2d<S> spatial_conv1;
    nn::BatchNorm<S> spatial_bn;
    nn::Conv2d<S> spatial_conv2;

    MultiScaleAttention<S> event_msa;
    nn::Conv2d<S> event_conv1;
    nn::Conv2d<S> event_conv2;

    nn::Conv2d<S> gate_conv;
    nn::BatchNorm<S> gate_bn;

    nn::MultiHeadSelfAttention<S> attention;
    nn::Linear<S> head1;
    nn::Linear<S> head2;

private:
    AdsnConfig config_;
};

template <typename S>
nn::Tensor<S> cross_entropy_loss(const nn::Tensor<S>& probs, std::span<const int> labels);

extern template class Adsn<float>;
extern template class Adsn<double>;

}  // namespace dvsnet
