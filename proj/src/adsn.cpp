#include "dvsnet/adsn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dvsnet/config.hpp"
#include "dvsnet/error.hpp"

namespace dvsnet {

using nn::Tensor;

// ---------------------------------------------------------------------------
// Configuration

void AdsnConfig::validate() const {
    if (input_height < 8 || input_width < 8 || input_height % 8 != 0 || input_width % 8 != 0)
        throw DomainError("input size must be a positive multiple of 8 in both axes");
    if (base_channels < 1) throw DomainError("base_channels must be >= 1");
    if (attention_scales.empty()) throw DomainError("attention_scales must not be empty");
    for (std::size_t i = 0; i < attention_scales.size(); ++i) {
        if (attention_scales[i] < 1 || attention_scales[i] % 2 == 0)
            throw DomainError("attention scales must be odd");
        if (i > 0 && attention_scales[i] < attention_scales[i - 1])
            throw DomainError("attention scales must be ascending");
    }
    if (heads < 1 || feature_channels() % heads != 0)
        throw DomainError("4 * base_channels must be divisible by heads");
    if (n_steps < 1) throw DomainError("n_steps must be >= 1");
    if (!(theta > 0)) throw DomainError("theta must be > 0");
    if (!(alpha >= 0 && alpha < 1)) throw DomainError("alpha must be in [0, 1)");
    if (!(surrogate_width > 0)) throw DomainError("surrogate_width must be > 0");
    if (head_hidden < 1) throw DomainError("head_hidden must be >= 1");
}

std::string to_string(OutputMode m) {
    switch (m) {
        case OutputMode::MeanPotential: return "mean_potential";
        case OutputMode::LastPotential: return "last_potential";
        case OutputMode::LastSpike: return "last_spike";
    }
    return "?";
}

std::string to_string(InputMode m) {
    switch (m) {
        case InputMode::FirstLast: return "first_last";
        case InputMode::FirstOnly: return "first_only";
        case InputMode::FirstSecond: return "first_second";
        case InputMode::AllFrames: return "all_frames";
    }
    return "?";
}

std::string to_string(EventFrameMode m) { return m == EventFrameMode::Counts ? "counts" : "binary"; }

OutputMode parse_output_mode(const std::string& s) {
    for (auto m : {OutputMode::MeanPotential, OutputMode::LastPotential, OutputMode::LastSpike})
        if (to_string(m) == s) return m;
    throw DomainError("unknown output_mode '" + s + "'");
}

InputMode parse_input_mode(const std::string& s) {
    for (auto m : {InputMode::FirstLast, InputMode::FirstOnly, InputMode::FirstSecond, InputMode::AllFrames})
        if (to_string(m) == s) return m;
    throw DomainError("unknown input_mode '" + s + "'");
}

EventFrameMode parse_event_frame_mode(const std::string& s) {
    if (s == "counts") return EventFrameMode::Counts;
    if (s == "binary") return EventFrameMode::Binary;
    throw DomainError("unknown event_frame '" + s + "'");
}

std::string format_config(const AdsnConfig& c) {
    std::string scales;
    for (std::size_t i = 0; i < c.attention_scales.size(); ++i)
        scales += (i ? "," : "") + std::to_string(c.attention_scales[i]);
    KeyValues kv{
        {"input_height", std::to_string(c.input_height)},
        {"input_width", std::to_string(c.input_width)},
        {"base_channels", std::to_string(c.base_channels)},
        {"attention_scales", scales},
        {"heads", std::to_string(c.heads)},
        {"n_steps", std::to_string(c.n_steps)},
        {"theta", format_double(c.theta)},
        {"alpha", format_double(c.alpha)},
        {"surrogate_width", format_double(c.surrogate_width)},
        {"head_hidden", std::to_string(c.head_hidden)},
        {"output_mode", to_string(c.output_mode)},
        {"input_mode", to_string(c.input_mode)},
        {"event_frame", to_string(c.event_frame)},
        {"seed", std::to_string(c.seed)},
    };
    return format_key_values(kv);
}

void apply_config_value(AdsnConfig& c, const std::string& key, const std::string& value) {
    if (key == "input_height") c.input_height = static_cast<int>(parse_int(key, value));
    else if (key == "input_width") c.input_width = static_cast<int>(parse_int(key, value));
    else if (key == "base_channels") c.base_channels = static_cast<int>(parse_int(key, value));
    else if (key == "attention_scales") c.attention_scales = parse_int_list(key, value);
    else if (key == "heads") c.heads = static_cast<int>(parse_int(key, value));
    else if (key == "n_steps") c.n_steps = static_cast<int>(parse_int(key, value));
    else if (key == "theta") c.theta = parse_double(key, value);
    else if (key == "alpha") c.alpha = parse_double(key, value);
    else if (key == "surrogate_width") c.surrogate_width = parse_double(key, value);
    else if (key == "head_hidden") c.head_hidden = static_cast<int>(parse_int(key, value));
    else if (key == "output_mode") c.output_mode = parse_output_mode(value);
    else if (key == "input_mode") c.input_mode = parse_input_mode(value);
    else if (key == "event_frame") c.event_frame = parse_event_frame_mode(value);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else throw DomainError("unknown model config key '" + key + "'");
}

AdsnConfig read_adsn_config(const std::filesystem::path& path) {
    AdsnConfig c;
    for (const auto& [k, v] : read_key_values(path)) apply_config_value(c, k, v);
    c.validate();
    return c;
}

void write_adsn_config(const std::filesystem::path& path, const AdsnConfig& config) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << format_config(config);
}

// ---------------------------------------------------------------------------
// Input preparation

Plane<double> resample_area(const Plane<double>& src, int height, int width) {
    const int H = static_cast<int>(src.rows()), W = static_cast<int>(src.cols());
    if (H == height && W == width) return src;
    Plane<double> out(height, width);
    for (int oy = 0; oy < height; ++oy) {
        const int y0 = oy * H / height, y1 = std::max(y0 + 1, ((oy + 1) * H + height - 1) / height);
        for (int ox = 0; ox < width; ++ox) {
            const int x0 = ox * W / width, x1 = std::max(x0 + 1, ((ox + 1) * W + width - 1) / width);
            out(oy, ox) = src.block(y0, x0, y1 - y0, x1 - x0).mean();
        }
    }
    return out;
}

namespace {

Plane<double> normalized_gray(const LumaFrame& f, const AdsnConfig& c) {
    Plane<double> p = resample_area(f.data.cast<double>(), c.input_height, c.input_width);
    const double lo = p.minCoeff(), hi = p.maxCoeff();
    if (hi > lo) return (p - lo) / (hi - lo);
    return Plane<double>::Zero(p.rows(), p.cols());
}

}  // namespace

template <typename S>
AdsnBatch<S> make_batch(const std::vector<const Clip*>& clips, const AdsnConfig& c) {
    c.validate();
    if (clips.empty()) throw DomainError("make_batch: no clips");
    const int N = static_cast<int>(clips.size()), G = c.gray_channels(), H = c.input_height, W = c.input_width;
    const Eigen::Index hw = static_cast<Eigen::Index>(H) * W;
    AdsnBatch<S> batch;
    nn::Vec<S> gray(static_cast<Eigen::Index>(N) * G * hw);
    std::vector<nn::Vec<S>> ev(static_cast<std::size_t>(c.n_steps), nn::Vec<S>(static_cast<Eigen::Index>(N) * 2 * hw));

    for (int n = 0; n < N; ++n) {
        const Clip& clip = *clips[static_cast<std::size_t>(n)];
        if (static_cast<int>(clip.event_frames.size()) != c.n_steps)
            throw DomainError("clip has " + std::to_string(clip.event_frames.size()) + " event frames, model expects " +
                              std::to_string(c.n_steps));
        std::vector<const LumaFrame*> frames;
        switch (c.input_mode) {
            case InputMode::FirstLast: frames = {&clip.first_gray, &clip.last_gray}; break;
            case InputMode::FirstOnly: frames = {&clip.first_gray, &clip.first_gray}; break;
            case InputMode::FirstSecond: frames = {&clip.first_gray, &clip.second_gray}; break;
            case InputMode::AllFrames:
                for (const auto& f : clip.used_gray) frames.push_back(&f);
                break;
        }
        if (static_cast<int>(frames.size()) != G) throw DomainError("clip grayscale frames do not match input_mode");
        for (int g = 0; g < G; ++g) {
            const Plane<double> p = normalized_gray(*frames[static_cast<std::size_t>(g)], c);
            for (Eigen::Index i = 0; i < hw; ++i)
                gray[(static_cast<Eigen::Index>(n) * G + g) * hw + i] = static_cast<S>(p.data()[i]);
        }

        std::vector<Plane<double>> planes;
        for (const auto& f : clip.event_frames) {
            planes.push_back(resample_area(f.on_counts.cast<double>(), H, W));
            planes.push_back(resample_area(f.off_counts.cast<double>(), H, W));
        }
        double scale = 1.0;
        if (c.event_frame == EventFrameMode::Counts) {
            std::vector<double> all;
            all.reserve(planes.size() * static_cast<std::size_t>(hw));
            for (const auto& p : planes) all.insert(all.end(), p.data(), p.data() + p.size());
            const auto k = static_cast<std::size_t>(0.99 * static_cast<double>(all.size() - 1));
            std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
            scale = 1.0 / std::max(1.0, all[k]);
        }
        for (int t = 0; t < c.n_steps; ++t)
            for (int ch = 0; ch < 2; ++ch) {
                const auto& p = planes[static_cast<std::size_t>(2 * t + ch)];
                for (Eigen::Index i = 0; i < hw; ++i) {
                    const double v = p.data()[i];
                    ev[static_cast<std::size_t>(t)][(static_cast<Eigen::Index>(n) * 2 + ch) * hw + i] =
                        static_cast<S>(c.event_frame == EventFrameMode::Binary ? (v > 0 ? 1.0 : 0.0) : v * scale);
                }
            }
        batch.labels.push_back(clip.label);
    }
    batch.gray = Tensor<S>::from({N, G, H, W}, std::move(gray));
    for (auto& e : ev) batch.events.push_back(Tensor<S>::from({N, 2, H, W}, std::move(e)));
    return batch;
}

// ---------------------------------------------------------------------------
// Multi-scale attention

template <typename S>
MultiScaleAttention<S>::MultiScaleAttention(int in_channels, int out_channels, const std::vector<int>& scales,
                                            SplitMix64& rng, int steps)
    : score_reduce(out_channels, out_channels, 1, 1, rng),
      score_bn(out_channels, steps * static_cast<int>(scales.size())),
      score_expand(out_channels, out_channels, 1, 1, rng),
      fuse(static_cast<int>(scales.size()) * out_channels, out_channels, 1, 1, rng) {
    for (int k : scales) branches.emplace_back(in_channels, out_channels, k, 1, rng);
}

template <typename S>
Tensor<S> MultiScaleAttention<S>::score(const Tensor<S>& branch, bool training, int b, int step) const {
    const Tensor<S> pooled = nn::adaptive_avg_pool2d(branch, 1, 1);
    const int slot = step * static_cast<int>(branches.size()) + b;
    return score_expand(nn::relu(score_bn(score_reduce(pooled), training, slot)));
}

template <typename S>
Tensor<S> MultiScaleAttention<S>::weights(const std::vector<Tensor<S>>& outs, bool training, int step) const {
    std::vector<Tensor<S>> scores;
    for (std::size_t i = 0; i < outs.size(); ++i) {
        const int N = outs[i].dim(0), C = outs[i].dim(1);
        scores.push_back(nn::reshape(score(outs[i], training, static_cast<int>(i), step), {N, 1, C}));
    }
    return nn::softmax(nn::concat(scores, 1), 1);
}

template <typename S>
Tensor<S> MultiScaleAttention<S>::operator()(const Tensor<S>& x, bool training, int step) const {
    std::vector<Tensor<S>> outs;
    for (const auto& conv : branches) outs.push_back(conv(x));
    const int N = x.dim(0), C = outs.front().dim(1), B = static_cast<int>(outs.size());
    // Branch-major channel order matches the flattened N x B x C weights.
    const Tensor<S> w = nn::reshape(weights(outs, training, step), {N, B * C, 1, 1});
    return fuse(nn::channel_scale(nn::concat(outs, 1), w));
}

template <typename S>
void MultiScaleAttention<S>::collect(const std::string& prefix, nn::TensorList<S>& params) const {
    for (std::size_t i = 0; i < branches.size(); ++i)
        branches[i].collect(prefix + ".branch" + std::to_string(i), params);
    score_reduce.collect(prefix + ".score_reduce", params);
    score_bn.collect(prefix + ".score_bn", params);
    score_expand.collect(prefix + ".score_expand", params);
    fuse.collect(prefix + ".fuse", params);
}

template <typename S>
void MultiScaleAttention<S>::collect_buffers(const std::string& prefix, nn::TensorList<S>& buffers) const {
    score_bn.collect_buffers(prefix + ".score_bn", buffers);
}

template <typename S>
Tensor<S> guide_combine(const Tensor<S>& event_features, const Tensor<S>& gate) {
    return nn::add(nn::channel_scale(event_features, gate), event_features);
}

// ---------------------------------------------------------------------------
// Network

namespace {

SplitMix64 init_rng(const AdsnConfig& c) {
    c.validate();
    return SplitMix64(split_seed(c.seed, 0xad5));
}

}  // namespace

template <typename S>
Adsn<S>::Adsn(AdsnConfig config) : config_(std::move(config)) {
    SplitMix64 rng = init_rng(config_);
    const int C = config_.base_channels, F = config_.feature_channels();
    spatial_reduce = nn::Conv2d<S>(config_.gray_channels(), C, 1, 1, rng);
    spatial_msa = MultiScaleAttention<S>(C, C, config_.attention_scales, rng);
    spatial_conv1 = nn::Conv2d<S>(C, 2 * C, 3, 2, rng);
    spatial_bn = nn::BatchNorm<S>(2 * C);
    spatial_conv2 = nn::Conv2d<S>(2 * C, F, 3, 2, rng);

    event_msa = MultiScaleAttention<S>(2, C, config_.attention_scales, rng, config_.n_steps);
    event_conv1 = nn::Conv2d<S>(C, 2 * C, 3, 2, rng);
    event_conv2 = nn::Conv2d<S>(2 * C, F, 3, 2, rng);

    gate_conv = nn::Conv2d<S>(F, F, 1, 1, rng);
    gate_bn = nn::BatchNorm<S>(F, config_.n_steps);

    attention = nn::MultiHeadSelfAttention<S>(F, config_.heads, rng);
    const int tokens = config_.token_height() * config_.token_width();
    head1 = nn::Linear<S>(F * tokens, config_.head_hidden, rng);
    head2 = nn::Linear<S>(config_.head_hidden, kNumClasses, rng);
}

template <typename S>
SpatialFeatures<S> Adsn<S>::spatial_extract(const Tensor<S>& gray, bool training) const {
    const auto& c = config_;
    if (gray.rank() != 4 || gray.dim(1) != c.gray_channels() || gray.dim(2) != c.input_height ||
        gray.dim(3) != c.input_width)
        throw ShapeError("spatial_extract: grayscale input " + nn::shape_str(gray.shape()) + " does not match config");
    const Tensor<S> ls = spatial_reduce(gray);
    const Tensor<S> mixed = nn::add(spatial_msa(ls, training), ls);
    const Tensor<S> h = nn::relu(spatial_bn(spatial_conv1(mixed), training));
    SpatialFeatures<S> out;
    out.features = spatial_conv2(h);
    // Single spiking step from a zero state: no temporal memory.
    nn::LifState<S> once(static_cast<S>(c.theta), static_cast<S>(c.alpha));
    out.spikes = nn::lif_step(once, out.features, static_cast<S>(c.surrogate_width));
    return out;
}

template <typename S>
Tensor<S> Adsn<S>::guide_gate(const Tensor<S>& spatial, const Tensor<S>& event_features, bool training,
                              int step) const {
    const Tensor<S> delta = nn::mul(spatial, event_features);
    const Tensor<S> pooled = nn::adaptive_avg_pool2d(delta, 1, 1);
    return nn::sigmoid(nn::relu(gate_bn(gate_conv(pooled), training, step)));
}

template <typename S>
Tensor<S> Adsn<S>::guide_attention(const Tensor<S>& spatial, const Tensor<S>& event_features, bool training,
                                   int step) const {
    if (spatial.shape() != event_features.shape())
        throw ShapeError("guide_attention: spatial " + nn::shape_str(spatial.shape()) + " vs event " +
                         nn::shape_str(event_features.shape()));
    return guide_combine(event_features, guide_gate(spatial, event_features, training, step));
}

template <typename S>
Tensor<S> Adsn<S>::event_features(const Tensor<S>& event_frame, TemporalStates<S>& states, bool training,
                                  std::vector<Tensor<S>>* spikes, int step) const {
    const S w = static_cast<S>(config_.surrogate_width);
    const Tensor<S> s1 = nn::lif_step(states.msa, event_msa(event_frame, training, step), w);
    const Tensor<S> s2 = nn::lif_step(states.conv1, event_conv1(s1), w);
    if (spikes) {
        spikes->push_back(s1);
        spikes->push_back(s2);
    }
    return event_conv2(s2);
}

template <typename S>
Tensor<S> Adsn<S>::temporal_step(int t, const Tensor<S>& event_frame, const SpatialFeatures<S>& spatial,
                                 TemporalStates<S>& states, bool training, std::vector<Tensor<S>>* spikes) const {
    const auto& c = config_;
    if (t < 0 || t >= c.n_steps)
        throw DomainError("temporal_step: t=" + std::to_string(t) + " outside [0, " + std::to_string(c.n_steps) + ")");
    if (event_frame.rank() != 4 || event_frame.dim(1) != 2 || event_frame.dim(2) != c.input_height ||
        event_frame.dim(3) != c.input_width)
        throw ShapeError("temporal_step: event frame " + nn::shape_str(event_frame.shape()) + " does not match config");
    const S w = static_cast<S>(c.surrogate_width);
    const int N = event_frame.dim(0), F = c.feature_channels(), th = c.token_height(), tw = c.token_width();

    const Tensor<S> fe = event_features(event_frame, states, training, spikes, t);
    const Tensor<S> guided = guide_attention(spatial.features, fe, training, t);
    const Tensor<S> pooled = nn::adaptive_avg_pool2d(guided, th, tw);
    const Tensor<S> tokens = nn::permute(nn::reshape(pooled, {N, F, th * tw}), {0, 2, 1});
    const Tensor<S> attended =
        nn::reshape(nn::permute(attention(tokens), {0, 2, 1}), {N, F, th, tw});
    const Tensor<S> je = nn::lif_step(states.attn, attended, w);
    const Tensor<S> js = nn::adaptive_avg_pool2d(spatial.spikes, th, tw);
    const Tensor<S> fused = nn::add(je, js);
    const Tensor<S> p1 = nn::lif_step(states.head1, head1(nn::reshape(fused, {N, F * th * tw})), w);
    const Tensor<S> p2 = nn::lif_step(states.head2, head2(p1), w);
    if (spikes) {
        spikes->push_back(je);
        spikes->push_back(p1);
        spikes->push_back(p2);
    }
    return states.head2.v;
}

template <typename S>
AdsnOutput<S> Adsn<S>::forward(const AdsnBatch<S>& batch, ForwardOptions options) const {
    const auto& c = config_;
    if (static_cast<int>(batch.events.size()) != c.n_steps)
        throw DomainError("forward: batch has " + std::to_string(batch.events.size()) + " event frames, model expects " +
                          std::to_string(c.n_steps));
    AdsnOutput<S> out;
    const SpatialFeatures<S> spatial = spatial_extract(batch.gray, options.training);
    out.spikes.push_back(spatial.spikes);
    TemporalStates<S> states(static_cast<S>(c.theta), static_cast<S>(c.alpha));
    for (int t = 0; t < c.n_steps; ++t) {
        if (!options.carry_state) states.reset();
        out.potentials.push_back(temporal_step(t, batch.events[static_cast<std::size_t>(t)], spatial, states,
                                               options.training, &out.spikes));
    }
    switch (c.output_mode) {
        case OutputMode::MeanPotential: {
            Tensor<S> acc = out.potentials.front();
            for (std::size_t t = 1; t < out.potentials.size(); ++t) acc = nn::add(acc, out.potentials[t]);
            out.scores = nn::scale(acc, S(1) / static_cast<S>(c.n_steps));
            break;
        }
        case OutputMode::LastPotential: out.scores = out.potentials.back(); break;
        case OutputMode::LastSpike: out.scores = states.head2.p; break;
    }
    out.probs = nn::softmax(out.scores, 1);
    return out;
}

template <typename S>
Tensor<S> cross_entropy_loss(const Tensor<S>& probs, std::span<const int> labels) {
    if (probs.rank() != 2 || probs.dim(1) != kNumClasses)
        throw ShapeError("loss: expected N x 7 probabilities, got " + nn::shape_str(probs.shape()));
    for (int l : labels)
        if (l < 0 || l >= kNumClasses) throw DomainError("loss: invalid label " + std::to_string(l));
    const Tensor<S> logp = nn::log_clamped(nn::pick(probs, labels), S(1e-12));
    return nn::scale(nn::mean(logp), S(-1) / static_cast<S>(kNumClasses));
}

template <typename S>
Tensor<S> Adsn<S>::loss(const Tensor<S>& probs, std::span<const int> labels) const {
    return cross_entropy_loss(probs, labels);
}

template <typename S>
nn::TensorList<S> Adsn<S>::parameters() const {
    nn::TensorList<S> p;
    spatial_reduce.collect("spatial.reduce", p);
    spatial_msa.collect("spatial.msa", p);
    spatial_conv1.collect("spatial.conv1", p);
    spatial_bn.collect("spatial.bn", p);
    spatial_conv2.collect("spatial.conv2", p);
    event_msa.collect("temporal.msa", p);
    event_conv1.collect("temporal.conv1", p);
    event_conv2.collect("temporal.conv2", p);
    gate_conv.collect("guide.conv", p);
    gate_bn.collect("guide.bn", p);
    attention.collect("temporal.mhsa", p);
    head1.collect("head.fc1", p);
    head2.collect("head.fc2", p);
    return p;
}

template <typename S>
nn::TensorList<S> Adsn<S>::buffers() const {
    nn::TensorList<S> b;
    spatial_msa.collect_buffers("spatial.msa", b);
    spatial_bn.collect_buffers("spatial.bn", b);
    event_msa.collect_buffers("temporal.msa", b);
    gate_bn.collect_buffers("guide.bn", b);
    return b;
}

template <typename S>
nn::TensorList<S> Adsn<S>::state_tensors() const {
    auto all = parameters();
    auto b = buffers();
    all.insert(all.end(), b.begin(), b.end());
    return all;
}

template <typename S>
std::vector<nn::BatchNorm<S>*> Adsn<S>::batch_norms() {
    return {&spatial_msa.score_bn, &spatial_bn, &event_msa.score_bn, &gate_bn};
}

#define DVSNET_INSTANTIATE_ADSN(S)                                                          \
    template AdsnBatch<S> make_batch<S>(const std::vector<const Clip*>&, const AdsnConfig&); \
    template struct MultiScaleAttention<S>;                                                 \
    template Tensor<S> guide_combine(const Tensor<S>&, const Tensor<S>&);                   \
    template Tensor<S> cross_entropy_loss(const Tensor<S>&, std::span<const int>);          \
    template class Adsn<S>;

DVSNET_INSTANTIATE_ADSN(float)
DVSNET_INSTANTIATE_ADSN(double)

}  // namespace dvsnet
