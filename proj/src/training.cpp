#include "dvsnet/training.hpp"

#include <cmath>
#include <sstream>

#include "dvsnet/error.hpp"
#include "dvsnet/nn/checkpoint.hpp"

namespace dvsnet {

void TrainConfig::validate() const {
    if (epochs < 1) throw DomainError("epochs must be >= 1");
    if (batch_size < 1) throw DomainError("batch_size must be >= 1");
    if (!(lr >= 0)) throw DomainError("lr must be >= 0");
    if (!(weight_decay >= 0)) throw DomainError("weight_decay must be >= 0");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw DomainError("betas must be in [0, 1)");
    if (bn_passes < 0) throw DomainError("bn_passes must be >= 0");
    clip_spec.validate();
}

nn::AdamConfig TrainConfig::adam() const {
    nn::AdamConfig a;
    a.lr = lr;
    a.beta1 = beta1;
    a.beta2 = beta2;
    a.weight_decay = weight_decay;
    return a;
}

void apply_train_value(TrainConfig& c, const std::string& key, const std::string& value) {
    if (key == "epochs") c.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "lr") c.lr = parse_double(key, value);
    else if (key == "weight_decay") c.weight_decay = parse_double(key, value);
    else if (key == "beta1") c.beta1 = parse_double(key, value);
    else if (key == "beta2") c.beta2 = parse_double(key, value);
    else if (key == "clip_norm") c.clip_norm = parse_double(key, value);
    else if (key == "protocol") {
        const double fps = c.clip_spec.fps;
        c.clip_spec = parse_clip_spec(value);
        c.clip_spec.fps = fps;
    } else if (key == "fps") c.clip_spec.fps = parse_double(key, value);
    else if (key == "bn_passes") c.bn_passes = static_cast<int>(parse_int(key, value));
    else if (key == "target_war") c.target_war = parse_double(key, value);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else throw DomainError("unknown training key '" + key + "'");
}

KeyValues train_key_values(const TrainConfig& c) {
    return {
        {"epochs", std::to_string(c.epochs)},
        {"batch_size", std::to_string(c.batch_size)},
        {"lr", format_double(c.lr)},
        {"weight_decay", format_double(c.weight_decay)},
        {"beta1", format_double(c.beta1)},
        {"beta2", format_double(c.beta2)},
        {"clip_norm", format_double(c.clip_norm)},
        {"protocol", c.clip_spec.name()},
        {"fps", format_double(c.clip_spec.fps)},
        {"bn_passes", std::to_string(c.bn_passes)},
        {"target_war", format_double(c.target_war)},
        {"seed", std::to_string(c.seed)},
    };
}

template <typename S>
std::vector<int> argmax_rows(const nn::Tensor<S>& probs) {
    const int n = probs.dim(0), k = probs.dim(1);
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (probs.value()[i * k + j] > probs.value()[i * k + best]) best = j;
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

template std::vector<int> argmax_rows(const nn::Tensor<float>&);
template std::vector<int> argmax_rows(const nn::Tensor<double>&);

namespace {

std::string parameter_norms(const nn::TensorList<float>& params) {
    std::ostringstream os;
    for (const auto& p : params) {
        const double norm = p.tensor.value().template cast<double>().norm();
        os << "\n  " << p.name << " |w|=" << norm;
    }
    return os.str();
}

}  // namespace

double train_step(Adsn<float>& model, nn::Adam<float>& adam, nn::TensorList<float>& params,
                  const AdsnBatch<float>& batch, double clip_norm, std::vector<int>* predictions,
                  double* grad_norm) {
    nn::zero_grad(params);
    const auto out = model.forward(batch, {.training = true});
    auto loss = model.loss(out.probs, batch.labels);
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericError("non-finite loss" + parameter_norms(params));
    loss.backward();
    const double norm = clip_norm > 0 ? nn::clip_grad_norm(params, clip_norm) : 0.0;
    if (grad_norm) *grad_norm = norm;
    adam.step(params);
    if (predictions) *predictions = argmax_rows(out.probs);
    return value;
}

Trainer::Trainer(AdsnConfig model_config, TrainConfig train_config)
    : model_(std::move(model_config)), config_(train_config), adam_(train_config.adam()) {
    config_.validate();
    if (model_.config().n_steps != config_.clip_spec.x)
        throw DomainError("model n_steps " + std::to_string(model_.config().n_steps) + " does not match protocol " +
                          config_.clip_spec.name());
    params_ = model_.parameters();
}

EpochStats Trainer::run_epoch(const Dataset& data) {
    if (data.sequences.empty()) throw DataError("training set is empty");
    SplitMix64 rng(split_seed(config_.seed, static_cast<std::uint64_t>(epoch_)));
    std::vector<int> order(data.sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    std::vector<Clip> clips;
    clips.reserve(order.size());
    for (int i : order) clips.push_back(sample_clip(data.sequences[static_cast<std::size_t>(i)], config_.clip_spec, rng));

    EpochStats stats;
    stats.epoch = epoch_;
    double loss_sum = 0;
    std::size_t correct = 0;
    const std::size_t bs = static_cast<std::size_t>(config_.batch_size);
    for (std::size_t b = 0; b < clips.size(); b += bs) {
        std::vector<const Clip*> chunk;
        for (std::size_t i = b; i < std::min(clips.size(), b + bs); ++i) chunk.push_back(&clips[i]);
        const auto batch = make_batch<float>(chunk, model_.config());
        std::vector<int> pred;
        double norm = 0;
        double loss = 0;
        try {
            loss = train_step(model_, adam_, params_, batch, config_.clip_norm, &pred, &norm);
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch_) + ", batch " + std::to_string(b / bs) + ": " +
                               e.what());
        }
        loss_sum += loss * static_cast<double>(chunk.size());
        stats.max_grad_norm = std::max(stats.max_grad_norm, norm);
        for (std::size_t i = 0; i < chunk.size(); ++i) correct += pred[i] == chunk[i]->label;
    }
    stats.mean_loss = loss_sum / static_cast<double>(clips.size());
    stats.war = static_cast<double>(correct) / static_cast<double>(clips.size());
    ++epoch_;
    return stats;
}

void Trainer::recalibrate_batch_norm(const Dataset& data, int passes) {
    if (passes <= 0) return;
    if (data.sequences.empty()) throw DataError("training set is empty");
    auto norms = model_.batch_norms();
    std::vector<float> saved;
    for (auto* bn : norms) {
        saved.push_back(bn->momentum);
        bn->running_mean.value().setZero();
        bn->running_var.value().setZero();
    }
    nn::NoGradGuard guard;
    SplitMix64 rng(split_seed(config_.seed, 0x42e7ull << 32));
    const std::size_t bs = static_cast<std::size_t>(config_.batch_size);
    int k = 0;
    for (int p = 0; p < passes; ++p) {
        std::vector<Clip> clips;
        for (const auto& seq : data.sequences) clips.push_back(sample_clip(seq, config_.clip_spec, rng));
        for (std::size_t b = 0; b < clips.size(); b += bs) {
            std::vector<const Clip*> chunk;
            for (std::size_t i = b; i < std::min(clips.size(), b + bs); ++i) chunk.push_back(&clips[i]);
            ++k;
            for (auto* bn : norms) bn->momentum = 1.0f / static_cast<float>(k);
            model_.forward(make_batch<float>(chunk, model_.config()), {.training = true});
        }
    }
    for (std::size_t i = 0; i < norms.size(); ++i) norms[i]->momentum = saved[i];
}

std::vector<EpochStats> Trainer::fit(const Dataset& data, const std::function<void(const EpochStats&)>& on_epoch) {
    std::vector<EpochStats> history;
    while (epoch_ < config_.epochs) {
        history.push_back(run_epoch(data));
        if (on_epoch) on_epoch(history.back());
        if (config_.target_war > 0 && history.back().war >= config_.target_war) break;
    }
    recalibrate_batch_norm(data, config_.bn_passes);
    return history;
}

void save_model(const std::filesystem::path& checkpoint, const Adsn<float>& model) {
    nn::save_checkpoint(checkpoint, model.state_tensors());
}

void load_model(const std::filesystem::path& checkpoint, Adsn<float>& model) {
    auto targets = model.state_tensors();
    nn::load_checkpoint(checkpoint, targets);
}

}  // namespace dvsnet
