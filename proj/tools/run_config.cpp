#include "run_config.hpp"

#include <fstream>

#include "dvsnet/error.hpp"

namespace dvsnet::cli {

namespace {

bool strip_prefix(const std::string& key, const std::string& prefix, std::string& rest) {
    if (key.rfind(prefix, 0) != 0) return false;
    rest = key.substr(prefix.size());
    return true;
}

void set_v2e(V2eParams& p, const std::string& key, const std::string& value) {
    if (key == "theta_on") p.theta_on = parse_double(key, value);
    else if (key == "theta_off") p.theta_off = parse_double(key, value);
    else if (key == "sigma_theta") p.sigma_theta = parse_double(key, value);
    else if (key == "f3db_max") p.f3db_max = parse_double(key, value);
    else if (key == "bw_floor") p.bw_floor = parse_double(key, value);
    else if (key == "leak_rate") p.leak_rate = parse_double(key, value);
    else if (key == "noise_rate") p.noise_rate = parse_double(key, value);
    else if (key == "noise_bright_factor") p.noise_bright_factor = parse_double(key, value);
    else if (key == "filter") {
        if (value == "euler") p.filter = FilterKind::Euler;
        else if (value == "exact") p.filter = FilterKind::Exact;
        else throw DomainError("v2e.filter must be euler or exact");
    } else throw DomainError("unknown key 'v2e." + key + "'");
}

void set_synth(SynthParams& p, const std::string& key, const std::string& value) {
    if (key == "classes") p.classes = static_cast<int>(parse_int(key, value));
    else if (key == "train_per_class") p.train_per_class = static_cast<int>(parse_int(key, value));
    else if (key == "test_per_class") p.test_per_class = static_cast<int>(parse_int(key, value));
    else if (key == "length_frames") p.length_frames = static_cast<int>(parse_int(key, value));
    else if (key == "width") p.width = static_cast<int>(parse_int(key, value));
    else if (key == "height") p.height = static_cast<int>(parse_int(key, value));
    else if (key == "fps") p.fps = parse_double(key, value);
    else if (key == "pixel_noise") p.pixel_noise = parse_double(key, value);
    else throw DomainError("unknown key 'synth." + key + "'");
}

void set_eval(EvalSettings& e, const std::string& key, const std::string& value) {
    if (key == "protocol") {
        const double fps = e.spec.fps;
        e.spec = parse_clip_spec(value);
        e.spec.fps = fps;
    } else if (key == "fps") e.spec.fps = parse_double(key, value);
    else if (key == "reps") e.reps = static_cast<int>(parse_int(key, value));
    else if (key == "batch_size") e.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "split") e.split = value;
    else throw DomainError("unknown key 'eval." + key + "'");
}

}  // namespace

RunConfig::RunConfig() {
    // Desk-scale model matched to the synthetic 32x24 data.
    model.input_height = 24;
    model.input_width = 32;
    model.base_channels = 8;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    std::string rest;
    if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (strip_prefix(key, "v2e.", rest)) set_v2e(v2e, rest, value);
    else if (strip_prefix(key, "model.", rest)) {
        if (rest == "seed") throw DomainError("unknown key 'model.seed' (use seed)");
        apply_config_value(model, rest, value);
    } else if (strip_prefix(key, "train.", rest)) {
        if (rest == "seed") throw DomainError("unknown key 'train.seed' (use seed)");
        apply_train_value(train, rest, value);
    } else if (strip_prefix(key, "eval.", rest)) set_eval(eval, rest, value);
    else if (strip_prefix(key, "synth.", rest)) set_synth(synth, rest, value);
    else throw DomainError("unknown key '" + key + "'");
}

void RunConfig::merge_file(const std::filesystem::path& path) {
    for (const auto& [k, v] : read_key_values(path)) set(k, v);
}

void RunConfig::finalize() {
    v2e.seed = seed;
    model.seed = seed;
    train.seed = seed;
    synth.seed = seed;
    v2e.validate();
    model.validate();
    train.validate();
    eval.spec.validate();
    if (eval.reps < 1) throw DomainError("eval.reps must be >= 1");
    if (eval.batch_size < 1) throw DomainError("eval.batch_size must be >= 1");
    synth.validate();
}

KeyValues RunConfig::resolved() const {
    KeyValues kv;
    kv["seed"] = std::to_string(seed);
    kv["v2e.theta_on"] = format_double(v2e.theta_on);
    kv["v2e.theta_off"] = format_double(v2e.theta_off);
    kv["v2e.sigma_theta"] = format_double(v2e.sigma_theta);
    kv["v2e.f3db_max"] = format_double(v2e.f3db_max);
    kv["v2e.bw_floor"] = format_double(v2e.bw_floor);
    kv["v2e.leak_rate"] = format_double(v2e.leak_rate);
    kv["v2e.noise_rate"] = format_double(v2e.noise_rate);
    kv["v2e.noise_bright_factor"] = format_double(v2e.noise_bright_factor);
    kv["v2e.filter"] = v2e.filter == FilterKind::Euler ? "euler" : "exact";
    for (const auto& [k, v] : parse_key_values(format_config(model)))
        if (k != "seed") kv["model." + k] = v;
    for (const auto& [k, v] : train_key_values(train))
        if (k != "seed") kv["train." + k] = v;
    kv["eval.protocol"] = eval.spec.name();
    kv["eval.fps"] = format_double(eval.spec.fps);
    kv["eval.reps"] = std::to_string(eval.reps);
    kv["eval.batch_size"] = std::to_string(eval.batch_size);
    kv["eval.split"] = eval.split;
    kv["synth.classes"] = std::to_string(synth.classes);
    kv["synth.train_per_class"] = std::to_string(synth.train_per_class);
    kv["synth.test_per_class"] = std::to_string(synth.test_per_class);
    kv["synth.length_frames"] = std::to_string(synth.length_frames);
    kv["synth.width"] = std::to_string(synth.width);
    kv["synth.height"] = std::to_string(synth.height);
    kv["synth.fps"] = format_double(synth.fps);
    kv["synth.pixel_noise"] = format_double(synth.pixel_noise);
    return kv;
}

void write_resolved(const std::filesystem::path& path, const RunConfig& config) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << format_key_values(config.resolved());
}

}  // namespace dvsnet::cli
