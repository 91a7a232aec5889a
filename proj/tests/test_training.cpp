#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "dvsnet/error.hpp"
#include "dvsnet/synth.hpp"
#include "dvsnet/training.hpp"
#include "dvsnet/v2e.hpp"
#include "support/frame_baseline.hpp"

using namespace dvsnet;
namespace fs = std::filesystem;

namespace {

AdsnConfig tiny_model() {
    AdsnConfig c;
    c.input_height = 16;
    c.input_width = 24;
    c.base_channels = 4;
    c.attention_scales = {3, 5};
    c.heads = 2;
    c.head_hidden = 16;
    c.n_steps = 4;
    c.seed = 3;
    return c;
}

AdsnConfig desk_model() {
    AdsnConfig c;
    c.input_height = 24;
    c.input_width = 32;
    c.base_channels = 8;
    return c;
}

TrainConfig quick_train(int epochs) {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 8;
    t.seed = 11;
    return t;
}

Sequence synth_seq(int label, std::uint64_t seed) {
    SynthParams p;
    Sequence s;
    s.id = "c" + std::to_string(label) + "_" + std::to_string(seed);
    s.label = label;
    s.frames = synth_sequence(label, p, seed);
    s.events = convert_video(s.frames, V2eParams{});
    return s;
}

Dataset synth_data(int per_class, std::uint64_t seed) {
    Dataset d;
    d.class_names = synth_class_names();
    for (int c = 0; c < kNumClasses; ++c)
        for (int i = 0; i < per_class; ++i) d.sequences.push_back(synth_seq(c, seed * 1000 + c * 100 + i));
    return d;
}

std::vector<nn::Vec<float>> snapshot(const nn::TensorList<float>& list) {
    std::vector<nn::Vec<float>> out;
    for (const auto& p : list) out.push_back(p.tensor.value());
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("dvsnet_test_training_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters unchanged") {
    auto tc = quick_train(1);
    tc.lr = 0;
    Trainer trainer(tiny_model(), tc);
    const auto data = synth_data(1, 1);
    const auto before = snapshot(trainer.model().parameters());
    trainer.run_epoch(data);
    const auto after = snapshot(trainer.model().parameters());
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("single sample is memorized") {
    Dataset one;
    one.class_names = synth_class_names();
    one.sequences.push_back(synth_seq(2, 77));
    auto tc = quick_train(100);
    tc.lr = 1e-2;
    Trainer trainer(tiny_model(), tc);
    const auto history = trainer.fit(one);
    REQUIRE(history.size() == 100);
    const double limit = 0.01 * std::log(7.0) / 7;
    CHECK(history.back().mean_loss < limit);
    CHECK(history[19].mean_loss <= 0.5 * history[0].mean_loss);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto data = synth_data(1, 2);
    Trainer a(tiny_model(), quick_train(2)), b(tiny_model(), quick_train(2));
    const auto ha = a.fit(data), hb = b.fit(data);
    for (std::size_t i = 0; i < ha.size(); ++i) {
        CHECK(ha[i].mean_loss == hb[i].mean_loss);
        CHECK(ha[i].war == hb[i].war);
    }
    const auto pa = snapshot(a.model().state_tensors()), pb = snapshot(b.model().state_tensors());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("every parameter receives gradient") {
    const auto data = synth_data(2, 3);
    auto tc = quick_train(1);
    Trainer trainer(tiny_model(), tc);
    auto params = trainer.model().parameters();
    std::vector<bool> touched(params.size(), false);
    SplitMix64 rng(5);
    for (int b = 0; b < 3; ++b) {
        std::vector<Clip> clips;
        for (const auto& s : data.sequences) clips.push_back(sample_clip(s, tc.clip_spec, rng));
        std::vector<const Clip*> ptrs;
        for (const auto& c : clips) ptrs.push_back(&c);
        const auto batch = make_batch<float>(ptrs, trainer.model().config());
        train_step(trainer.model(), trainer.optimizer(), params, batch, tc.clip_norm);
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].tensor.has_grad() && params[i].tensor.grad().cwiseAbs().maxCoeff() > 0) touched[i] = true;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        INFO(params[i].name);
        CHECK(touched[i]);
    }
}

TEST_CASE("loss decreases over the first epochs") {
    const auto data = synth_data(10, 4);
    auto tc = quick_train(10);
    tc.batch_size = 32;
    Trainer trainer(desk_model(), tc);
    const auto h = trainer.fit(data);
    int rises = 0;
    for (std::size_t i = 1; i < h.size(); ++i) rises += h[i].mean_loss > h[i - 1].mean_loss;
    CHECK(rises <= 2);
    CHECK(h.back().mean_loss < h.front().mean_loss);
}

TEST_CASE("checkpoint reproduces the forward pass") {
    const auto data = synth_data(1, 6);
    Trainer trainer(tiny_model(), quick_train(2));
    trainer.fit(data);
    const auto dir = scratch("ckpt");
    fs::create_directories(dir);
    save_model(dir / "m.ckpt", trainer.model());

    Adsn<float> loaded(tiny_model());
    load_model(dir / "m.ckpt", loaded);
    SplitMix64 rng(9);
    const Clip clip = sample_clip(data.sequences[3], ClipSpec{}, rng);
    const auto batch = make_batch<float>({&clip}, tiny_model());
    CHECK(trainer.model().forward(batch).probs.value() == loaded.forward(batch).probs.value());

    save_model(dir / "again.ckpt", loaded);
    CHECK(slurp(dir / "m.ckpt") == slurp(dir / "again.ckpt"));

    auto other = tiny_model();
    other.base_channels = 6;
    Adsn<float> mismatched(other);
    try {
        load_model(dir / "m.ckpt", mismatched);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("spatial.") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("trainer rejects a protocol that does not match the model") {
    auto tc = quick_train(1);
    tc.clip_spec = parse_clip_spec("E8-S7");
    CHECK_THROWS_AS(Trainer(tiny_model(), tc), DomainError);
    Trainer ok(tiny_model(), quick_train(1));
    CHECK_THROWS_AS(ok.run_epoch(Dataset{}), DataError);
}

TEST_CASE("train settings round trip through key values") {
    TrainConfig t;
    apply_train_value(t, "lr", "0.005");
    apply_train_value(t, "protocol", "E8-S7");
    apply_train_value(t, "bn_passes", "2");
    CHECK(t.lr == 0.005);
    CHECK(t.clip_spec.x == 8);
    TrainConfig back;
    for (const auto& [k, v] : train_key_values(t)) apply_train_value(back, k, v);
    CHECK(train_key_values(back) == train_key_values(t));
    CHECK_THROWS_AS(apply_train_value(t, "momentum", "0.9"), DomainError);
    t.epochs = 0;
    CHECK_THROWS_AS(t.validate(), DomainError);
}

TEST_CASE("synthetic dataset layout") {
    const auto root = scratch("synth");
    SynthParams p;
    p.length_frames = 8;
    synth_dataset(root, p);
    int train_dirs = 0, test_dirs = 0;
    for (const auto& e : fs::directory_iterator(root / "train")) train_dirs += e.is_directory();
    for (const auto& e : fs::directory_iterator(root / "test")) test_dirs += e.is_directory();
    CHECK(train_dirs == 70);
    CHECK(test_dirs == 35);
    CHECK(read_labels(root).size() == 7);
    CHECK_THROWS_AS(synth_dataset(root, p), DataError);

    const auto again = scratch("synth_again");
    synth_dataset(again, p);
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), root);
        CHECK(slurp(e.path()) == slurp(again / rel));
    }
    fs::remove_all(root);
    fs::remove_all(again);
}

TEST_CASE("blink classes are not separable from single frames") {
    SynthParams p;
    Dataset train, test;
    for (int i = 0; i < 20; ++i) {
        for (int label : {1, 2}) {
            Sequence s;
            s.label = label;
            s.frames = synth_sequence(label, p, 500 + static_cast<std::uint64_t>(i) * 2 + static_cast<std::uint64_t>(label));
            (i < 14 ? train : test).sequences.push_back(std::move(s));
        }
    }
    const auto w = ref::fit_logistic(ref::frame_samples(train, 1, 2, 8, 1));
    const double acc = ref::logistic_accuracy(w, ref::frame_samples(test, 1, 2, 16, 2));
    CHECK(acc <= 0.6);
}
