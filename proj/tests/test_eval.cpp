#include <doctest.h>

#include <cmath>

#include "dvsnet/error.hpp"
#include "dvsnet/eval.hpp"

using namespace dvsnet;

namespace {

Dataset labelled_dataset(int per_class, int frames = 30) {
    Dataset d;
    for (int c = 0; c < kNumClasses; ++c) d.class_names.push_back("k" + std::to_string(c));
    for (int c = 0; c < kNumClasses; ++c)
        for (int i = 0; i < per_class; ++i) {
            Sequence s;
            s.id = std::to_string(c) + "_" + std::to_string(i);
            s.label = c;
            for (int f = 0; f < frames; ++f) {
                LumaFrame lf;
                const int idx = static_cast<int>(d.sequences.size());
                lf.data = Plane<std::uint8_t>::Zero(2, 3);
                lf.data(0, 0) = static_cast<std::uint8_t>(idx % 256);
                lf.data(0, 1) = static_cast<std::uint8_t>(idx / 256);
                lf.data(0, 2) = static_cast<std::uint8_t>(f);
                lf.t_us = f * 16667;
                s.frames.push_back(lf);
            }
            s.events = {3, 2, {}};
            d.sequences.push_back(s);
        }
    return d;
}

Predictor oracle() {
    return [](const std::vector<const Clip*>& clips) {
        std::vector<int> out;
        for (const auto* c : clips) out.push_back(c->label);
        return out;
    };
}

// Prediction hashes the sequence and the sampled start.
Predictor pseudo_random() {
    return [](const std::vector<const Clip*>& clips) {
        std::vector<int> out;
        for (const auto* c : clips) {
            const auto& g = c->first_gray.data;
            SplitMix64 rng(static_cast<std::uint64_t>((g(0, 1) * 256 + g(0, 0)) * 1000 + g(0, 2)));
            out.push_back(static_cast<int>(rng.below(kNumClasses)));
        }
        return out;
    };
}

}  // namespace

TEST_CASE("hand-counted confusion matrices") {
    const auto a = ConfusionMatrix::from_rows({{9, 1}, {5, 5}});
    CHECK(war(a) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(uar(a) == doctest::Approx(0.7).epsilon(1e-15));

    const auto b = ConfusionMatrix::from_rows({{90, 10}, {5, 5}});
    CHECK(war(b) == doctest::Approx(95.0 / 110).epsilon(1e-15));
    CHECK(uar(b) == doctest::Approx(0.7).epsilon(1e-15));

    CHECK(war(ConfusionMatrix::from_rows({{3, 0}, {0, 4}})) == 1.0);
    CHECK(uar(ConfusionMatrix::from_rows({{3, 0}, {0, 4}})) == 1.0);
    CHECK(war(ConfusionMatrix::from_rows({{0, 3}, {4, 0}})) == 0.0);
    CHECK(uar(ConfusionMatrix::from_rows({{6}})) == 1.0);
}

TEST_CASE("metric errors") {
    CHECK_THROWS_AS(war(ConfusionMatrix(3)), DomainError);
    try {
        uar(ConfusionMatrix::from_rows({{2, 0}, {0, 0}}), {"awake", "drowsy"});
        FAIL("expected DomainError");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("drowsy") != std::string::npos);
    }
    CHECK_THROWS(ConfusionMatrix::from_rows({{1, 2}, {3}}));
    CHECK_THROWS(ConfusionMatrix::from_rows({{1, -2}, {3, 4}}));
    ConfusionMatrix cm(3);
    CHECK_THROWS(cm.add(3, 0));
}

TEST_CASE("balanced matrices give equal WAR and UAR") {
    SplitMix64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + static_cast<int>(rng.below(6));
        const int per = 1 + static_cast<int>(rng.below(20));
        ConfusionMatrix cm(k);
        for (int c = 0; c < k; ++c)
            for (int i = 0; i < per; ++i) cm.add(c, static_cast<int>(rng.below(static_cast<std::uint64_t>(k))));
        CHECK(war(cm) == doctest::Approx(uar(cm)).epsilon(1e-12));
    }
}

TEST_CASE("duplicating a class changes WAR but not UAR") {
    auto cm = ConfusionMatrix::from_rows({{8, 2, 0}, {1, 3, 1}, {0, 4, 6}});
    auto dup = cm;
    dup.counts.row(1) *= 2;
    CHECK(uar(dup) == doctest::Approx(uar(cm)).epsilon(1e-15));
    CHECK(war(dup) != doctest::Approx(war(cm)));
}

TEST_CASE("class recalls") {
    const auto r = class_recalls(ConfusionMatrix::from_rows({{1, 3}, {0, 0}}));
    CHECK(r[0] == 0.25);
    CHECK(std::isnan(r[1]));
}

TEST_CASE("oracle predictor scores perfectly") {
    const auto d = labelled_dataset(3);
    const auto rep = evaluate_protocol(oracle(), d, ClipSpec{}, 20, 5);
    CHECK(rep.war_per_rep.size() == 20);
    for (double w : rep.war_per_rep) CHECK(w == 1.0);
    for (double u : rep.uar_per_rep) CHECK(u == 1.0);
    CHECK(rep.war_mean == 1.0);
    CHECK(rep.war_std == 0.0);
    CHECK(rep.pooled.total() == 20 * 21);
}

TEST_CASE("random predictor sits near chance") {
    const auto d = labelled_dataset(60);
    const auto rep = evaluate_protocol(pseudo_random(), d, ClipSpec{}, 20, 9);
    const double n = static_cast<double>(rep.pooled.total());
    const double p = 1.0 / kNumClasses;
    const double sigma = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(war(rep.pooled) - p) < 4 * sigma);
}

TEST_CASE("protocol report is a function of the seed") {
    const auto d = labelled_dataset(5);
    const auto a = evaluate_protocol(pseudo_random(), d, ClipSpec{}, 6, 3, 1);
    const auto b = evaluate_protocol(pseudo_random(), d, ClipSpec{}, 6, 3, 4);
    CHECK(a.machine() == b.machine());
    CHECK(a.table() == b.table());
    const auto c = evaluate_protocol(pseudo_random(), d, ClipSpec{}, 6, 4, 1);
    CHECK(a.machine() != c.machine());
    // Extra repetitions leave the earlier ones untouched.
    const auto longer = evaluate_protocol(pseudo_random(), d, ClipSpec{}, 9, 3, 2);
    for (int r = 0; r < 6; ++r) CHECK(longer.war_per_rep[static_cast<std::size_t>(r)] == a.war_per_rep[static_cast<std::size_t>(r)]);
}

TEST_CASE("report statistics and format") {
    const auto d = labelled_dataset(4);
    const auto rep = evaluate_protocol(pseudo_random(), d, parse_clip_spec("E8-S7"), 5, 2);
    double mean = 0;
    for (double w : rep.war_per_rep) mean += w;
    mean /= 5;
    double ss = 0;
    for (double w : rep.war_per_rep) ss += (w - mean) * (w - mean);
    CHECK(rep.war_mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(rep.war_std == doctest::Approx(std::sqrt(ss / 4)).epsilon(1e-12));
    const auto m = rep.machine();
    CHECK(m.find("protocol=E8-S7\n") != std::string::npos);
    CHECK(m.find("clip_frames=57\n") != std::string::npos);
    CHECK(m.find("reps=5\n") != std::string::npos);
    CHECK(m.find("acc_k6=") != std::string::npos);
    CHECK(rep.table().find("WAR") != std::string::npos);
    CHECK_THROWS(evaluate_protocol(oracle(), Dataset{}, ClipSpec{}, 2, 1));
}
