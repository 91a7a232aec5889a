#include "dvsnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "dvsnet/config.hpp"
#include "dvsnet/error.hpp"
#include "dvsnet/training.hpp"

namespace dvsnet {

ConfusionMatrix::ConfusionMatrix(int classes) {
    if (classes < 1) throw DomainError("confusion matrix needs at least one class");
    counts.setZero(classes, classes);
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
    ConfusionMatrix cm(static_cast<int>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) throw ShapeError("confusion matrix must be square");
        for (std::size_t j = 0; j < rows.size(); ++j) {
            if (rows[i][j] < 0) throw DomainError("confusion counts must be non-negative");
            cm.counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return cm;
}

void ConfusionMatrix::add(int truth, int predicted) {
    if (truth < 0 || truth >= classes() || predicted < 0 || predicted >= classes())
        throw DomainError("confusion matrix index out of range");
    ++counts(truth, predicted);
}

double war(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total <= 0) throw DomainError("WAR of an empty confusion matrix");
    return static_cast<double>(cm.counts.trace()) / static_cast<double>(total);
}

std::vector<double> class_recalls(const ConfusionMatrix& cm) {
    std::vector<double> r(static_cast<std::size_t>(cm.classes()));
    for (int c = 0; c < cm.classes(); ++c) {
        const auto row = cm.counts.row(c).sum();
        r[static_cast<std::size_t>(c)] = row > 0 ? static_cast<double>(cm.counts(c, c)) / static_cast<double>(row)
                                                 : std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

double uar(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    double sum = 0;
    const auto r = class_recalls(cm);
    for (int c = 0; c < cm.classes(); ++c) {
        if (std::isnan(r[static_cast<std::size_t>(c)])) {
            const std::string name = static_cast<std::size_t>(c) < class_names.size()
                                         ? class_names[static_cast<std::size_t>(c)]
                                         : std::to_string(c);
            throw DomainError("UAR undefined: class " + name + " has no samples");
        }
        sum += r[static_cast<std::size_t>(c)];
    }
    return sum / cm.classes();
}

Predictor model_predictor(const Adsn<float>& model) {
    return [&model](const std::vector<const Clip*>& clips) {
        nn::NoGradGuard guard;
        const auto batch = make_batch<float>(clips, model.config());
        return argmax_rows(model.forward(batch).probs);
    };
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    return {mean, v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0};
}

ConfusionMatrix run_repetition(const Predictor& predict, const Dataset& data, const ClipSpec& spec,
                               std::uint64_t seed, int rep, int batch_size) {
    SplitMix64 rng(split_seed(seed, static_cast<std::uint64_t>(rep)));
    std::vector<Clip> clips;
    clips.reserve(data.sequences.size());
    for (const auto& s : data.sequences) clips.push_back(sample_clip(s, spec, rng));
    ConfusionMatrix cm(kNumClasses);
    for (std::size_t b = 0; b < clips.size(); b += static_cast<std::size_t>(batch_size)) {
        std::vector<const Clip*> chunk;
        for (std::size_t i = b; i < std::min(clips.size(), b + static_cast<std::size_t>(batch_size)); ++i)
            chunk.push_back(&clips[i]);
        const auto pred = predict(chunk);
        if (pred.size() != chunk.size()) throw DomainError("predictor returned the wrong number of labels");
        for (std::size_t i = 0; i < chunk.size(); ++i) cm.add(chunk[i]->label, pred[i]);
    }
    return cm;
}

}  // namespace

ProtocolReport evaluate_protocol(const Predictor& predict, const Dataset& data, const ClipSpec& spec, int reps,
                                 std::uint64_t seed, int threads, int batch_size) {
    spec.validate();
    if (data.sequences.empty()) throw DataError("evaluation set is empty");
    if (reps < 1) throw DomainError("reps must be >= 1");
    if (batch_size < 1) throw DomainError("batch_size must be >= 1");
    std::vector<ConfusionMatrix> cms(static_cast<std::size_t>(reps));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(reps));
    const int workers = std::clamp(threads, 1, reps);
    auto work = [&](int first) {
        for (int r = first; r < reps; r += workers) {
            try {
                cms[static_cast<std::size_t>(r)] = run_repetition(predict, data, spec, seed, r, batch_size);
            } catch (...) {
                errors[static_cast<std::size_t>(r)] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    ProtocolReport rep;
    rep.spec = spec;
    rep.reps = reps;
    rep.seed = seed;
    rep.class_names = data.class_names;
    for (const auto& cm : cms) {
        rep.pooled.counts += cm.counts;
        rep.war_per_rep.push_back(war(cm));
        // Classes absent from the test split are left out of UAR.
        double sum = 0;
        int present = 0;
        for (double r : class_recalls(cm))
            if (!std::isnan(r)) sum += r, ++present;
        rep.uar_per_rep.push_back(sum / present);
    }
    std::tie(rep.war_mean, rep.war_std) = mean_std(rep.war_per_rep);
    std::tie(rep.uar_mean, rep.uar_std) = mean_std(rep.uar_per_rep);
    return rep;
}

namespace {

std::string class_label(const ProtocolReport& r, int c) {
    return static_cast<std::size_t>(c) < r.class_names.size() ? r.class_names[static_cast<std::size_t>(c)]
                                                              : "class" + std::to_string(c);
}

}  // namespace

std::string ProtocolReport::table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "protocol " << spec.name() << "  (" << clip_duration_frames(spec) << " frames, "
       << clip_duration_seconds(spec) * 1000 << " ms), " << reps << " repetitions\n";
    os << "  WAR  " << 100 * war_mean << " +/- " << 100 * war_std << " %\n";
    os << "  UAR  " << 100 * uar_mean << " +/- " << 100 * uar_std << " %\n";
    const auto acc = class_accuracy();
    for (int c = 0; c < pooled.classes(); ++c) {
        if (std::isnan(acc[static_cast<std::size_t>(c)])) continue;
        os << "  " << std::left << std::setw(14) << class_label(*this, c) << std::right << std::setw(7)
           << 100 * acc[static_cast<std::size_t>(c)] << " %\n";
    }
    return os.str();
}

std::string ProtocolReport::machine() const {
    std::ostringstream os;
    os << "protocol=" << spec.name() << "\n";
    os << "clip_frames=" << clip_duration_frames(spec) << "\n";
    os << "reps=" << reps << "\n";
    os << "war=" << format_double(war_mean) << "\n";
    os << "war_std=" << format_double(war_std) << "\n";
    os << "uar=" << format_double(uar_mean) << "\n";
    os << "uar_std=" << format_double(uar_std) << "\n";
    for (int r = 0; r < reps; ++r)
        os << "war_rep" << r << "=" << format_double(war_per_rep[static_cast<std::size_t>(r)]) << "\n";
    const auto acc = class_accuracy();
    for (int c = 0; c < pooled.classes(); ++c)
        if (!std::isnan(acc[static_cast<std::size_t>(c)]))
            os << "acc_" << class_label(*this, c) << "=" << format_double(acc[static_cast<std::size_t>(c)]) << "\n";
    return os.str();
}

}  // namespace dvsnet
