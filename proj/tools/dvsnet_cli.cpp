#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "dvsnet/error.hpp"
#include "dvsnet/eval.hpp"
#include "dvsnet/events.hpp"
#include "dvsnet/gradcheck_suite.hpp"
#include "dvsnet/ingest.hpp"
#include "dvsnet/synth.hpp"
#include "dvsnet/training.hpp"
#include "dvsnet/v2e.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace dvsnet;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Common {
    std::vector<std::string> config_files;
    std::vector<std::string> sets;
    long long seed = -1;
    int threads = 1;

    cli::RunConfig resolve() const {
        cli::RunConfig rc;
        for (const auto& f : config_files) rc.merge_file(f);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0) throw DomainError("--set expects key=value, got '" + s + "'");
            rc.set(s.substr(0, eq), s.substr(eq + 1));
        }
        if (seed >= 0) rc.seed = static_cast<std::uint64_t>(seed);
        rc.finalize();
        return rc;
    }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_files, "key=value config file (repeatable, later files win)");
    cmd->add_option("--set", c.sets, "override one key, e.g. --set train.epochs=50");
    cmd->add_option("--seed", c.seed, "seed for every random stream");
    cmd->add_option("--threads", c.threads, "worker threads; results do not depend on it")->check(CLI::PositiveNumber);
}

void out_line(const std::string& kv) { std::cout << "#out " << kv << "\n"; }

std::string summary(const EventStream& s) {
    std::size_t on = 0;
    for (const auto& e : s.events) on += e.polarity == Polarity::On;
    return std::to_string(s.events.size()) + " events (" + std::to_string(on) + " on, " +
           std::to_string(s.events.size() - on) + " off)";
}

// --- convert ---------------------------------------------------------------

struct ConvertArgs {
    Common common;
    std::string input, output;
    bool csv = false;
};

int cmd_convert(const ConvertArgs& a) {
    const auto rc = a.common.resolve();
    const fs::path in(a.input), out(a.output);
    const StreamFormat format = a.csv ? StreamFormat::Csv : StreamFormat::Evt1;
    const char* ext = a.csv ? "events.csv" : "events.evt1";
    std::size_t total = 0;

    auto convert_one = [&](const fs::path& seq_dir, const fs::path& target, const std::string& name) {
        SequenceMeta meta;
        const auto frames = read_frame_directory(seq_dir, &meta);
        const auto stream = convert_video(frames, rc.v2e, a.common.threads);
        if (target.has_parent_path()) fs::create_directories(target.parent_path());
        write_stream(target, stream, format);
        std::cout << name << ": " << summary(stream) << "\n";
        out_line("events[" + name + "]=" + std::to_string(stream.events.size()));
        total += stream.events.size();
    };

    if (fs::is_directory(in / "frames")) {
        convert_one(in, out, in.filename().string());
        cli::write_resolved(out.string() + ".cfg", rc);
    } else if (fs::exists(in / "labels.txt")) {
        for (const std::string split : {"train", "test"}) {
            if (!fs::is_directory(in / split)) continue;
            std::vector<fs::path> dirs;
            for (const auto& e : fs::directory_iterator(in / split))
                if (e.is_directory()) dirs.push_back(e.path());
            std::sort(dirs.begin(), dirs.end());
            for (const auto& d : dirs)
                convert_one(d, out / split / d.filename() / ext, split + "/" + d.filename().string());
        }
        fs::create_directories(out);
        cli::write_resolved(out / "resolved.cfg", rc);
    } else {
        throw DataError(in.string() + " is neither a sequence directory nor a dataset root");
    }
    std::cout << "total: " << total << " events\n";
    out_line("events_total=" + std::to_string(total));
    return 0;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
    Common common;
    std::string output;
};

int cmd_synth(const SynthArgs& a) {
    const auto rc = a.common.resolve();
    synth_dataset(a.output, rc.synth);
    cli::write_resolved(fs::path(a.output) / "resolved.cfg", rc);
    const int n_train = rc.synth.classes * rc.synth.train_per_class;
    const int n_test = rc.synth.classes * rc.synth.test_per_class;
    std::cout << "wrote " << n_train << " train and " << n_test << " test sequences to " << a.output << "\n";
    out_line("train_sequences=" + std::to_string(n_train));
    out_line("test_sequences=" + std::to_string(n_test));
    return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
    Common common;
    std::string data, output;
    int epochs = 0;
    bool cache = false;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    auto rc = a.common.resolve();
    if (a.epochs > 0) rc.train.epochs = a.epochs;
    rc.model.n_steps = rc.train.clip_spec.x;
    rc.finalize();
    const fs::path out(a.output);
    fs::create_directories(out);
    cli::write_resolved(out / "resolved.cfg", rc);

    const Dataset train = load_split(a.data, "train", rc.v2e, a.common.threads, a.cache);
    Trainer trainer(rc.model, rc.train);
    std::ofstream history(out / "history.csv");
    history << "epoch,loss,war\n";
    const auto t0 = std::chrono::steady_clock::now();
    const auto stats = trainer.fit(train, [&](const EpochStats& s) {
        history << s.epoch << "," << format_double(s.mean_loss) << "," << format_double(s.war) << "\n";
        if (!a.quiet) {
            std::printf("epoch %4d  loss %.5f  war %.3f\n", s.epoch, s.mean_loss, s.war);
            std::fflush(stdout);
        }
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_model(out / "model.ckpt", trainer.model());
    write_adsn_config(out / "model.cfg", trainer.model().config());
    std::cerr << "trained " << stats.size() << " epochs in " << secs << " s\n";
    out_line("epochs=" + std::to_string(stats.size()));
    out_line("final_loss=" + format_double(stats.back().mean_loss));
    out_line("final_train_war=" + format_double(stats.back().war));
    return 0;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    Common common;
    std::string data, model_dir, output, protocol, split;
    int reps = 0;
};

int cmd_eval(const EvalArgs& a) {
    auto rc = a.common.resolve();
    if (!a.protocol.empty()) rc.set("eval.protocol", a.protocol);
    if (a.reps > 0) rc.eval.reps = a.reps;
    if (!a.split.empty()) rc.eval.split = a.split;
    const fs::path model_dir(a.model_dir);
    const AdsnConfig mc = read_adsn_config(model_dir / "model.cfg");
    Adsn<float> model(mc);
    load_model(model_dir / "model.ckpt", model);
    if (mc.n_steps != rc.eval.spec.x)
        throw DomainError("protocol " + rc.eval.spec.name() + " uses " + std::to_string(rc.eval.spec.x) +
                          " event frames, model expects " + std::to_string(mc.n_steps));

    const Dataset data = load_split(a.data, rc.eval.split, rc.v2e, a.common.threads);
    const auto report = evaluate_protocol(model_predictor(model), data, rc.eval.spec, rc.eval.reps, rc.seed,
                                          a.common.threads, rc.eval.batch_size);
    std::cout << report.table();
    std::istringstream lines(report.machine());
    for (std::string line; std::getline(lines, line);) out_line(line);
    if (!a.output.empty()) {
        const fs::path out(a.output);
        fs::create_directories(out);
        std::ofstream(out / "report.txt") << report.table() << report.machine();
        cli::write_resolved(out / "resolved.cfg", rc);
    }
    return 0;
}

// --- gradcheck -------------------------------------------------------------

int cmd_gradcheck(const Common& c) {
    const auto rc = c.resolve();
    bool ok = true;
    for (const auto& k : run_gradcheck_suite(rc.seed)) {
        std::printf("%-22s max_rel %.3e  max_abs %.3e  n=%-6ld %s (< %.0e)\n", k.name.c_str(), k.result.max_rel_error,
                    k.result.max_abs_error, k.result.checked, k.passed() ? "ok  " : "FAIL", k.threshold);
        out_line("gradcheck_" + k.name + "=" + format_double(k.result.max_rel_error));
        ok = ok && k.passed();
    }
    out_line(std::string("gradcheck=") + (ok ? "pass" : "fail"));
    return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Event-camera simulation and spiking driver-state classification"};
    app.require_subcommand(1);

    ConvertArgs conv;
    auto* c_conv = app.add_subcommand("convert", "simulate DVS events for a sequence or a whole dataset");
    add_common(c_conv, conv.common);
    c_conv->add_option("--input", conv.input, "sequence directory or dataset root")->required();
    c_conv->add_option("--output", conv.output, "event file (sequence) or directory (dataset)")->required();
    c_conv->add_flag("--csv", conv.csv, "write t_us,x,y,p text instead of EVT1");

    SynthArgs syn;
    auto* c_syn = app.add_subcommand("synth", "write a synthetic labelled dataset");
    add_common(c_syn, syn.common);
    c_syn->add_option("--output", syn.output, "dataset root (must be empty)")->required();

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "train a model on the train split");
    add_common(c_tr, tr.common);
    c_tr->add_option("--data", tr.data, "dataset root")->required();
    c_tr->add_option("--output", tr.output, "run directory")->required();
    c_tr->add_option("--epochs", tr.epochs, "override train.epochs");
    c_tr->add_flag("--cache-events", tr.cache, "store simulated events.evt1 next to the frames");
    c_tr->add_flag("--quiet", tr.quiet, "no per-epoch progress");

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "repeated random-start evaluation");
    add_common(c_ev, ev.common);
    c_ev->add_option("--data", ev.data, "dataset root")->required();
    c_ev->add_option("--model", ev.model_dir, "run directory holding model.cfg and model.ckpt")->required();
    c_ev->add_option("--protocol", ev.protocol, "clip protocol, e.g. E4-S3");
    c_ev->add_option("--reps", ev.reps, "repetitions");
    c_ev->add_option("--split", ev.split, "dataset split (default test)");
    c_ev->add_option("--output", ev.output, "directory for report.txt");

    Common gc;
    auto* c_gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    add_common(c_gc, gc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (c_conv->parsed()) return cmd_convert(conv);
        if (c_syn->parsed()) return cmd_synth(syn);
        if (c_tr->parsed()) return cmd_train(tr);
        if (c_ev->parsed()) return cmd_eval(ev);
        if (c_gc->parsed()) return cmd_gradcheck(gc);
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::logic_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
