#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>

#include "cunet/checkpoint.hpp"
#include "cunet/config.hpp"
#include "cunet/data.hpp"
#include "cunet/errors.hpp"
#include "cunet/gradcheck_suite.hpp"
#include "cunet/log.hpp"
#include "cunet/metrics.hpp"
#include "cunet/model.hpp"
#include "cunet/overlay.hpp"
#include "cunet/train.hpp"

namespace fs = std::filesystem;
using namespace cunet;

namespace {

constexpr const char* kModelPrefix = "model.";

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kInput = 3, kIo = 4, kNumeric = 5, kCheckFailed = 6 };

void print_error(const std::string& kind, const std::string& message) {
    nlohmann::ordered_json j;
    j["error"] = kind;
    j["message"] = message;
    std::cerr << j.dump() << '\n';
}

/// Layered key/value settings: config file first, then any flag given on the command line.
struct Settings {
    std::string config_path;
    std::map<std::string, std::string> flags;

    void bind(CLI::App& app, const std::vector<std::string>& keys, const std::string& prefix = "") {
        for (const auto& key : keys) {
            const std::string name = prefix + key;
            app.add_option_function<std::string>(
                "--" + name, [this, name](const std::string& v) { flags[name] = v; }, "override config key " + name);
        }
    }

    KeyValues resolve() const {
        KeyValues kv = config_path.empty() ? KeyValues{} : KeyValues::load(config_path);
        for (const auto& [k, v] : flags) kv.set(k, v);
        return kv;
    }
};

KeyValues strip_prefix(const KeyValues& kv, const std::string& prefix, bool keep_prefixed) {
    KeyValues out;
    for (const auto& [k, v] : kv.values()) {
        const bool prefixed = k.starts_with(prefix);
        if (prefixed == keep_prefixed) out.set(prefixed ? k.substr(prefix.size()) : k, v);
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

CUNet load_model(const std::string& checkpoint, const std::string& model_config) {
    const fs::path cfg_path = model_config.empty() ? fs::path(checkpoint).parent_path() / "model.cfg" : fs::path(model_config);
    if (!fs::exists(cfg_path)) throw IoError("model config not found: " + cfg_path.string());
    CUNet model(model_config_from(KeyValues::load(cfg_path.string())));
    load_checkpoint_into(checkpoint, model.params());
    return model;
}

// ---- synth -----------------------------------------------------------------

int run_synth(const Settings& settings, const std::string& out_dir) {
    const KeyValues kv = settings.resolve();
    kv.require_known(synth_config_keys());
    const SynthConfig cfg = synth_config_from(kv);
    const auto samples = generate_phantoms(cfg.count, cfg.phantom, cfg.seed);
    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.id);
    std::mt19937_64 rng(cfg.seed);
    const DatasetSplit split = split_dataset(ids, rng);
    write_dataset(out_dir, split, samples);
    nlohmann::ordered_json j;
    j["out_dir"] = out_dir;
    j["train"] = split.train.size();
    j["val"] = split.val.size();
    j["test"] = split.test.size();
    std::cout << j.dump() << '\n';
    return kOk;
}

// ---- train -----------------------------------------------------------------

int run_train(const Settings& settings, const std::string& data_dir, const std::string& out_dir) {
    const KeyValues kv = settings.resolve();
    std::vector<std::string> known = train_config_keys();
    for (const auto& k : model_config_keys()) known.push_back(kModelPrefix + k);
    kv.require_known(known);

    const TrainConfig tcfg = train_config_from(strip_prefix(kv, kModelPrefix, false));
    const CUNetConfig mcfg = model_config_from(strip_prefix(kv, kModelPrefix, true));

    const auto train = read_split(data_dir, SplitKind::kTrain);
    const auto val = read_split(data_dir, SplitKind::kVal);
    if (train.empty()) throw InputError("no training cases in " + data_dir);

    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "model.cfg", model_config_to_kv(mcfg).str());
    write_text(fs::path(out_dir) / "train.cfg", train_config_to_kv(tcfg).str());

    CUNet model(mcfg);
    Trainer trainer(model, tcfg);
    const auto start = std::chrono::steady_clock::now();
    const TrainState state = trainer.fit(train, val);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    save_checkpoint((fs::path(out_dir) / "best.ckpt").string(), model.params());

    std::string csv = "epoch,lr,omega,train_loss,val_loss,steps,skipped\n";
    for (const auto& r : state.history) {
        char row[256];
        std::snprintf(row, sizeof row, "%zu,%.17g,%.17g,%.17g,%.17g,%zu,%zu\n", r.epoch, r.lr, r.omega, r.train_loss,
                      r.val_loss, r.steps, r.skipped);
        csv += row;
    }
    write_text(fs::path(out_dir) / "history.csv", csv);

    nlohmann::ordered_json j;
    j["epochs"] = state.epoch;
    j["best_epoch"] = state.best_epoch;
    j["best_val_loss"] = state.best_val;
    j["stopped_early"] = state.stopped_early;
    j["seconds"] = seconds;
    j["checkpoint"] = (fs::path(out_dir) / "best.ckpt").string();
    std::cout << j.dump() << '\n';
    return kOk;
}

// ---- eval ------------------------------------------------------------------

int run_eval(const std::string& checkpoint, const std::string& model_config, const std::string& data_dir,
             const std::string& split_name_arg, const std::string& report, bool undefined_empty) {
    static const std::map<std::string, SplitKind> kSplits{
        {"train", SplitKind::kTrain}, {"val", SplitKind::kVal}, {"test", SplitKind::kTest}};
    const CUNet model = load_model(checkpoint, model_config);
    const auto cases = read_split(data_dir, kSplits.at(split_name_arg));
    const DatasetReport rep = evaluate(model, cases, undefined_empty ? EmptyPolicy::kUndefined : EmptyPolicy::kOne);
    if (const fs::path parent = fs::path(report).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_report(rep, report + ".csv", report + ".json");
    std::cout << report_json(rep) << '\n';
    return kOk;
}

// ---- predict ---------------------------------------------------------------

int run_predict(const std::string& checkpoint, const std::string& model_config, const std::string& case_path,
                const std::string& out_image) {
    const CUNet model = load_model(checkpoint, model_config);
    const VolumeSample sample = read_sample(case_path);
    const LabelMap labels = predict(model, sample);
    render_overlay(sample, labels, out_image);
    std::map<int, std::size_t> counts;
    for (auto v : labels.values()) ++counts[v];
    nlohmann::ordered_json j;
    j["case_id"] = sample.id;
    j["image"] = out_image;
    for (const auto& [label, n] : counts) j["label_counts"][std::to_string(label)] = n;
    std::cout << j.dump() << '\n';
    return kOk;
}

// ---- gradcheck -------------------------------------------------------------

int run_gradcheck(std::size_t seeds, double step, double tolerance, std::uint64_t first_seed) {
    const auto start = std::chrono::steady_clock::now();
    const auto results = run_gradcheck_suite(seeds, step, first_seed);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool ok = true;
    nlohmann::ordered_json j;
    for (const auto& r : results) {
        const bool pass = r.max_rel_error <= tolerance;
        ok = ok && pass;
        nlohmann::ordered_json row;
        row["op"] = r.name;
        row["max_rel_error"] = r.max_rel_error;
        row["coords"] = r.coords;
        row["kinks_skipped"] = r.kinks_skipped;
        row["denominator_floor"] = r.denominator_floor;
        row["seeds"] = r.seeds;
        row["pass"] = pass;
        if (!pass) row["worst"] = r.worst;
        j["results"].push_back(row);
    }
    j["tolerance"] = tolerance;
    j["seconds"] = seconds;
    j["pass"] = ok;
    std::cout << j.dump(2) << '\n';
    if (!ok) {
        print_error("gradcheck", "relative error above tolerance");
        return kCheckFailed;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cascaded U-Net brain tumor segmentation on synthetic phantoms"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "only log warnings");

    Settings synth_settings, train_settings;
    std::string out_dir, data_dir, checkpoint, model_config, report = "report", case_path, out_image,
        split = "test";
    bool undefined_empty = false;
    std::size_t seeds = 50;
    double step = 1e-5, tolerance = 1e-4;
    std::uint64_t first_seed = 0;

    auto* synth = app.add_subcommand("synth", "generate a phantom dataset split into train/val/test");
    synth->add_option("--config", synth_settings.config_path, "key=value file")->check(CLI::ExistingFile);
    synth->add_option("--out-dir", out_dir, "dataset directory")->required();
    synth_settings.bind(*synth, synth_config_keys());

    auto* train = app.add_subcommand("train", "train the cascade with early stopping");
    train->add_option("--config", train_settings.config_path, "key=value file")->check(CLI::ExistingFile);
    train->add_option("--data-dir", data_dir, "dataset directory")->required();
    train->add_option("--out-dir", out_dir, "output directory")->required();
    train_settings.bind(*train, train_config_keys());
    train_settings.bind(*train, model_config_keys(), kModelPrefix);

    auto* eval = app.add_subcommand("eval", "score a checkpoint on one split");
    eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    eval->add_option("--model-config", model_config, "defaults to model.cfg beside the checkpoint");
    eval->add_option("--data-dir", data_dir)->required();
    eval->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
    eval->add_option("--report", report, "output path stem; writes <stem>.csv and <stem>.json");
    eval->add_flag("--undefined-empty", undefined_empty, "leave metrics with empty denominators undefined");

    auto* pred = app.add_subcommand("predict", "segment one case file and render an overlay");
    pred->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    pred->add_option("--model-config", model_config, "defaults to model.cfg beside the checkpoint");
    pred->add_option("--case", case_path)->required()->check(CLI::ExistingFile);
    pred->add_option("--out", out_image, "output PPM image")->required();

    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
    grad->add_option("--seeds", seeds)->check(CLI::PositiveNumber);
    grad->add_option("--step", step)->check(CLI::PositiveNumber);
    grad->add_option("--tolerance", tolerance)->check(CLI::PositiveNumber);
    grad->add_option("--first-seed", first_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        return kUsage;
    }
    if (quiet) set_log_level(LogLevel::kWarn);

    try {
        if (*synth) return run_synth(synth_settings, out_dir);
        if (*train) return run_train(train_settings, data_dir, out_dir);
        if (*eval) return run_eval(checkpoint, model_config, data_dir, split, report, undefined_empty);
        if (*pred) return run_predict(checkpoint, model_config, case_path, out_image);
        if (*grad) return run_gradcheck(seeds, step, tolerance, first_seed);
    } catch (const ConfigError& e) {
        print_error("config", e.what());
        return kUsage;
    } catch (const ContractError& e) {
        print_error("contract", e.what());
        return kInput;
    } catch (const InputError& e) {
        print_error("input", e.what());
        return kInput;
    } catch (const FormatError& e) {
        print_error("format", e.what());
        return kIo;
    } catch (const IoError& e) {
        print_error("io", e.what());
        return kIo;
    } catch (const fs::filesystem_error& e) {
        print_error("io", e.what());
        return kIo;
    } catch (const NumericError& e) {
        print_error("numeric", e.what());
        return kNumeric;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return kFailure;
    }
    return kFailure;
}
