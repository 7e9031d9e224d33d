// Batch front end: synthetic data generation, joint training, evaluation,
// envelope recovery, and gradient checking over the documented dataset and
// model formats. Exit codes: 0 success, 1 runtime/data error, 2 usage or
// configuration error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nes/nes.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw nes::DataError("cannot write '" + path.string() + "'");
    os << j.dump(2) << '\n';
}

json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw nes::DataError("cannot open '" + path + "'");
    try {
        json j;
        is >> j;
        return j;
    } catch (const json::exception& e) {
        throw nes::DataError("'" + path + "' is not valid JSON: " + e.what());
    }
}

struct CommonDataArgs {
    std::string manifest;
    std::string channels = "selected";
};

struct LoadedFeatures {
    nes::Dataset dataset;
    std::vector<nes::FeatureTuple> tuples;
    std::vector<std::string> trial_labels;
};

LoadedFeatures load_features(const CommonDataArgs& args, nes::Index feature_dim,
                             nes::Index envelope_len) {
    LoadedFeatures out;
    out.dataset = nes::load_dataset(args.manifest, args.channels == "selected");
    nes::PreprocessConfig pre;
    pre.feature_dim = feature_dim;
    pre.envelope_len = envelope_len;
    out.tuples =
        nes::extract_features(out.dataset.recordings, pre, out.dataset.manifest.labels);
    out.trial_labels.reserve(out.tuples.size());
    for (const auto& t : out.tuples) out.trial_labels.push_back(t.label);
    return out;
}

json shapes_to_json(const nes::NesModel& model) {
    json j;
    j["n_ctx"] = model.context_count();
    j["feature_dim"] = model.feature_dim();
    j["spoken_dim"] = model.uses_bias_map() ? model.spoken_dim() : 0;
    j["hidden_dim"] = model.hidden_dim();
    j["output_dim"] = model.output_dim();
    j["factor_count"] = model.gated() ? model.factored.factor_count() : 0;
    j["n_classes"] = model.has_softmax() ? model.class_count() : 0;
    return j;
}

// ---- synth ------------------------------------------------------------------

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
    nes::SynthConfig cfg;
    if (!config_path.empty()) {
        const json j = read_json_file(config_path);
        try {
            if (j.contains("n_classes")) cfg.n_classes = j.at("n_classes").get<int>();
            if (j.contains("n_channels")) cfg.n_channels = j.at("n_channels").get<nes::Index>();
            if (j.contains("feature_dim"))
                cfg.feature_dim = j.at("feature_dim").get<nes::Index>();
            if (j.contains("trials_per_class"))
                cfg.trials_per_class = j.at("trials_per_class").get<int>();
            if (j.contains("noise_level")) cfg.noise_level = j.at("noise_level").get<double>();
            if (j.contains("gate_strength"))
                cfg.gate_strength = j.at("gate_strength").get<double>();
            if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
            if (j.contains("sample_rate_hz"))
                cfg.sample_rate_hz = j.at("sample_rate_hz").get<double>();
            if (j.contains("speech_rate_hz"))
                cfg.speech_rate_hz = j.at("speech_rate_hz").get<double>();
        } catch (const json::exception& e) {
            throw nes::ConfigError(std::string("bad synth config: ") + e.what());
        }
    }

    auto synth = nes::synth_generate(cfg);
    nes::write_dataset(synth.dataset, out_dir);
    write_json_file(fs::path(out_dir) / "ground_truth.json",
                    nes::ground_truth_to_json(synth.truth));
    std::cout << "wrote " << synth.dataset.recordings.size() << " trials ("
              << cfg.n_classes << " classes x " << cfg.trials_per_class << ") to " << out_dir
              << "\n";
    return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
    CommonDataArgs data;
    std::string variant;
    std::string out_dir;
    std::string task = "classify";
    int epochs = 100;
    nes::Index batch_size = 2000;
    double lr = -1.0;  // negative = variant default
    int cd_steps = 1;
    double cd_lr_scale = 1.0;
    double alpha = 0.0;
    std::uint64_t seed = 0;
    nes::Index feature_dim = 50;
    nes::Index hidden_dim = 50;
    nes::Index output_dim = 0;   // 0 = feature_dim
    nes::Index factor_count = 0; // 0 = hidden_dim
    std::size_t eval_count = 0;  // trials per label held out of training
    std::uint64_t split_seed = 0;
};

int cmd_train(const TrainArgs& args) {
    const auto t0 = std::chrono::steady_clock::now();
    const nes::Variant variant = nes::parse_variant(args.variant);

    auto loaded = load_features(args.data, args.feature_dim,
                                args.output_dim > 0 ? args.output_dim : args.feature_dim);
    if (loaded.tuples.empty()) throw nes::DataError("manifest holds no trials");

    std::vector<std::size_t> train_idx(loaded.tuples.size());
    std::iota(train_idx.begin(), train_idx.end(), std::size_t(0));
    if (args.eval_count > 0)
        train_idx = nes::split_eval(loaded.trial_labels, args.eval_count, args.split_seed).train;

    std::vector<nes::FeatureTuple> train_set;
    train_set.reserve(train_idx.size());
    for (std::size_t i : train_idx) train_set.push_back(loaded.tuples[i]);

    nes::ModelShapes shapes;
    shapes.n_ctx = loaded.tuples.front().xs.rows();
    shapes.feature_dim = args.feature_dim;
    shapes.hidden_dim = args.hidden_dim;
    shapes.output_dim = args.output_dim;
    shapes.factor_count = args.factor_count;
    shapes.n_classes = args.task == "classify"
                           ? static_cast<nes::Index>(loaded.dataset.manifest.labels.size())
                           : 0;
    auto model = nes::make_model(variant, shapes, args.seed);
    nes::calibrate_core(model, train_set);

    nes::TrainConfig cfg = nes::TrainConfig::defaults_for(variant);
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch_size;
    if (args.lr >= 0.0) cfg.lr = args.lr;
    cfg.cd_steps = args.cd_steps;
    cfg.cd_lr_scale = args.cd_lr_scale;
    cfg.alpha = args.alpha;
    cfg.seed = args.seed;

    auto result = nes::train_joint(model, train_set, cfg);

    fs::create_directories(args.out_dir);
    const fs::path model_path = fs::path(args.out_dir) / "model.nesm";
    nes::save_model(model, model_path.string());

    json report;
    report["command"] = "train";
    report["seed"] = args.seed;
    json config;
    config["manifest"] = args.data.manifest;
    config["channels"] = args.data.channels;
    config["variant"] = args.variant;
    config["task"] = args.task;
    config["epochs"] = cfg.epochs;
    config["batch_size"] = cfg.batch_size;
    config["lr"] = cfg.lr;
    config["cd_steps"] = cfg.cd_steps;
    config["cd_lr_scale"] = cfg.cd_lr_scale;
    config["alpha"] = cfg.alpha;
    config["momentum_start"] = cfg.momentum_start;
    config["momentum_end"] = cfg.momentum_end;
    config["momentum_ramp_epochs"] = cfg.momentum_ramp_epochs;
    config["weight_decay"] = {{"context", cfg.wd_context},
                              {"representation", cfg.wd_representation},
                              {"other", cfg.wd_other}};
    config["eval_count"] = args.eval_count;
    config["split_seed"] = args.split_seed;
    config["shapes"] = shapes_to_json(model);
    report["config"] = std::move(config);
    report["n_train_trials"] = train_set.size();
    json history = json::array();
    for (const auto& e : result.history)
        history.push_back({{"epoch", e.epoch}, {"recon_error", e.recon_error}, {"loss", e.loss}});
    report["history"] = std::move(history);
    write_json_file(fs::path(args.out_dir) / "report.json", report);

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream timing(fs::path(args.out_dir) / "timing.txt");
    timing << seconds << " s\n";
    std::cout << "trained " << args.variant << " on " << train_set.size() << " trials, "
              << cfg.epochs << " epochs";
    if (!result.history.empty()) std::cout << ", final loss " << result.history.back().loss;
    std::cout << " (" << seconds << " s)\nmodel: " << model_path.string() << "\n";
    return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
    CommonDataArgs data;
    std::string model_path;
    std::string out_dir;
    std::string tasks_path;
    std::string compare_path;
    std::size_t eval_count = 50;
    std::uint64_t split_seed = 0;
};

int cmd_eval(const EvalArgs& args) {
    const nes::NesModel model = nes::load_model(args.model_path);
    if (!model.has_softmax())
        throw nes::ConfigError(
            "eval: model has no classification head; train with --task classify");

    auto loaded = load_features(args.data, model.feature_dim(), model.output_dim());
    const auto& labels = loaded.dataset.manifest.labels;
    if (model.class_count() != static_cast<nes::Index>(labels.size()))
        throw nes::ConfigError("eval: model expects " + std::to_string(model.class_count()) +
                               " classes but the manifest lists " +
                               std::to_string(labels.size()));

    std::vector<std::size_t> eval_idx(loaded.tuples.size());
    std::iota(eval_idx.begin(), eval_idx.end(), std::size_t(0));
    if (args.eval_count > 0)
        eval_idx = nes::split_eval(loaded.trial_labels, args.eval_count, args.split_seed).eval;
    if (eval_idx.empty()) throw nes::DataError("eval: no trials to evaluate");

    std::vector<std::string> truths, predictions;
    truths.reserve(eval_idx.size());
    predictions.reserve(eval_idx.size());
    for (std::size_t i : eval_idx) {
        truths.push_back(loaded.tuples[i].label);
        const int predicted = nes::classify(model, loaded.tuples[i]).first;
        predictions.push_back(labels[static_cast<std::size_t>(predicted)]);
    }

    const std::vector<nes::BinaryTaskSpec> tasks =
        args.tasks_path.empty() ? nes::default_binary_tasks()
                                : nes::binary_tasks_from_json(read_json_file(args.tasks_path));

    json report;
    report["command"] = "eval";
    report["model"] = args.model_path;
    report["variant"] = nes::variant_name(model.variant);
    report["n_eval_trials"] = eval_idx.size();
    report["eval_count_per_label"] = args.eval_count;
    report["split_seed"] = args.split_seed;

    json binary;
    for (const auto& task : tasks) {
        const auto r = nes::binary_accuracy(predictions, truths, task);
        binary[task.name] = {{"accuracy", r.accuracy}, {"evaluated", r.evaluated}};
        std::cout << "binary " << task.name << ": " << r.accuracy << " (" << r.evaluated
                  << " trials)\n";
    }
    report["binary"] = std::move(binary);

    const auto cm = nes::confusion(predictions, truths, labels);
    json confusion_json;
    confusion_json["labels"] = labels;
    json rows = json::array();
    for (nes::Index r = 0; r < cm.counts.rows(); ++r) {
        json row = json::array();
        for (nes::Index c = 0; c < cm.counts.cols(); ++c) row.push_back(cm.counts(r, c));
        rows.push_back(std::move(row));
    }
    confusion_json["counts"] = std::move(rows);
    confusion_json["accuracy"] = cm.accuracy();
    const nes::Vectord per_class = cm.per_class_accuracy();
    json per_class_json;
    for (std::size_t i = 0; i < labels.size(); ++i)
        per_class_json[labels[i]] = per_class[static_cast<nes::Index>(i)];
    confusion_json["per_class"] = per_class_json;
    report["confusion"] = std::move(confusion_json);
    std::cout << "multiclass accuracy: " << cm.accuracy() << " over " << cm.total()
              << " trials\n";

    if (!args.compare_path.empty()) {
        const json ref_all = read_json_file(args.compare_path);
        const std::string key = nes::variant_name(model.variant);
        if (!ref_all.contains(key))
            throw nes::DataError("comparison file lacks an entry for '" + key + "'");
        const json& ref = ref_all.at(key);
        json comparison;
        if (ref.contains("binary"))
            for (auto& [name, value] : ref.at("binary").items()) {
                if (!report["binary"].contains(name)) continue;
                const double ours = report["binary"][name]["accuracy"].get<double>();
                const double theirs = value.get<double>();
                comparison["binary"][name] = {
                    {"ours", ours}, {"reference", theirs}, {"delta", ours - theirs}};
            }
        if (ref.contains("per_class"))
            for (auto& [name, value] : ref.at("per_class").items()) {
                if (!per_class_json.contains(name)) continue;
                const double ours = per_class_json[name].get<double>();
                const double theirs = value.get<double>();
                comparison["per_class"][name] = {
                    {"ours", ours}, {"reference", theirs}, {"delta", ours - theirs}};
            }
        if (ref.contains("overall")) {
            comparison["overall"] = {{"ours", cm.accuracy()},
                                     {"reference", ref.at("overall").get<double>()},
                                     {"delta", cm.accuracy() - ref.at("overall").get<double>()}};
        }
        report["comparison"] = std::move(comparison);
    }

    fs::create_directories(args.out_dir);
    write_json_file(fs::path(args.out_dir) / "report.json", report);
    return 0;
}

// ---- recover ----------------------------------------------------------------

struct RecoverArgs {
    CommonDataArgs data;
    std::string model_path;
    std::string out_dir;
};

int cmd_recover(const RecoverArgs& args) {
    const nes::NesModel model = nes::load_model(args.model_path);
    auto loaded = load_features(args.data, model.feature_dim(), model.output_dim());
    if (loaded.tuples.empty()) throw nes::DataError("recover: manifest holds no trials");

    fs::create_directories(args.out_dir);
    std::ofstream csv(fs::path(args.out_dir) / "envelopes.csv");
    csv << "trial,label";
    for (nes::Index i = 0; i < model.output_dim(); ++i) csv << ",v" << i;
    csv << "\n";

    json per_trial = json::array();
    std::map<std::string, std::pair<double, int>> label_acc;
    double overall = 0.0;
    int counted = 0;
    for (std::size_t i = 0; i < loaded.tuples.size(); ++i) {
        const auto& tuple = loaded.tuples[i];
        const nes::Vectord env = nes::recover_envelope(model, tuple);
        const auto corr = nes::cross_correlation(env, tuple.target);

        const auto& entry = loaded.dataset.manifest.trials[i];
        csv << entry.trial << "," << tuple.label;
        for (nes::Index v = 0; v < env.size(); ++v) csv << "," << env[v];
        csv << "\n";

        per_trial.push_back({{"trial", entry.trial},
                             {"label", tuple.label},
                             {"cross_correlation", corr.value},
                             {"degenerate", corr.degenerate}});
        if (!corr.degenerate) {
            auto& acc = label_acc[tuple.label];
            acc.first += corr.value;
            ++acc.second;
            overall += corr.value;
            ++counted;
        }
    }

    json report;
    report["command"] = "recover";
    report["model"] = args.model_path;
    report["variant"] = nes::variant_name(model.variant);
    report["per_trial"] = std::move(per_trial);
    json per_label;
    for (const auto& [label, acc] : label_acc)
        per_label[label] = acc.first / static_cast<double>(acc.second);
    report["per_label_mean"] = std::move(per_label);
    report["mean_cross_correlation"] = counted > 0 ? overall / counted : 0.0;
    write_json_file(fs::path(args.out_dir) / "report.json", report);
    std::cout << "recovered " << loaded.tuples.size() << " envelopes, mean cross-correlation "
              << (counted > 0 ? overall / counted : 0.0) << "\n";
    return 0;
}

// ---- gradcheck ----------------------------------------------------------------

int cmd_gradcheck(const std::string& variant_arg, std::uint64_t seed, int instances) {
    std::vector<nes::GradCheckEntry> table =
        nes::gradcheck_energy(4, 3, 3, 4, instances, seed);

    std::vector<nes::Variant> variants;
    if (variant_arg == "all")
        variants = {nes::Variant::I, nes::Variant::B, nes::Variant::G};
    else
        variants = {nes::parse_variant(variant_arg)};

    nes::ModelShapes shapes;
    shapes.n_ctx = 2;
    shapes.feature_dim = 3;
    shapes.spoken_dim = 3;
    shapes.hidden_dim = 3;
    shapes.output_dim = 4;
    shapes.factor_count = 3;
    shapes.n_classes = 3;
    for (nes::Variant v : variants) {
        auto rows = nes::gradcheck_model(v, shapes, instances, seed);
        table.insert(table.end(), rows.begin(), rows.end());
    }

    bool all_pass = true;
    std::printf("%-28s %12s %10s  %s\n", "check", "max_rel_err", "tolerance", "status");
    for (const auto& e : table) {
        std::printf("%-28s %12.3e %10.1e  %s\n", e.name.c_str(), e.max_rel_err, e.tolerance,
                    e.pass ? "PASS" : "FAIL");
        all_pass = all_pass && e.pass;
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EEG-speech model toolkit: synthesize data, train the NES variants, "
                 "evaluate, recover envelopes, and check gradients"};
    app.require_subcommand(1);

    // synth
    std::string synth_config, synth_out;
    auto* synth = app.add_subcommand("synth", "generate a deterministic synthetic dataset");
    synth->add_option("--config", synth_config, "synth config JSON");
    synth->add_option("--out", synth_out, "output directory")->required();

    // train
    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "joint unsupervised-supervised training");
    train->add_option("--manifest", train_args.data.manifest, "dataset manifest")->required();
    train->add_option("--variant", train_args.variant, "model variant")
        ->required()
        ->check(CLI::IsMember({"nes-i", "nes-b", "nes-g"}));
    train->add_option("--out", train_args.out_dir, "output directory")->required();
    train->add_option("--task", train_args.task, "training objective")
        ->check(CLI::IsMember({"classify", "envelope"}));
    train->add_option("--epochs", train_args.epochs, "training epochs");
    train->add_option("--batch-size", train_args.batch_size, "batch size");
    train->add_option("--lr", train_args.lr, "learning rate (default 0.1; 0.02 for nes-g)");
    train->add_option("--cd-steps", train_args.cd_steps, "Gibbs steps per CD update");
    train->add_option("--cd-lr-scale", train_args.cd_lr_scale,
                      "CD step size relative to --lr");
    train->add_option("--alpha", train_args.alpha, "nonnegativity barrier strength");
    train->add_option("--seed", train_args.seed, "training seed");
    train->add_option("--channels", train_args.data.channels, "channel subset")
        ->check(CLI::IsMember({"all", "selected"}));
    train->add_option("--features", train_args.feature_dim, "feature dimension D");
    train->add_option("--hidden", train_args.hidden_dim, "hidden dimension K");
    train->add_option("--output-dim", train_args.output_dim, "projection dimension L");
    train->add_option("--factors", train_args.factor_count, "factor count F (gated)");
    train->add_option("--eval-count", train_args.eval_count,
                      "trials per label held out of training");
    train->add_option("--split-seed", train_args.split_seed, "train/eval split seed");

    // eval
    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "binary and multiclass evaluation");
    eval->add_option("--manifest", eval_args.data.manifest, "dataset manifest")->required();
    eval->add_option("--model", eval_args.model_path, "trained model file")->required();
    eval->add_option("--out", eval_args.out_dir, "output directory")->required();
    eval->add_option("--tasks", eval_args.tasks_path, "binary task config JSON");
    eval->add_option("--compare", eval_args.compare_path, "reference metrics JSON");
    eval->add_option("--channels", eval_args.data.channels, "channel subset")
        ->check(CLI::IsMember({"all", "selected"}));
    eval->add_option("--eval-count", eval_args.eval_count,
                     "evaluation trials per label (0 = all trials)");
    eval->add_option("--split-seed", eval_args.split_seed, "train/eval split seed");

    // recover
    RecoverArgs recover_args;
    auto* recover = app.add_subcommand("recover", "per-trial speech envelope recovery");
    recover->add_option("--manifest", recover_args.data.manifest, "dataset manifest")->required();
    recover->add_option("--model", recover_args.model_path, "trained model file")->required();
    recover->add_option("--out", recover_args.out_dir, "output directory")->required();
    recover->add_option("--channels", recover_args.data.channels, "channel subset")
        ->check(CLI::IsMember({"all", "selected"}));

    // gradcheck
    std::string gc_variant = "all";
    std::uint64_t gc_seed = 0;
    int gc_instances = 20;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gradcheck->add_option("--variant", gc_variant, "variant or 'all'")
        ->check(CLI::IsMember({"nes-i", "nes-b", "nes-g", "all"}));
    gradcheck->add_option("--seed", gc_seed, "seed for random instances");
    gradcheck->add_option("--instances", gc_instances, "random instances per check")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_config, synth_out);
        if (train->parsed()) return cmd_train(train_args);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (recover->parsed()) return cmd_recover(recover_args);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_variant, gc_seed, gc_instances);
    } catch (const nes::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const nes::ContractViolation& e) {
        std::cerr << "internal contract violation: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
