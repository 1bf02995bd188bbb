#pragma once

// Implementation of the mtlsi command-line verbs. Each command writes into a
// staged output directory, adds run.json and publishes the directory only
// when everything succeeded.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlsi/cli/config.hpp"
#include "mtlsi/cli/provenance.hpp"
#include "mtlsi/corpus/manifest.hpp"
#include "mtlsi/corpus/split.hpp"
#include "mtlsi/corpus/synth.hpp"
#include "mtlsi/metrics/evaluate.hpp"
#include "mtlsi/nn/checkpoint.hpp"
#include "mtlsi/train/dataset.hpp"
#include "mtlsi/train/grid_search.hpp"
#include "mtlsi/train/trainer.hpp"

namespace mtlsi::cli {

struct options {
    std::string command;
    profile prof = profile::desk;
    std::optional<fs::path> config_file;
    std::optional<fs::path> corpus;
    std::optional<fs::path> features;
    std::optional<fs::path> model;
    std::optional<fs::path> model_a;
    std::optional<fs::path> model_b;
    std::optional<fs::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> algorithm;
    std::optional<double> alpha;
    std::optional<std::string> utterance;
    std::string split = "test";
    bool overwrite = false;
    bool verbose = false;
};

inline constexpr int k_exit_ok = 0;
inline constexpr int k_exit_invalid = 1;
inline constexpr int k_exit_runtime = 2;

namespace detail {

inline const fs::path& require(const std::optional<fs::path>& p, const char* flag)
{
    if (!p) {
        throw error(errc::invalid_config, std::string("missing required option ") + flag);
    }
    return *p;
}

inline void write_text(const fs::path& path, const std::string& text)
{
    io::write_file(path, std::span<const char>(text.data(), text.size()));
}

inline experiment_config resolve(const options& o)
{
    auto cfg = load_config(o.prof, o.config_file);
    if (o.seed) {
        if (o.command == "synth") {
            cfg.synth.seed = *o.seed;
        } else {
            cfg.train.seed = *o.seed;
        }
    }
    if (o.algorithm) {
        cfg.train.algo = train::parse_algorithm(*o.algorithm);
    }
    if (o.alpha) {
        cfg.train.alpha = *o.alpha;
    }
    cfg.train.validate();
    return cfg;
}

inline std::uint64_t run_seed(const options& o, const experiment_config& cfg)
{
    return o.command == "synth" ? cfg.synth.seed : cfg.train.seed;
}

// ---- features directory ---------------------------------------------------

inline constexpr int k_features_version = 1;

inline void save_features(const train::feature_table& table, const fs::path& dir)
{
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& [id, m] : table) {
        io::write_matrix(dir / "features" / (id + ".atv"), m);
        ids.push_back(id);
    }
    corpus::write_json(dir / "features.json", {{"version", k_features_version},
                                               {"n_frames", k_frames},
                                               {"n_ceps", k_mfcc},
                                               {"utterances", ids}});
}

inline train::feature_table load_features(const fs::path& dir)
{
    const auto j = corpus::read_json(dir / "features.json");
    train::feature_table table;
    try {
        if (j.at("version").get<int>() != k_features_version) {
            throw error(errc::schema_mismatch, "unsupported features version in '" + dir.string() + "'");
        }
        for (const auto& id : j.at("utterances")) {
            const auto name = id.get<std::string>();
            table.emplace(name, io::read_matrix(dir / "features" / (name + ".atv")));
        }
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::schema_mismatch, "'" + (dir / "features.json").string() + "': " + e.what());
    }
    return table;
}

// ---- shared inputs --------------------------------------------------------

struct inputs {
    corpus::corpus data;
    corpus::corpus_split split;
    train::feature_table features;
    train::split_datasets sets;
};

inline inputs load_inputs(const options& o, const experiment_config& cfg, run_record& rec)
{
    const fs::path& dir = require(o.corpus, "--corpus");
    inputs in;
    in.data = corpus::load_manifest(dir);
    rec.inputs.emplace_back("corpus", dir);
    const fs::path split_file = fs::is_directory(dir) ? dir / "split.json" : dir.parent_path() / "split.json";
    if (fs::exists(split_file)) {
        in.split = corpus::split_from_json(corpus::read_json(split_file));
    } else {
        in.split = corpus::split_speakers(in.data.utterances, cfg.n_train_speakers, cfg.synth.seed);
    }
    if (o.features) {
        in.features = load_features(*o.features);
        rec.inputs.emplace_back("features", *o.features);
    } else {
        in.features = train::featurize_corpus(in.data);
    }
    in.sets = train::make_split_datasets(in.data, in.features, in.split);
    return in;
}

inline nn::model_config model_for(const experiment_config& cfg, train::algorithm algo)
{
    auto m = cfg.model;
    m.mode = algo == train::algorithm::single_task ? nn::task_mode::single : nn::task_mode::multi;
    return m;
}

inline train::train_result run_training(const experiment_config& cfg, const train::train_config& tc,
                                        const train::split_datasets& sets, bool verbose, const std::string& tag)
{
    const auto mc = model_for(cfg, tc.algo);
    auto init = nn::model_params::initialized(mc, tc.seed);
    std::fprintf(stderr, "[%s] training %s (%zu params) on %zu utterances\n", tag.c_str(),
                 std::string(train::to_string(tc.algo)).c_str(), nn::count_params(init), sets.train.size());
    auto result = train::train_model(std::move(init), sets.train, sets.dev, tc, [&](const train::epoch_log& l) {
        if (verbose) {
            std::fprintf(stderr, "[%s] epoch %d  l_tv %.5f  l_ph %s  val %.5f  lr %.2e\n", tag.c_str(), l.epoch, l.l_tv,
                         l.l_ph ? std::to_string(*l.l_ph).c_str() : "-", l.val_loss, l.lr);
        }
    });
    std::fprintf(stderr, "[%s] %zu epochs, best epoch %d%s\n", tag.c_str(), result.logs.size(), result.best_epoch,
                 result.diverged ? " (diverged)" : "");
    return result;
}

inline std::string epochs_csv(const std::vector<train::epoch_log>& logs)
{
    std::ostringstream os;
    os << "epoch,l_tv,l_ph,l_joint,val_loss,lr,seconds\n";
    for (const auto& l : logs) {
        os << l.epoch << "," << metrics::csv_number(l.l_tv) << "," << metrics::csv_number(l.l_ph) << ","
           << metrics::csv_number(l.l_joint) << "," << metrics::csv_number(l.val_loss) << ","
           << metrics::csv_number(l.lr) << "," << metrics::csv_number(l.seconds) << "\n";
    }
    return os.str();
}

inline nlohmann::json timing_json(const train::train_result& r)
{
    nlohmann::json per_epoch = nlohmann::json::array();
    for (const auto& l : r.logs) {
        per_epoch.push_back(l.seconds);
    }
    const double mean = r.logs.empty() ? 0.0 : r.train_seconds / static_cast<double>(r.logs.size());
    return {{"train_seconds", r.train_seconds}, {"seconds_per_epoch", mean}, {"epoch_seconds", per_epoch}};
}

inline nlohmann::json summary_json(const train::train_result& r)
{
    return {{"best_epoch", r.best_epoch},
            {"epochs_run", r.logs.size()},
            {"optimizer_steps", r.optimizer_steps},
            {"stopped_early", r.stopped_early},
            {"diverged", r.diverged},
            {"message", r.message},
            {"param_count", nn::count_params(r.params)}};
}

inline metrics::eval_report evaluate_named(const nn::model_params& params, const train::dataset& data,
                                           const experiment_config& cfg, std::string name)
{
    auto report = metrics::evaluate(params, data, {cfg.pooling, 64});
    report.model = std::move(name);
    return report;
}

inline void finish(staged_dir& out, run_record& rec)
{
    write_run_record(rec, out.path());
    out.commit();
    std::fprintf(stderr, "wrote %s\n", out.target().string().c_str());
}

} // namespace detail

// ---- commands ---------------------------------------------------------------

inline int cmd_synth(const options& o)
{
    const auto cfg = detail::resolve(o);
    staged_dir out(detail::require(o.out, "--out"), o.overwrite);
    run_record rec{"synth", to_json(cfg), cfg.synth.seed, {}, {}};
    const corpus::corpus c{cfg.synth.sample_rate, corpus::default_inventory(), corpus::generate_synthetic(cfg.synth)};
    corpus::save_corpus(c, out.path(), cfg.audio);
    const auto split = corpus::split_speakers(c.utterances, cfg.n_train_speakers, cfg.synth.seed);
    corpus::write_json(out.path() / "split.json", corpus::to_json(split));
    std::fprintf(stderr, "synthesized %zu utterances from %zu speakers (train %zu / dev %zu / test %zu)\n",
                 c.utterances.size(), cfg.synth.n_speakers, split.train.size(), split.dev.size(), split.test.size());
    detail::finish(out, rec);
    return k_exit_ok;
}

inline int cmd_featurize(const options& o)
{
    const auto cfg = detail::resolve(o);
    const fs::path& dir = detail::require(o.corpus, "--corpus");
    staged_dir out(detail::require(o.out, "--out"), o.overwrite);
    run_record rec{"featurize", to_json(cfg), detail::run_seed(o, cfg), {{"corpus", dir}}, {}};
    const auto c = corpus::load_manifest(dir);
    detail::save_features(train::featurize_corpus(c), out.path());
    detail::finish(out, rec);
    return k_exit_ok;
}

inline int cmd_train(const options& o)
{
    const auto cfg = detail::resolve(o);
    staged_dir out(detail::require(o.out, "--out"), o.overwrite);
    run_record rec{"train", to_json(cfg), cfg.train.seed, {}, {"epochs.csv", "timing.json"}};
    const auto in = detail::load_inputs(o, cfg, rec);
    const auto result = detail::run_training(cfg, cfg.train, in.sets, o.verbose, "train");
    nn::save_checkpoint(result.params, {cfg.train.seed, result.best_epoch, std::string(train::to_string(cfg.train.algo))},
                        out.path());
    detail::write_text(out.path() / "epochs.csv", detail::epochs_csv(result.logs));
    corpus::write_json(out.path() / "timing.json", detail::timing_json(result));
    corpus::write_json(out.path() / "summary.json", detail::summary_json(result));
    detail::finish(out, rec);
    if (result.diverged) {
        std::fprintf(stderr, "training diverged: %s\n", result.message.c_str());
        return k_exit_runtime;
    }
    return k_exit_ok;
}

inline int cmd_eval(const options& o)
{
    const auto cfg = detail::resolve(o);
    const fs::path& model_dir = detail::require(o.model, "--model");
    staged_dir out(detail::require(o.out, "--out"), o.overwrite);
    run_record rec{"eval", to_json(cfg), cfg.train.seed, {}, {}};
    const auto in = detail::load_inputs(o, cfg, rec);
    const auto ckpt = nn::load_checkpoint(model_dir);
    rec.inputs.emplace_back("model", model_dir);
    const auto subset = corpus::parse_subset(o.split);
    const auto report = detail::evaluate_named(ckpt.params, in.sets.get(subset), cfg,
                                               ckpt.info.algorithm.empty() ? "model" : ckpt.info.algorithm);
    auto j = metrics::to_json(report);
    j["split"] = o.split;
    corpus::write_json(out.path() / "report.json", j);
    detail::write_text(out.path() / "report.txt", metrics::tv_table_text({report}));
    detail::write_text(out.path() / "report.csv", metrics::tv_table_csv({report}));
    std::fputs(metrics::tv_table_text({report}).c_str(), stdout);
    detail::finish(out, rec);
    return k_exit_ok;
}

struct ablation_row {
    double alpha = 0.0;
    std::optional<double> average_ppmc;
    std::optional<double> phoneme_accuracy;
    bool failed = false;
    std::string message;
};

inline std::string ablation_csv(const std::vector<ablation_row>& rows)
{
    std::ostringstream os;
    os << "alpha,average_ppmc,phoneme_accuracy_pct,status\n";
    for (const auto& r : rows) {
        const auto pct = r.phoneme_accuracy ? std::optional<double>(100.0 * *r.phoneme_accuracy) : std::nullopt;
        os << metrics::csv_number(r.alpha) << "," << metrics::csv_number(r.average_ppmc) << ","
           << metrics::csv_number(pct) << "," << (r.failed ? "failed" : "ok") << "\n";
    }
    return os.str();
}

inline std::string ablation_text(const std::vector<ablation_row>& rows)
{
    std::ostringstream os;
    os << "alpha  Average PPMC  Phoneme acc (%)\n";
    for (const auto& r : rows) {
        char buf[128];
        if (r.failed) {
            std::snprintf(buf, sizeof buf, "%5.1f  %12s  %15s\n", r.alpha, "failed", "failed");
        } else {
            const auto pct = r.phoneme_accuracy ? std::optional<double>(100.0 * *r.phoneme_accuracy) : std::nullopt;
            std::snprintf(buf, sizeof buf, "%5.1f  %12s  %15s\n", r.alpha, metrics::fixed(r.average_ppmc).c_str(),
                          metrics::fixed(pct, 2).c_str());
        }
        os << buf;
    }
    return os.str();
}

/// One mtl_algo2 run per alpha on the multi-task network. At alpha = 0 the
/// phoneme term contributes an exact zero, so trunk and TV head train exactly
/// as the single-task model does and the untouched phoneme head shows chance
/// accuracy.
inline int cmd_ablate(const options& o)
{
    const auto cfg = detail::resolve(o);
    staged_dir out(detail::require(o.out, "--out"), o.overwrite);
    run_record rec{"ablate", to_json(cfg), cfg.train.seed, {}, {}};
    const auto in = detail::load_inputs(o, cfg, rec);
    auto alphas = cfg.alphas;
    std::sort(alphas.begin(), alphas.end());
    std::vector<ablation_row> rows;
    nlohmann::json runs = nlohmann::json::array();
    for (double alpha : alphas) {
        ablation_row row{alpha, std::nullopt, std::nullopt, false, {}};
        try {
            auto tc = cfg.train;
            tc.algo = train::algorithm::mtl_algo2;
            tc.alpha = alpha;
            char tag[32];
            std::snprintf(tag, sizeof tag, "alpha=%.2f", alpha);
            const auto result = detail::run_training(cfg, tc, in.sets, o.verbose, tag);
            if (result.diverged) {
                throw error(errc::numerical_error, result.message);
            }
            const auto report = detail::evaluate_named(result.params, in.sets.test, cfg, tag);
            row.average_ppmc = report.average_ppmc;
            row.phoneme_accuracy = report.phoneme_accuracy_excl_pad;
            auto j = metrics::to_json(report);
            j["alpha"] = alpha;
            j["best_epoch"] = result.best_epoch;
            runs.push_back(j);
        } catch (const error& e) {
            row.failed = true;
            row.message = e.what();
            runs.push_back({{"alpha", alpha}, {"failed", true}, {"message", row.message}});
        }
        rows.push_back(row);
    }
    corpus::write_json(out.path() / "ablation.json", {{"rows", runs}});
    detail::write_text(out.path() / "ablation.csv", ablation_csv(rows));
    detail::write_text(out.path() / "ablation.txt", ablation_text(rows));
    std::fputs(ablation_text(rows).c_str(), stdout);
    detail::finish(out, rec);
    return k_exit_ok;
}

/// single_task, mtl_algo1 and mtl_algo2 with one seed, scored on the test
/// speakers. Checkpoints land in models/<algorithm>.
inline int cmd_compare(const options& o)
{
    const auto cfg = detail::resolve(o);
    staged_dir out(detail::require(o.out, "--out"), o.overwrite);
    run_record rec{"compare", to_json(cfg), cfg.train.seed, {}, {"timing.csv", "compare.txt"}};
    const auto in = detail::load_inputs(o, cfg, rec);
    std::vector<metrics::eval_report> rows;
    std::vector<metrics::eval_report> timed;
    std::ostringstream timing;
    timing << "model,train_seconds,epochs,seconds_per_epoch,optimizer_steps\n";
    nlohmann::json reports = nlohmann::json::array();
    for (auto algo : {train::algorithm::single_task, train::algorithm::mtl_algo1, train::algorithm::mtl_algo2}) {
        auto tc = cfg.train;
        tc.algo = algo;
        const std::string name(train::to_string(algo));
        const auto result = detail::run_training(cfg, tc, in.sets, o.verbose, name);
        if (result.diverged) {
            throw error(errc::numerical_error, name + " diverged: " + result.message);
        }
        nn::save_checkpoint(result.params, {tc.seed, result.best_epoch, name}, out.path() / "models" / name);
        auto report = detail::evaluate_named(result.params, in.sets.test, cfg, name);
        rows.push_back(report);
        reports.push_back(metrics::to_json(report));
        report.train_seconds = result.train_seconds;
        timed.push_back(report);
        const double per_epoch = result.logs.empty() ? 0.0 : result.train_seconds / static_cast<double>(result.logs.size());
        timing << name << "," << metrics::csv_number(result.train_seconds) << "," << result.logs.size() << ","
               << metrics::csv_number(per_epoch) << "," << result.optimizer_steps << "\n";
    }
    corpus::write_json(out.path() / "compare.json", {{"rows", reports}});
    detail::write_text(out.path() / "compare.csv", metrics::tv_table_csv(rows));
    detail::write_text(out.path() / "compare.txt", metrics::tv_table_text(timed));
    detail::write_text(out.path() / "timing.csv", timing.str());
    std::fputs(metrics::tv_table_text(timed).c_str(), stdout);
    detail::finish(out, rec);
    return k_exit_ok;
}

inline int cmd_gridsearch(const options& o)
{
    const auto cfg = detail::resolve(o);
    staged_dir out(detail::require(o.out, "--out"), o.overwrite);
    run_record rec{"gridsearch", to_json(cfg), cfg.train.seed, {}, {}};
    const auto in = detail::load_inputs(o, cfg, rec);
    if (in.sets.dev.empty()) {
        throw error(errc::invalid_config, "grid search needs a nonempty dev split");
    }
    const auto runner = [&](double lr, std::size_t batch, std::uint64_t seed) -> std::optional<double> {
        auto tc = cfg.train;
        tc.base_lr = lr;
        tc.batch_size = batch;
        tc.seed = seed;
        char tag[64];
        std::snprintf(tag, sizeof tag, "lr=%g batch=%zu", lr, batch);
        const auto result = detail::run_training(cfg, tc, in.sets, o.verbose, tag);
        if (result.diverged) {
            throw error(errc::numerical_error, result.message);
        }
        return detail::evaluate_named(result.params, in.sets.dev, cfg, tag).average_ppmc;
    };
    const auto grid = train::grid_search(runner, cfg.train.seed, cfg.lr_grid, cfg.batch_grid);
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : grid.cells) {
        cells.push_back({{"lr", c.lr},
                         {"batch_size", c.batch_size},
                         {"seed", c.seed},
                         {"dev_ppmc", metrics::opt_json(c.dev_ppmc)},
                         {"failed", c.failed},
                         {"message", c.message}});
    }
    nlohmann::json best = nullptr;
    if (grid.best) {
        const auto& b = grid.cells[*grid.best];
        best = {{"lr", b.lr}, {"batch_size", b.batch_size}, {"dev_ppmc", metrics::opt_json(b.dev_ppmc)}};
    }
    corpus::write_json(out.path() / "grid.json", {{"cells", cells}, {"best", best}});
    detail::write_text(out.path() / "grid.csv", train::grid_table_csv(grid));
    detail::write_text(out.path() / "grid.txt", train::grid_table_text(grid));
    std::fputs(train::grid_table_text(grid).c_str(), stdout);
    detail::finish(out, rec);
    return grid.best ? k_exit_ok : k_exit_runtime;
}

/// Ground-truth and predicted trajectories of one utterance, long format.
inline std::string trajectories_csv(const corpus::utterance& u, const matrix& multi, const matrix& single)
{
    std::ostringstream os;
    os << "frame,tv_name,ground_truth,multi_task,single_task\n";
    char buf[160];
    for (std::size_t j = 0; j < k_tvs; ++j) {
        const auto c = static_cast<Eigen::Index>(j);
        for (Eigen::Index t = 0; t < u.tv_targets.rows(); ++t) {
            std::snprintf(buf, sizeof buf, "%ld,%s,%.9g,%.17g,%.17g\n", static_cast<long>(t),
                          std::string(k_tv_names[j]).c_str(), static_cast<double>(u.tv_targets(t, c)), multi(t, c),
                          single(t, c));
            os << buf;
        }
    }
    return os.str();
}

inline int cmd_plotdata(const options& o)
{
    const auto cfg = detail::resolve(o);
    const fs::path& dir = detail::require(o.corpus, "--corpus");
    const fs::path& a = detail::require(o.model_a, "--model-a");
    const fs::path& b = detail::require(o.model_b, "--model-b");
    if (!o.utterance) {
        throw error(errc::invalid_config, "missing required option --utterance");
    }
    staged_dir out(detail::require(o.out, "--out"), o.overwrite);
    run_record rec{"plotdata", to_json(cfg), cfg.train.seed, {{"corpus", dir}, {"model_a", a}, {"model_b", b}}, {}};
    const auto c = corpus::load_manifest(dir);
    const auto& u = c.find(*o.utterance);
    fmatrix feats;
    if (o.features) {
        feats = io::read_matrix(*o.features / "features" / (u.id + ".atv"));
        rec.inputs.emplace_back("features", *o.features);
    } else {
        feats = signal::featurize(u.audio).cast<float>();
    }
    const auto sample = train::make_sample(u, feats);
    const auto ma = nn::load_checkpoint(a);
    const auto mb = nn::load_checkpoint(b);
    const auto pa = nn::predict(ma.params, sample.features);
    const auto pb = nn::predict(mb.params, sample.features);
    detail::write_text(out.path() / "trajectories.csv", trajectories_csv(u, pa.tv, pb.tv));
    detail::finish(out, rec);
    return k_exit_ok;
}

inline int dispatch(const options& o)
{
    if (o.command == "synth") {
        return cmd_synth(o);
    }
    if (o.command == "featurize") {
        return cmd_featurize(o);
    }
    if (o.command == "train") {
        return cmd_train(o);
    }
    if (o.command == "eval") {
        return cmd_eval(o);
    }
    if (o.command == "ablate") {
        return cmd_ablate(o);
    }
    if (o.command == "compare") {
        return cmd_compare(o);
    }
    if (o.command == "gridsearch") {
        return cmd_gridsearch(o);
    }
    if (o.command == "plotdata") {
        return cmd_plotdata(o);
    }
    throw error(errc::invalid_config, "unknown command '" + o.command + "'");
}

/// Runs a command and maps failures to exit codes: 1 for invalid input or
/// configuration, 2 for runtime and numerical failures.
inline int run(const options& o)
{
    try {
        return dispatch(o);
    } catch (const error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.is_runtime() ? k_exit_runtime : k_exit_invalid;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return k_exit_runtime;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return k_exit_runtime;
    }
}

} // namespace mtlsi::cli
