// mtlsi: multi-task speech inversion experiment runner.

#include <CLI11.hpp>

#include "mtlsi/cli/commands.hpp"

int main(int argc, char** argv)
{
    using namespace mtlsi;
    cli::options opt;
    std::string profile_name = "desk";
    std::string config_file, corpus, features, model, model_a, model_b, out, algorithm, utterance;
    std::uint64_t seed = 0;
    double alpha = 0.0;

    CLI::App app{"Multi-task acoustic-to-articulatory speech inversion toolkit"};
    app.set_version_flag("--version", k_version);
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", config_file, "JSON experiment config; overrides the profile");
    app.add_option("--corpus", corpus, "corpus directory (or corpus.json)");
    app.add_option("--out", out, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "run seed (corpus seed for synth, training seed otherwise)");
    app.add_flag("--overwrite", opt.overwrite, "replace a populated output directory");
    app.add_option("--profile", profile_name, "default profile")->check(CLI::IsMember({"desk", "paper"}));
    app.add_flag("-v,--verbose", opt.verbose, "log every epoch");

    const auto add_features = [&](CLI::App* sub) {
        sub->add_option("--features", features, "features directory written by featurize");
    };
    const auto add_training = [&](CLI::App* sub) {
        sub->add_option("--algorithm", algorithm, "single_task, mtl_algo1 or mtl_algo2")
            ->check(CLI::IsMember({"single_task", "mtl_algo1", "mtl_algo2", "single", "algo1", "algo2"}));
        sub->add_option("--alpha", alpha, "phoneme loss weight")->check(CLI::Range(0.0, 1.0));
    };

    app.add_subcommand("synth", "generate the synthetic corpus and its speaker split");
    app.add_subcommand("featurize", "compute z-normalized MFCC features");
    auto* train_cmd = app.add_subcommand("train", "train one model on the train split");
    add_features(train_cmd);
    add_training(train_cmd);
    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on one split");
    add_features(eval_cmd);
    eval_cmd->add_option("--model", model, "checkpoint directory")->required();
    eval_cmd->add_option("--split", opt.split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
    auto* ablate_cmd = app.add_subcommand("ablate", "mtl_algo2 over the configured alpha list");
    add_features(ablate_cmd);
    auto* compare_cmd = app.add_subcommand("compare", "single-task vs both multi-task algorithms");
    add_features(compare_cmd);
    auto* grid_cmd = app.add_subcommand("gridsearch", "learning-rate x batch-size grid scored on dev PPMC");
    add_features(grid_cmd);
    add_training(grid_cmd);
    auto* plot_cmd = app.add_subcommand("plotdata", "trajectory CSV for one utterance and two checkpoints");
    add_features(plot_cmd);
    plot_cmd->add_option("--model-a", model_a, "multi-task checkpoint")->required();
    plot_cmd->add_option("--model-b", model_b, "single-task checkpoint")->required();
    plot_cmd->add_option("--utterance", utterance, "utterance id")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::k_exit_invalid;
    }

    try {
        opt.prof = cli::parse_profile(profile_name);
    } catch (const error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return cli::k_exit_invalid;
    }
    opt.command = app.get_subcommands().front()->get_name();
    const auto set = [](std::optional<std::filesystem::path>& dst, const std::string& v) {
        if (!v.empty()) {
            dst = v;
        }
    };
    set(opt.config_file, config_file);
    set(opt.corpus, corpus);
    set(opt.features, features);
    set(opt.model, model);
    set(opt.model_a, model_a);
    set(opt.model_b, model_b);
    set(opt.out, out);
    if (seed_opt->count() > 0) {
        opt.seed = seed;
    }
    if (!algorithm.empty()) {
        opt.algorithm = algorithm;
    }
    for (auto* sub : {train_cmd, grid_cmd}) {
        if (sub->parsed() && sub->count("--alpha") > 0) {
            opt.alpha = alpha;
        }
    }
    if (!utterance.empty()) {
        opt.utterance = utterance;
    }
    return cli::run(opt);
}
