// protosurv: prototype-based survival prediction engine.
//
// Subcommands: synth, train, eval, explain, export.
// Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "protosurv/cli.hpp"

namespace {

int run(int argc, char** argv) {
    CLI::App app{"prototype-based survival prediction engine"};
    app.require_subcommand(1);

    // synth
    std::string synth_spec, synth_out;
    std::int64_t synth_seed = -1;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("spec", synth_spec, "synth spec file")->required();
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "override the spec seed");

    // train
    std::string train_dataset, train_config, train_out, train_ablation;
    std::uint64_t train_seed = 2026;
    int train_folds = 0;
    auto* trainc = app.add_subcommand("train", "train a checkpoint");
    trainc->add_option("dataset", train_dataset, "dataset directory")->required();
    trainc->add_option("--config", train_config, "engine config file")->required();
    trainc->add_option("--out", train_out, "output directory")->required();
    trainc->add_option("--seed", train_seed, "training seed");
    trainc->add_option("--folds", train_folds, "seeded 8:2 cross-validation folds");
    trainc->add_option("--ablation", train_ablation,
                       "variant: full, no_wandering, basic_update, nearest_only_match, "
                       "nll_only, proto_only, or 'all'");

    // eval
    std::string eval_checkpoint, eval_dataset, eval_out;
    auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    evalc->add_option("checkpoint", eval_checkpoint, "checkpoint directory")->required();
    evalc->add_option("dataset", eval_dataset, "dataset directory")->required();
    evalc->add_option("--out", eval_out, "output directory")->required();

    // explain
    std::string explain_checkpoint, explain_samples, explain_out;
    auto* explainc = app.add_subcommand("explain", "trace predictions for samples");
    explainc->add_option("checkpoint", explain_checkpoint, "checkpoint directory")
        ->required();
    explainc->add_option("samples", explain_samples, "sample file (dataset format)")
        ->required();
    explainc->add_option("--out", explain_out, "output directory")->required();

    // export
    std::string export_checkpoint, export_out;
    auto* exportc = app.add_subcommand("export", "export prototype coordinates");
    exportc->add_option("checkpoint", export_checkpoint, "checkpoint directory")
        ->required();
    exportc->add_option("--out", export_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints the message or help text
        return code == 0 ? 0 : 1;     // usage problems exit with 1
    }

    if (synth->parsed()) {
        std::optional<std::uint64_t> seed;
        if (synth_seed >= 0) seed = static_cast<std::uint64_t>(synth_seed);
        protosurv::cmd_synth(synth_spec, synth_out, seed);
    } else if (trainc->parsed()) {
        protosurv::TrainCommandOptions opts;
        opts.seed = train_seed;
        opts.folds = train_folds;
        opts.ablation = train_ablation;
        protosurv::cmd_train(train_dataset, train_config, train_out, opts);
    } else if (evalc->parsed()) {
        protosurv::cmd_eval(eval_checkpoint, eval_dataset, eval_out);
    } else if (explainc->parsed()) {
        protosurv::cmd_explain(explain_checkpoint, explain_samples, explain_out);
    } else if (exportc->parsed()) {
        protosurv::cmd_export(export_checkpoint, export_out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const protosurv::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const protosurv::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const protosurv::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
