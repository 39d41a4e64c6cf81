#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "protosurv/cli.hpp"

using namespace protosurv;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / ("protosurv_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_small_synth_spec(const fs::path& p, int per_class = 40,
                            std::uint64_t seed = 600) {
    std::ostringstream out;
    out << "protosurv_synth v1\n";
    out << "seed " << seed << "\n";
    out << "samples_per_class " << per_class << "\n";
    out << "modality_dims 5 3\n";
    out << "separation 5\n";
    out << "censoring_rate 0.2\n";
    out << "time_levels 3\n";
    out << "time_bins 4\n";
    out << "class_profiles 96 0.15 48 0.15 24 0.15 12 0.15\n";
    ioutil::write_text(p, out.str());
}

void write_small_config(const fs::path& p) {
    EngineConfig cfg;
    cfg.fused_dim = 8;
    cfg.typical_per_class = 8;
    cfg.wandering_per_class = 3;
    std::string text = emit_config(cfg);
    text += "epochs 2\nbatch_size 16\nlearning_rate 0.001\nupdate_strategy ema\n";
    ioutil::write_text(p, text);
}

int run_tool(const std::string& args) {
    const std::string cmd =
        std::string(PROTOSURV_TOOL_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("synth writes a reloadable dataset with manifest", "[cli]") {
    TempDir dir("synth");
    const auto spec = dir.path / "spec.txt";
    write_small_synth_spec(spec);
    cmd_synth(spec, dir.path / "out");

    const Dataset ds = read_dataset(dir.path / "out" / "dataset.txt");
    REQUIRE(ds.records.size() == 160);
    REQUIRE(ds.modality_dims == std::vector<int>{5, 3});
    const Vec edges = read_bin_edges(dir.path / "out" / "bin_edges.txt");
    REQUIRE(edges.size() == 5);
    REQUIRE(fs::exists(dir.path / "out" / "manifest.txt"));
    REQUIRE_THAT(slurp(dir.path / "out" / "manifest.txt"),
                 Catch::Matchers::ContainsSubstring("command synth"));

    // byte-identical rerun of the data outputs
    cmd_synth(spec, dir.path / "out2");
    REQUIRE(slurp(dir.path / "out" / "dataset.txt") ==
            slurp(dir.path / "out2" / "dataset.txt"));
    REQUIRE(slurp(dir.path / "out" / "bin_edges.txt") ==
            slurp(dir.path / "out2" / "bin_edges.txt"));

    // seed override changes the data
    cmd_synth(spec, dir.path / "out3", 601);
    REQUIRE(slurp(dir.path / "out" / "dataset.txt") !=
            slurp(dir.path / "out3" / "dataset.txt"));
}

TEST_CASE("malformed synth spec is a data error", "[cli]") {
    TempDir dir("badspec");
    ioutil::write_text(dir.path / "spec.txt", "protosurv_synth v1\nnonsense here\n");
    REQUIRE_THROWS_AS(cmd_synth(dir.path / "spec.txt", dir.path / "out"), DataError);
}

TEST_CASE("train produces a checkpoint that eval and explain agree on", "[cli]") {
    TempDir dir("pipeline");
    write_small_synth_spec(dir.path / "spec.txt");
    write_small_config(dir.path / "config.txt");
    cmd_synth(dir.path / "spec.txt", dir.path / "data");

    TrainCommandOptions opts;
    opts.seed = 600;
    cmd_train(dir.path / "data", dir.path / "config.txt", dir.path / "run", opts);

    for (const char* f : {"config.txt", "encoder.txt", "library.txt", "metrics.txt",
                          "loss_log.txt", "updates.txt", "manifest.txt"})
        REQUIRE(fs::exists(dir.path / "run" / f));

    // checkpoint reloads and its library validates
    const Checkpoint ck = read_checkpoint(dir.path / "run");
    REQUIRE(validate_library(ck.library).ok());

    // eval
    cmd_eval(dir.path / "run", dir.path / "data", dir.path / "eval");
    REQUIRE(fs::exists(dir.path / "eval" / "eval_report.txt"));
    REQUIRE(fs::exists(dir.path / "eval" / "predictions.txt"));
    REQUIRE(fs::exists(dir.path / "eval" / "km_high.txt"));
    REQUIRE(fs::exists(dir.path / "eval" / "km_low.txt"));
    REQUIRE(fs::exists(dir.path / "eval" / "risk_summary.txt"));
    REQUIRE(fs::exists(dir.path / "eval" / "groups.txt"));
    REQUIRE_THAT(slurp(dir.path / "eval" / "eval_report.txt"),
                 Catch::Matchers::ContainsSubstring("c_index "));

    // explain on the same dataset: fused logits must match eval bit-for-bit
    cmd_explain(dir.path / "run", dir.path / "data" / "dataset.txt", dir.path / "expl");
    const std::string traces = slurp(dir.path / "expl" / "traces.txt");
    const std::string predictions = slurp(dir.path / "eval" / "predictions.txt");

    std::map<std::string, std::string> trace_logits;
    {
        std::istringstream ss(traces);
        std::string line, current;
        while (std::getline(ss, line)) {
            const auto toks = ioutil::split_tokens(line);
            if (toks.empty()) continue;
            if (toks[0] == "trace") current = toks[1];
            if (toks[0] == "logits") {
                std::string joined;
                for (std::size_t i = 1; i < toks.size(); ++i)
                    joined += (i > 1 ? " " : "") + toks[i];
                trace_logits[current] = joined;
            }
        }
    }
    int compared = 0;
    {
        std::istringstream ss(predictions);
        std::string line;
        while (std::getline(ss, line)) {
            const auto toks = ioutil::split_tokens(line);
            if (toks.size() < 12 || toks[0] != "sample") continue;
            std::string joined;
            for (std::size_t i = 11; i < toks.size(); ++i)
                joined += (i > 11 ? " " : "") + toks[i];
            REQUIRE(trace_logits.at(toks[1]) == joined);
            compared += 1;
        }
    }
    REQUIRE(compared == 160);

    // export: one row per prototype, kinds closed, canonical copy reloads
    cmd_export(dir.path / "run", dir.path / "exp");
    const std::string tsv = slurp(dir.path / "exp" / "prototypes.tsv");
    int rows = -1;  // header
    std::istringstream ss(tsv);
    std::string line;
    while (std::getline(ss, line)) {
        if (!line.empty()) rows += 1;
        if (rows >= 1) {
            REQUIRE((line.find("\ttypical\t") != std::string::npos ||
                     line.find("\twandering\t") != std::string::npos));
        }
    }
    REQUIRE(rows == 4 * (8 + 3));
    const PrototypeLibrary reimported = read_library(dir.path / "exp" / "library.txt");
    REQUIRE(validate_library(reimported).ok());
    REQUIRE(emit_library(reimported) == emit_library(ck.library));

    // rerunning any command is byte-identical on every data output
    cmd_train(dir.path / "data", dir.path / "config.txt", dir.path / "run2", opts);
    for (const char* f : {"config.txt", "encoder.txt", "library.txt", "metrics.txt",
                          "loss_log.txt", "updates.txt"})
        REQUIRE(slurp(dir.path / "run" / f) == slurp(dir.path / "run2" / f));
    cmd_eval(dir.path / "run", dir.path / "data", dir.path / "eval2");
    for (const char* f : {"eval_report.txt", "predictions.txt", "km_high.txt",
                          "km_low.txt", "groups.txt", "risk_summary.txt"})
        REQUIRE(slurp(dir.path / "eval" / f) == slurp(dir.path / "eval2" / f));
    cmd_explain(dir.path / "run", dir.path / "data" / "dataset.txt", dir.path / "expl2");
    REQUIRE(slurp(dir.path / "expl" / "traces.txt") ==
            slurp(dir.path / "expl2" / "traces.txt"));
    cmd_export(dir.path / "run", dir.path / "exp2");
    REQUIRE(slurp(dir.path / "exp" / "prototypes.tsv") ==
            slurp(dir.path / "exp2" / "prototypes.tsv"));

    // recorded-run comparison: evaluating the checkpoint on its own training
    // split reproduces the final train C-index and beats the validation one
    double final_train_ci = 0.0, final_val_ci = 0.0;
    {
        std::istringstream ms(slurp(dir.path / "run" / "metrics.txt"));
        while (std::getline(ms, line)) {
            const auto toks = ioutil::split_tokens(line);
            if (toks.size() == 8 && toks[0] == "epoch") {
                final_train_ci = ioutil::parse_real(toks[5], "metrics");
                final_val_ci = ioutil::parse_real(toks[7], "metrics");
            }
        }
    }
    {
        const Dataset full = load_dataset_dir(dir.path / "data");
        auto [train_set, val_set] = shuffle_split(full, 0.8, opts.seed);
        write_dataset(dir.path / "trainonly" / "dataset.txt", train_set);
        write_bin_edges(dir.path / "trainonly" / "bin_edges.txt", full.bin_edges);
    }
    cmd_eval(dir.path / "run", dir.path / "trainonly", dir.path / "evtrain");
    double eval_train_ci = -1.0;
    {
        std::istringstream rs(slurp(dir.path / "evtrain" / "eval_report.txt"));
        while (std::getline(rs, line)) {
            const auto toks = ioutil::split_tokens(line);
            if (toks.size() == 2 && toks[0] == "c_index")
                eval_train_ci = ioutil::parse_real(toks[1], "eval_report");
        }
    }
    REQUIRE(eval_train_ci == final_train_ci);  // same library, same path
    REQUIRE(eval_train_ci >= final_val_ci);
}

TEST_CASE("explain of a stored prototype vector retrieves it at similarity one",
          "[cli]") {
    TempDir dir("protoid");
    write_small_synth_spec(dir.path / "spec.txt");
    write_small_config(dir.path / "config.txt");
    cmd_synth(dir.path / "spec.txt", dir.path / "data");
    TrainCommandOptions opts;
    opts.seed = 600;
    cmd_train(dir.path / "data", dir.path / "config.txt", dir.path / "run", opts);

    const Checkpoint ck = read_checkpoint(dir.path / "run");
    const PrototypeEntry& target = ck.library.typical[1][0];
    const auto [logits, trace] =
        mpmatch(target.vector, ck.library, ck.config, "probe");
    REQUIRE(trace.classes[1].nearest_id == target.id);
    REQUIRE(trace.classes[1].max_similarity == 1.0);

    // F = 1 truncates the cited sources to exactly one per class
    EngineConfig one_source = ck.config;
    one_source.top_sources = 1;
    const auto [l2, t2] = mpmatch(target.vector, ck.library, one_source, "probe");
    for (const auto& row : t2.classes) REQUIRE(row.nearest_sources.size() == 1);
}

TEST_CASE("folds produce per-fold metrics plus a mean/std aggregate", "[cli]") {
    TempDir dir("folds");
    write_small_synth_spec(dir.path / "spec.txt");
    write_small_config(dir.path / "config.txt");
    cmd_synth(dir.path / "spec.txt", dir.path / "data");

    TrainCommandOptions opts;
    opts.seed = 600;
    opts.folds = 3;
    cmd_train(dir.path / "data", dir.path / "config.txt", dir.path / "cv", opts);

    std::vector<double> fold_cis;
    double mean = 0.0, stddev = 0.0;
    {
        std::istringstream ss(slurp(dir.path / "cv" / "folds.txt"));
        std::string line;
        while (std::getline(ss, line)) {
            const auto toks = ioutil::split_tokens(line);
            if (toks.size() == 4 && toks[0] == "fold")
                fold_cis.push_back(ioutil::parse_real(toks[3], "folds"));
            if (toks.size() == 5 && toks[0] == "aggregate") {
                mean = ioutil::parse_real(toks[2], "folds");
                stddev = ioutil::parse_real(toks[4], "folds");
            }
        }
    }
    REQUIRE(fold_cis.size() == 3);
    for (int f = 0; f < 3; ++f)
        REQUIRE(fs::exists(dir.path / "cv" / ("fold_" + std::to_string(f)) /
                           "library.txt"));

    // aggregate equals an independent mean/std recomputation
    double m = 0.0;
    for (double v : fold_cis) m += v;
    m /= 3.0;
    double var = 0.0;
    for (double v : fold_cis) var += (v - m) * (v - m);
    const double sd = std::sqrt(var / 2.0);
    REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(m, 1e-12));
    REQUIRE_THAT(stddev, Catch::Matchers::WithinAbs(sd, 1e-12));
}

TEST_CASE("ablation flag is recorded and variant runs complete", "[cli]") {
    TempDir dir("ablation");
    write_small_synth_spec(dir.path / "spec.txt", 30);
    write_small_config(dir.path / "config.txt");
    cmd_synth(dir.path / "spec.txt", dir.path / "data");

    TrainCommandOptions opts;
    opts.seed = 600;
    opts.ablation = "no_wandering";
    cmd_train(dir.path / "data", dir.path / "config.txt", dir.path / "run", opts);
    REQUIRE_THAT(slurp(dir.path / "run" / "manifest.txt"),
                 Catch::Matchers::ContainsSubstring("ablation no_wandering"));
    const Checkpoint ck = read_checkpoint(dir.path / "run");
    REQUIRE(ck.library.wandering_per_class == 0);

    opts.ablation = "all";
    cmd_train(dir.path / "data", dir.path / "config.txt", dir.path / "all", opts);
    const std::string table = slurp(dir.path / "all" / "ablation.txt");
    for (const char* name : {"full", "no_wandering", "basic_update",
                             "nearest_only_match", "nll_only", "proto_only"})
        REQUIRE_THAT(table, Catch::Matchers::ContainsSubstring(std::string("variant ") +
                                                               name + " "));
}

TEST_CASE("eval rejects mismatched dimensions and empty datasets", "[cli]") {
    TempDir dir("evalbad");
    write_small_synth_spec(dir.path / "spec.txt", 30);
    write_small_config(dir.path / "config.txt");
    cmd_synth(dir.path / "spec.txt", dir.path / "data");
    TrainCommandOptions opts;
    opts.seed = 600;
    cmd_train(dir.path / "data", dir.path / "config.txt", dir.path / "run", opts);

    // wrong dimensions
    std::ostringstream other;
    other << "protosurv_synth v1\nseed 9\nsamples_per_class 30\nmodality_dims 4 3\n"
          << "separation 5\ncensoring_rate 0.2\ntime_levels 3\ntime_bins 4\n"
          << "class_profiles 96 0.15 48 0.15 24 0.15 12 0.15\n";
    ioutil::write_text(dir.path / "spec2.txt", other.str());
    cmd_synth(dir.path / "spec2.txt", dir.path / "data2");
    try {
        cmd_eval(dir.path / "run", dir.path / "data2", dir.path / "eval");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("dimension mismatch"));
    }

    // empty dataset
    ioutil::write_text(dir.path / "empty" / "dataset.txt",
                       "protosurv_dataset v1\nmodality_dims 5 3\nrecords 0\n");
    REQUIRE_THROWS_AS(cmd_eval(dir.path / "run", dir.path / "empty", dir.path / "e2"),
                      DataError);
}

TEST_CASE("tool exit codes", "[cli]") {
    TempDir dir("exitcodes");
    REQUIRE(run_tool("") == 1);                       // usage: missing subcommand
    REQUIRE(run_tool("train") == 1);                  // usage: missing arguments
    REQUIRE(run_tool("synth missing.txt --out " +
                     (dir.path / "o").string()) == 2);  // data error

    // happy path end-to-end through the binary
    write_small_synth_spec(dir.path / "spec.txt", 30);
    write_small_config(dir.path / "config.txt");
    REQUIRE(run_tool("synth " + (dir.path / "spec.txt").string() + " --out " +
                     (dir.path / "data").string()) == 0);
    REQUIRE(run_tool("train " + (dir.path / "data").string() + " --config " +
                     (dir.path / "config.txt").string() + " --out " +
                     (dir.path / "run").string() + " --seed 600") == 0);
    REQUIRE(run_tool("eval " + (dir.path / "run").string() + " " +
                     (dir.path / "data").string() + " --out " +
                     (dir.path / "ev").string()) == 0);
    REQUIRE(run_tool("export " + (dir.path / "run").string() + " --out " +
                     (dir.path / "ex").string()) == 0);
    // each command's output directory holds exactly one manifest
    for (const char* d : {"data", "run", "ev", "ex"}) {
        int manifests = 0;
        for (const auto& entry : fs::recursive_directory_iterator(dir.path / d))
            if (entry.path().filename() == "manifest.txt") manifests += 1;
        REQUIRE(manifests == 1);
    }
}
