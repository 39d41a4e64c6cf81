#pragma once
// Command implementations behind the protosurv tool: synth, train, eval,
// explain, export. Every command writes its data outputs plus exactly one
// manifest into the target directory; data outputs are byte-identical
// across reruns with the same inputs and seed (the manifest carries
// wall-clock and is the one file allowed to differ).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "protosurv/core.hpp"
#include "protosurv/data.hpp"
#include "protosurv/io.hpp"
#include "protosurv/matching.hpp"
#include "protosurv/survival_eval.hpp"
#include "protosurv/trainer.hpp"
#include "protosurv/version.hpp"

namespace protosurv {

// ----------------------------------------------------------------- logging

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* v = std::getenv("PROTOSURV_LOG");
        if (v == nullptr) return LogLevel::info;
        const std::string s(v);
        if (s == "quiet") return LogLevel::quiet;
        if (s == "debug") return LogLevel::debug;
        return LogLevel::info;
    }();
    return level;
}

inline void log_info(const std::string& msg) {
    if (static_cast<int>(log_level()) >= static_cast<int>(LogLevel::info))
        std::cerr << "[protosurv] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
    if (static_cast<int>(log_level()) >= static_cast<int>(LogLevel::debug))
        std::cerr << "[protosurv] " << msg << "\n";
}

// ---------------------------------------------------------------- manifest

struct RunManifest {
    std::string command;
    std::string config_hash = "-";
    std::vector<std::string> inputs;
    std::string output;
    std::uint64_t seed = 0;
    double elapsed_seconds = 0.0;
    std::string extra;  // command-specific note (fold count, variant, ...)
};

inline void write_manifest(const std::filesystem::path& out_dir, const RunManifest& m) {
    std::ostringstream out;
    out << "protosurv_manifest v1\n";
    out << "command " << m.command << "\n";
    out << "engine_version " << kEngineVersion << "\n";
    out << "git_describe " << git_describe() << "\n";
    out << "seed " << m.seed << "\n";
    out << "config_hash " << m.config_hash << "\n";
    for (const auto& in : m.inputs) out << "input " << in << "\n";
    out << "output " << m.output << "\n";
    std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    out << "wall_clock_utc " << stamp << "\n";
    out << "elapsed_seconds " << format_real(m.elapsed_seconds) << "\n";
    if (!m.extra.empty()) out << "note " << m.extra << "\n";
    ioutil::write_text(out_dir / "manifest.txt", out.str());
}

class Stopwatch {
  public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

// ------------------------------------------------------------- synth spec

struct SynthFile {
    SynthSpec spec;
    int time_bins = 4;
};

inline SynthFile read_synth_spec(const std::filesystem::path& path) {
    const auto lines = ioutil::read_lines(path);
    const std::string p = path.string();
    ioutil::expect_header(lines, "protosurv_synth", p);
    SynthFile file;
    file.spec.modality_dims.clear();
    file.spec.class_profiles.clear();
    bool dims_seen = false, profiles_seen = false;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto toks = ioutil::split_tokens(lines[i]);
        if (toks.empty()) continue;
        const std::string ctx = ioutil::where(p, i + 1);
        const std::string& key = toks[0];
        if (key == "seed" && toks.size() == 2)
            file.spec.seed = static_cast<std::uint64_t>(ioutil::parse_int(toks[1], ctx));
        else if (key == "samples_per_class" && toks.size() == 2)
            file.spec.samples_per_class = static_cast<int>(ioutil::parse_int(toks[1], ctx));
        else if (key == "modality_dims" && toks.size() >= 2) {
            for (std::size_t t = 1; t < toks.size(); ++t)
                file.spec.modality_dims.push_back(
                    static_cast<int>(ioutil::parse_int(toks[t], ctx)));
            dims_seen = true;
        } else if (key == "separation" && toks.size() == 2)
            file.spec.separation = ioutil::parse_real(toks[1], ctx);
        else if (key == "censoring_rate" && toks.size() == 2)
            file.spec.censoring_rate = ioutil::parse_real(toks[1], ctx);
        else if (key == "time_levels" && toks.size() == 2)
            file.spec.time_levels = static_cast<int>(ioutil::parse_int(toks[1], ctx));
        else if (key == "time_bins" && toks.size() == 2)
            file.time_bins = static_cast<int>(ioutil::parse_int(toks[1], ctx));
        else if (key == "class_profiles" && toks.size() >= 3 && (toks.size() - 1) % 2 == 0) {
            for (std::size_t t = 1; t + 1 < toks.size(); t += 2)
                file.spec.class_profiles.push_back({ioutil::parse_real(toks[t], ctx),
                                                    ioutil::parse_real(toks[t + 1], ctx)});
            profiles_seen = true;
        } else
            throw DataError(ctx + ": bad synth spec line '" + lines[i] + "'");
    }
    if (!dims_seen) throw DataError(p + ": missing modality_dims");
    if (!profiles_seen) throw DataError(p + ": missing class_profiles");
    const auto report = validate_synth_spec(file.spec);
    if (!report.ok()) throw DataError(p + ": " + report.joined());
    if (file.time_bins <= 0) throw DataError(p + ": time_bins must be positive");
    return file;
}

inline std::string emit_synth_spec(const SynthFile& file) {
    std::ostringstream out;
    out << "protosurv_synth v1\n";
    out << "seed " << file.spec.seed << "\n";
    out << "samples_per_class " << file.spec.samples_per_class << "\n";
    out << "modality_dims";
    for (int d : file.spec.modality_dims) out << " " << d;
    out << "\n";
    out << "separation " << format_real(file.spec.separation) << "\n";
    out << "censoring_rate " << format_real(file.spec.censoring_rate) << "\n";
    out << "time_levels " << file.spec.time_levels << "\n";
    out << "time_bins " << file.time_bins << "\n";
    out << "class_profiles";
    for (const auto& cp : file.spec.class_profiles)
        out << " " << format_real(cp.median_time) << " " << format_real(cp.spread);
    out << "\n";
    return out.str();
}

// --------------------------------------------------------- output writers

inline std::string emit_metrics(const std::vector<EpochMetrics>& history) {
    std::ostringstream out;
    out << "protosurv_metrics v1\n";
    for (const auto& m : history)
        out << "epoch " << m.epoch << " loss " << format_real(m.mean_loss) << " train_ci "
            << format_real(m.train_c_index) << " val_ci " << format_real(m.val_c_index)
            << "\n";
    return out.str();
}

inline std::string emit_loss_log(const std::vector<StepLossRecord>& steps) {
    std::ostringstream out;
    out << "protosurv_loss_log v1\n";
    for (const auto& s : steps)
        out << "epoch " << s.epoch << " step " << s.step << " contrastive "
            << format_real(s.contrastive) << " center " << format_real(s.center)
            << " prototypes " << format_real(s.prototypes) << " survival "
            << format_real(s.survival) << " total " << format_real(s.total) << "\n";
    return out.str();
}

inline std::string emit_update_reports(const std::vector<UpdateReport>& reports) {
    std::ostringstream out;
    out << "protosurv_updates v1\n";
    for (const auto& r : reports) {
        double max_disp = 0.0;
        for (const auto& m : r.merges) max_disp = std::max(max_disp, m.displacement);
        out << "epoch " << r.epoch << " version " << r.new_version << " merged "
            << r.total_merged() << " replaced " << r.total_replaced()
            << " wandering_refreshed ";
        int wr = 0;
        for (const auto& c : r.per_class) wr += c.wandering_refreshed;
        out << wr << " max_displacement " << format_real(max_disp) << "\n";
    }
    return out.str();
}

inline std::string emit_predictions(const std::vector<SamplePrediction>& preds) {
    std::ostringstream out;
    out << "protosurv_predictions v1\n";
    for (const auto& p : preds) {
        out << "sample " << p.sample_id << " time " << format_real(p.event_time)
            << " censored " << p.censored << " risk " << format_real(p.hazard.risk)
            << " bin " << p.predicted_bin << " logits";
        for (double v : p.logits) out << " " << format_real(v);
        out << "\n";
    }
    return out.str();
}

inline std::string emit_trace(const ExplanationTrace& tr) {
    std::ostringstream out;
    out << "trace " << tr.sample_id << " predicted_bin " << tr.predicted_bin << " risk "
        << format_real(tr.risk) << "\n";
    out << "logits";
    for (double v : tr.logits) out << " " << format_real(v);
    out << "\n";
    for (const auto& c : tr.classes) {
        out << "class " << c.class_index << " mean " << format_real(c.mean_similarity)
            << " max " << format_real(c.max_similarity) << " center "
            << format_real(c.center_similarity) << " logit " << format_real(c.logit)
            << " nearest " << c.nearest_id << " " << to_string(c.nearest_kind) << "\n";
        out << "sources " << c.class_index << " " << c.nearest_sources.size();
        for (const auto& s : c.nearest_sources)
            out << " " << s.sample_id << " " << format_real(s.weight);
        out << "\n";
        out << "row " << c.class_index;
        for (double v : c.similarity_row) out << " " << format_real(v);
        out << "\n";
    }
    out << "end\n";
    return out.str();
}

inline std::string emit_km_curve(const KMCurve& curve, const std::string& group_name,
                                 std::size_t group_size) {
    std::ostringstream out;
    out << "protosurv_km v1\n";
    out << "group " << group_name << "\n";
    out << "n " << group_size << "\n";
    for (const auto& pt : curve.points)
        out << "time " << format_real(pt.time) << " survival " << format_real(pt.survival)
            << " at_risk " << pt.at_risk << " events " << pt.events << "\n";
    return out.str();
}

inline std::string emit_risk_summary(const std::vector<CohortSample>& group,
                                     const std::string& name) {
    std::vector<double> risks;
    risks.reserve(group.size());
    for (const auto& s : group) risks.push_back(s.risk);
    std::sort(risks.begin(), risks.end());
    auto quantile = [&](double q) {
        if (risks.empty()) return 0.0;
        const double pos = q * static_cast<double>(risks.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const auto hi = std::min(lo + 1, risks.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return risks[lo] * (1.0 - frac) + risks[hi] * frac;
    };
    double mean = 0.0;
    for (double r : risks) mean += r;
    if (!risks.empty()) mean /= static_cast<double>(risks.size());
    std::ostringstream out;
    out << "group " << name << " n " << risks.size();
    if (!risks.empty())
        out << " min " << format_real(risks.front()) << " q1 " << format_real(quantile(0.25))
            << " median " << format_real(quantile(0.5)) << " q3 "
            << format_real(quantile(0.75)) << " max " << format_real(risks.back())
            << " mean " << format_real(mean);
    out << "\n";
    return out.str();
}

// ------------------------------------------------------------- checkpoint

struct Checkpoint {
    EngineConfig config;
    FusionEncoder encoder;
    PrototypeLibrary library;
};

inline void write_checkpoint(const std::filesystem::path& dir, const TrainState& state) {
    write_config(dir / "config.txt", state.config);
    write_encoder(dir / "encoder.txt", state.encoder);
    write_library(dir / "library.txt", state.library);
    ioutil::write_text(dir / "metrics.txt", emit_metrics(state.history));
    ioutil::write_text(dir / "loss_log.txt", emit_loss_log(state.step_losses));
    ioutil::write_text(dir / "updates.txt", emit_update_reports(state.update_reports));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& dir) {
    Checkpoint ck;
    ck.config = read_config(dir / "config.txt");
    ck.encoder = read_encoder(dir / "encoder.txt");
    ck.library = read_library(dir / "library.txt");
    const auto report = validate_config(ck.config);
    if (!report.ok())
        throw DataError("checkpoint " + dir.string() + ": invalid config: " + report.joined());
    if (!ck.library.config_hash.empty() && ck.library.config_hash != config_hash(ck.config))
        throw DataError("checkpoint " + dir.string() +
                        ": library config hash does not match config.txt");
    return ck;
}

// --------------------------------------------------------------- commands

inline void cmd_synth(const std::filesystem::path& spec_path,
                      const std::filesystem::path& out_dir,
                      std::optional<std::uint64_t> seed_override = std::nullopt) {
    Stopwatch timer;
    SynthFile file = read_synth_spec(spec_path);
    if (seed_override) file.spec.seed = *seed_override;
    log_info("generating synthetic dataset, seed " + std::to_string(file.spec.seed));
    Dataset ds = generate_synthetic(file.spec);
    bin_times(ds, file.time_bins);
    write_dataset(out_dir / "dataset.txt", ds);
    write_bin_edges(out_dir / "bin_edges.txt", ds.bin_edges);
    ioutil::write_text(out_dir / "spec_used.txt", emit_synth_spec(file));

    RunManifest m;
    m.command = "synth";
    m.seed = file.spec.seed;
    m.inputs = {spec_path.string()};
    m.output = out_dir.string();
    m.elapsed_seconds = timer.seconds();
    write_manifest(out_dir, m);
    log_info("wrote " + std::to_string(ds.records.size()) + " records to " +
             out_dir.string());
}

struct TrainCommandOptions {
    std::uint64_t seed = 2026;
    int folds = 0;  // 0 = single 8:2 split
    std::string ablation;  // empty, a variant name, or "all"
    double train_fraction = 0.8;
};

inline Dataset load_dataset_dir(const std::filesystem::path& dataset_dir) {
    Dataset ds = read_dataset(dataset_dir / "dataset.txt");
    const auto edges_path = dataset_dir / "bin_edges.txt";
    if (std::filesystem::exists(edges_path)) ds.bin_edges = read_bin_edges(edges_path);
    return ds;
}

inline void cmd_train(const std::filesystem::path& dataset_dir,
                      const std::filesystem::path& config_path,
                      const std::filesystem::path& out_dir,
                      const TrainCommandOptions& cmd_opts) {
    Stopwatch timer;
    std::vector<std::pair<std::string, std::string>> extra;
    EngineConfig cfg = read_config(config_path, &extra);
    TrainOptions opts;
    opts.seed = cmd_opts.seed;
    for (const auto& [key, val] : extra) {
        const std::string ctx = config_path.string() + ": key " + key;
        if (key == "epochs") opts.epochs = static_cast<int>(ioutil::parse_int(val, ctx));
        else if (key == "batch_size") opts.batch_size = static_cast<int>(ioutil::parse_int(val, ctx));
        else if (key == "learning_rate") opts.learning_rate = ioutil::parse_real(val, ctx);
        else if (key == "update_strategy") opts.update_strategy = update_strategy_from_string(val);
        else throw DataError(ctx + ": unknown key");
    }
    {
        const auto report = validate_config(cfg);
        if (!report.ok()) throw DataError(config_path.string() + ": " + report.joined());
    }

    Dataset ds = load_dataset_dir(dataset_dir);
    if (!ds.binned()) throw DataError(dataset_dir.string() + ": missing bin_edges.txt");

    if (cmd_opts.ablation == "all") {
        auto [train_set, val_set] = shuffle_split(ds, cmd_opts.train_fraction, opts.seed);
        const auto rows = run_all_ablations(train_set, val_set, cfg, opts);
        std::ostringstream out;
        out << "protosurv_ablation v1\n";
        for (const auto& r : rows)
            out << "variant " << to_string(r.variant) << " train_ci "
                << format_real(r.train_c_index) << " val_ci " << format_real(r.val_c_index)
                << " loss " << format_real(r.final_loss) << "\n";
        ioutil::write_text(out_dir / "ablation.txt", out.str());
        RunManifest m;
        m.command = "train";
        m.seed = opts.seed;
        m.config_hash = config_hash(cfg);
        m.inputs = {dataset_dir.string(), config_path.string()};
        m.output = out_dir.string();
        m.elapsed_seconds = timer.seconds();
        m.extra = "ablation all";
        write_manifest(out_dir, m);
        return;
    }

    AblationVariant variant = AblationVariant::full;
    if (!cmd_opts.ablation.empty())
        variant = ablation_variant_from_string(cmd_opts.ablation);
    apply_variant(variant, cfg, opts);
    {
        const auto report = validate_config(cfg);
        if (!report.ok())
            throw DataError("effective config after ablation: " + report.joined());
    }

    if (cmd_opts.folds > 0) {
        std::vector<double> fold_cis;
        for (int f = 0; f < cmd_opts.folds; ++f) {
            const std::uint64_t fold_seed = opts.seed + static_cast<std::uint64_t>(f);
            auto [train_set, val_set] =
                shuffle_split(ds, cmd_opts.train_fraction, fold_seed);
            TrainOptions fold_opts = opts;
            fold_opts.seed = fold_seed;
            log_info("fold " + std::to_string(f) + ": " +
                     std::to_string(train_set.records.size()) + " train / " +
                     std::to_string(val_set.records.size()) + " val");
            const TrainState state = train(train_set, val_set, cfg, fold_opts);
            write_checkpoint(out_dir / ("fold_" + std::to_string(f)), state);
            fold_cis.push_back(state.history.back().val_c_index);
        }
        double mean = 0.0;
        for (double v : fold_cis) mean += v;
        mean /= static_cast<double>(fold_cis.size());
        double var = 0.0;
        for (double v : fold_cis) var += (v - mean) * (v - mean);
        const double stddev =
            fold_cis.size() > 1 ? std::sqrt(var / static_cast<double>(fold_cis.size() - 1))
                                : 0.0;
        std::ostringstream out;
        out << "protosurv_folds v1\n";
        for (std::size_t f = 0; f < fold_cis.size(); ++f)
            out << "fold " << f << " val_ci " << format_real(fold_cis[f]) << "\n";
        out << "aggregate mean " << format_real(mean) << " std " << format_real(stddev)
            << "\n";
        ioutil::write_text(out_dir / "folds.txt", out.str());
    } else {
        auto [train_set, val_set] = shuffle_split(ds, cmd_opts.train_fraction, opts.seed);
        log_info("training: " + std::to_string(train_set.records.size()) + " train / " +
                 std::to_string(val_set.records.size()) + " val");
        const TrainState state = train(train_set, val_set, cfg, opts);
        write_checkpoint(out_dir, state);
        log_info("final val C-index " + format_real(state.history.back().val_c_index));
    }

    RunManifest m;
    m.command = "train";
    m.seed = opts.seed;
    m.config_hash = config_hash(cfg);
    m.inputs = {dataset_dir.string(), config_path.string()};
    m.output = out_dir.string();
    m.elapsed_seconds = timer.seconds();
    if (!cmd_opts.ablation.empty()) m.extra = "ablation " + cmd_opts.ablation;
    if (cmd_opts.folds > 0) m.extra = "folds " + std::to_string(cmd_opts.folds);
    write_manifest(out_dir, m);
}

inline void cmd_eval(const std::filesystem::path& checkpoint_dir,
                     const std::filesystem::path& dataset_dir,
                     const std::filesystem::path& out_dir) {
    Stopwatch timer;
    const Checkpoint ck = read_checkpoint(checkpoint_dir);
    Dataset ds = load_dataset_dir(dataset_dir);
    if (ds.records.empty()) throw DataError(dataset_dir.string() + ": empty dataset");
    if (ds.input_dim() != ck.encoder.input_dim)
        throw DataError("dimension mismatch: dataset input dim " +
                        std::to_string(ds.input_dim()) + ", encoder expects " +
                        std::to_string(ck.encoder.input_dim));

    const auto preds = predict_dataset(ck.encoder, ck.library, ck.config, ds);
    const auto cohort = cohort_from_predictions(preds);
    const double ci = c_index(cohort);
    auto [high, low] = median_risk_split(cohort);

    std::ostringstream report;
    report << "protosurv_eval v1\n";
    report << "samples " << cohort.size() << "\n";
    report << "c_index " << format_real(ci) << "\n";
    report << "high_group " << high.size() << "\n";
    report << "low_group " << low.size() << "\n";
    if (!high.empty() && !low.empty()) {
        int events = 0;
        for (const auto& s : cohort) events += s.censored == 0 ? 1 : 0;
        if (events > 0) {
            const LogRankResult lr = logrank_test(high, low);
            report << "logrank_chi_square " << format_real(lr.chi_square) << "\n";
            report << "logrank_p " << format_real(lr.p_value) << "\n";
        } else {
            report << "logrank_skipped zero_events\n";
        }
    } else {
        report << "logrank_skipped empty_group\n";
    }
    ioutil::write_text(out_dir / "eval_report.txt", report.str());
    ioutil::write_text(out_dir / "predictions.txt", emit_predictions(preds));
    if (!high.empty())
        ioutil::write_text(out_dir / "km_high.txt",
                           emit_km_curve(km_curve(high), "high", high.size()));
    if (!low.empty())
        ioutil::write_text(out_dir / "km_low.txt",
                           emit_km_curve(km_curve(low), "low", low.size()));
    {
        std::ostringstream groups;
        groups << "protosurv_groups v1\n";
        const double median = median_risk(cohort);
        for (const auto& s : cohort)
            groups << "sample " << s.sample_id << " risk " << format_real(s.risk)
                   << " group " << (s.risk > median ? "high" : "low") << "\n";
        ioutil::write_text(out_dir / "groups.txt", groups.str());
    }
    {
        std::ostringstream summary;
        summary << "protosurv_risk_summary v1\n";
        summary << emit_risk_summary(high, "high");
        summary << emit_risk_summary(low, "low");
        summary << emit_risk_summary(cohort, "all");
        ioutil::write_text(out_dir / "risk_summary.txt", summary.str());
    }

    RunManifest m;
    m.command = "eval";
    m.config_hash = config_hash(ck.config);
    m.inputs = {checkpoint_dir.string(), dataset_dir.string()};
    m.output = out_dir.string();
    m.elapsed_seconds = timer.seconds();
    write_manifest(out_dir, m);
    log_info("eval C-index " + format_real(ci));
}

inline void cmd_explain(const std::filesystem::path& checkpoint_dir,
                        const std::filesystem::path& sample_file,
                        const std::filesystem::path& out_dir) {
    Stopwatch timer;
    const Checkpoint ck = read_checkpoint(checkpoint_dir);
    const Dataset ds = read_dataset(sample_file);
    if (ds.input_dim() != ck.encoder.input_dim)
        throw DataError("dimension mismatch: sample input dim " +
                        std::to_string(ds.input_dim()) + ", encoder expects " +
                        std::to_string(ck.encoder.input_dim));

    std::ostringstream out;
    out << "protosurv_traces v1\n";
    for (const auto& r : ds.records) {
        const Vec fused = ck.encoder.encode(r);
        const auto [logits, trace] = mpmatch(fused, ck.library, ck.config, r.sample_id);
        out << emit_trace(trace);
    }
    ioutil::write_text(out_dir / "traces.txt", out.str());

    RunManifest m;
    m.command = "explain";
    m.config_hash = config_hash(ck.config);
    m.inputs = {checkpoint_dir.string(), sample_file.string()};
    m.output = out_dir.string();
    m.elapsed_seconds = timer.seconds();
    write_manifest(out_dir, m);
    log_info("wrote traces for " + std::to_string(ds.records.size()) + " samples");
}

inline void cmd_export(const std::filesystem::path& checkpoint_dir,
                       const std::filesystem::path& out_dir) {
    Stopwatch timer;
    const Checkpoint ck = read_checkpoint(checkpoint_dir);

    std::ostringstream out;
    out << "id\tclass\tkind\tslot\tsources";
    for (int d = 0; d < ck.library.dim; ++d) out << "\tv" << d;
    out << "\n";
    auto emit_row = [&](const PrototypeEntry& e, int slot) {
        out << e.id << "\t" << e.class_index << "\t" << to_string(e.kind) << "\t" << slot
            << "\t";
        for (std::size_t s = 0; s < e.sources.size(); ++s) {
            if (s > 0) out << ",";
            out << e.sources[s].sample_id << ":" << format_real(e.sources[s].weight);
        }
        for (double v : e.vector) out << "\t" << format_real(v);
        out << "\n";
    };
    for (int c = 0; c < ck.library.num_classes; ++c)
        for (int s = 0; s < static_cast<int>(ck.library.typical[c].size()); ++s)
            emit_row(ck.library.typical[c][s], s);
    for (int c = 0; c < ck.library.num_classes; ++c)
        for (int s = 0; s < static_cast<int>(ck.library.wandering[c].size()); ++s)
            emit_row(ck.library.wandering[c][s], s);
    ioutil::write_text(out_dir / "prototypes.tsv", out.str());
    write_library(out_dir / "library.txt", ck.library);  // canonical round-trip copy

    RunManifest m;
    m.command = "export";
    m.config_hash = config_hash(ck.config);
    m.inputs = {checkpoint_dir.string()};
    m.output = out_dir.string();
    m.elapsed_seconds = timer.seconds();
    write_manifest(out_dir, m);
}

}  // namespace protosurv
