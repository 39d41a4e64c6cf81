#pragma once
// Desk-scale training: an affine fusion encoder with tanh squashing and
// (policy-dependent) L2 normalization, plain gradient descent with a
// cosine-decayed step size, and periodic prototype-library updates fed by
// the epoch's encoded features. Everything is seeded and single-threaded,
// so two runs with the same inputs are bitwise identical.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "protosurv/core.hpp"
#include "protosurv/data.hpp"
#include "protosurv/io.hpp"
#include "protosurv/library.hpp"
#include "protosurv/losses.hpp"
#include "protosurv/matching.hpp"
#include "protosurv/similarity.hpp"
#include "protosurv/survival_eval.hpp"

namespace protosurv {

// Affine map from the concatenated modality blocks to the fused dimension,
// tanh squashing, then L2 normalization when the policy normalizes at
// encoding time.
struct FusionEncoder {
    int input_dim = 0;
    int fused_dim = 0;
    bool normalize_output = true;
    Vec weights;  // fused_dim x input_dim, row-major
    Vec bias;     // fused_dim

    static FusionEncoder init(int input_dim, int fused_dim, std::mt19937_64& rng,
                              bool normalize_output = true) {
        FusionEncoder e;
        e.input_dim = input_dim;
        e.fused_dim = fused_dim;
        e.normalize_output = normalize_output;
        e.weights.resize(static_cast<std::size_t>(input_dim) * fused_dim);
        e.bias.assign(static_cast<std::size_t>(fused_dim), 0.0);
        const double limit = std::sqrt(6.0 / (input_dim + fused_dim));
        std::uniform_real_distribution<double> uniform(-limit, limit);
        for (double& w : e.weights) w = uniform(rng);
        return e;
    }

    struct Cache {
        Vec input;      // concatenated blocks
        Vec activated;  // tanh output, before normalization
        double norm = 1.0;
        bool degenerate = false;
    };

    Vec concat_blocks(const FeatureRecord& r) const {
        Vec x;
        x.reserve(static_cast<std::size_t>(input_dim));
        for (const auto& block : r.modality_blocks) x.insert(x.end(), block.begin(), block.end());
        if (static_cast<int>(x.size()) != input_dim)
            throw DataError("encoder: sample " + r.sample_id + " has input dimension " +
                            std::to_string(x.size()) + ", expected " +
                            std::to_string(input_dim));
        return x;
    }

    Vec encode(const FeatureRecord& r, Cache* cache = nullptr) const {
        Vec x = concat_blocks(r);
        Vec z(static_cast<std::size_t>(fused_dim));
        for (int i = 0; i < fused_dim; ++i) {
            double a = bias[static_cast<std::size_t>(i)];
            const double* row = weights.data() + static_cast<std::size_t>(i) * input_dim;
            for (int j = 0; j < input_dim; ++j) a += row[j] * x[static_cast<std::size_t>(j)];
            z[static_cast<std::size_t>(i)] = std::tanh(a);
        }
        Vec fused = z;
        double norm = 1.0;
        bool degenerate = false;
        if (normalize_output) {
            const auto nr = l2_normalize(z);
            fused = nr.value;
            degenerate = nr.degenerate;
            if (!degenerate) {
                double sq = 0.0;
                for (double v : z) sq += v * v;
                norm = std::sqrt(sq);
            }
        }
        if (cache) {
            cache->input = std::move(x);
            cache->activated = std::move(z);
            cache->norm = norm;
            cache->degenerate = degenerate;
        }
        return fused;
    }

    // Chain d loss / d fused back to the parameters given the forward cache.
    void accumulate_gradient(const Cache& cache, const Vec& dfused, Vec& grad_w,
                             Vec& grad_b) const {
        Vec dz(static_cast<std::size_t>(fused_dim));
        if (normalize_output && !cache.degenerate) {
            double fdotg = 0.0;
            for (int i = 0; i < fused_dim; ++i)
                fdotg += cache.activated[static_cast<std::size_t>(i)] / cache.norm *
                         dfused[static_cast<std::size_t>(i)];
            for (int i = 0; i < fused_dim; ++i) {
                const double fi = cache.activated[static_cast<std::size_t>(i)] / cache.norm;
                dz[static_cast<std::size_t>(i)] =
                    (dfused[static_cast<std::size_t>(i)] - fi * fdotg) / cache.norm;
            }
        } else {
            dz = dfused;
        }
        for (int i = 0; i < fused_dim; ++i) {
            const double zi = cache.activated[static_cast<std::size_t>(i)];
            const double da = dz[static_cast<std::size_t>(i)] * (1.0 - zi * zi);
            grad_b[static_cast<std::size_t>(i)] += da;
            double* row = grad_w.data() + static_cast<std::size_t>(i) * input_dim;
            for (int j = 0; j < input_dim; ++j)
                row[j] += da * cache.input[static_cast<std::size_t>(j)];
        }
    }
};

enum class UpdateStrategy { ema, basic };

inline const char* to_string(UpdateStrategy s) {
    return s == UpdateStrategy::ema ? "ema" : "basic";
}

inline UpdateStrategy update_strategy_from_string(std::string_view s) {
    if (s == "ema") return UpdateStrategy::ema;
    if (s == "basic") return UpdateStrategy::basic;
    throw DataError("unknown update strategy: " + std::string(s));
}

struct TrainOptions {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;  // cosine-decayed over the configured epochs
    std::uint64_t seed = 2026;
    UpdateStrategy update_strategy = UpdateStrategy::ema;
    bool freeze_encoder = false;  // library-only dynamics
};

struct EpochMetrics {
    int epoch = 0;
    double mean_loss = 0.0;
    double train_c_index = 0.0;
    double val_c_index = 0.0;
};

struct StepLossRecord {
    int epoch = 0;
    int step = 0;
    double contrastive = 0.0;
    double center = 0.0;
    double prototypes = 0.0;
    double survival = 0.0;
    double total = 0.0;
};

struct TrainState {
    FusionEncoder encoder;
    PrototypeLibrary library;
    EngineConfig config;
    int epoch = 0;
    std::vector<EpochMetrics> history;
    std::vector<UpdateReport> update_reports;
    std::vector<StepLossRecord> step_losses;
};

inline std::vector<EncodedSample> encode_dataset(const FusionEncoder& encoder,
                                                 const Dataset& ds) {
    std::vector<EncodedSample> out;
    out.reserve(ds.records.size());
    for (const auto& r : ds.records) {
        EncodedSample s;
        s.sample_id = r.sample_id;
        s.fused = encoder.encode(r);
        s.time_bin = r.time_bin;
        s.censored = r.censored;
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<ClassFeatureSet> class_sets_from_encoded(
    const std::vector<EncodedSample>& encoded, int num_classes) {
    std::vector<ClassFeatureSet> sets(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) sets[static_cast<std::size_t>(c)].class_index = c;
    for (const auto& s : encoded) {
        if (s.time_bin < 0 || s.time_bin >= num_classes)
            throw DataError("sample " + s.sample_id + " has bin " +
                            std::to_string(s.time_bin) + ", dataset not binned for " +
                            std::to_string(num_classes) + " classes");
        sets[static_cast<std::size_t>(s.time_bin)].features.emplace_back(s.sample_id,
                                                                         s.fused);
    }
    return sets;
}

struct SamplePrediction {
    std::string sample_id;
    double event_time = 0.0;
    int censored = 0;
    Vec logits;
    HazardPrediction hazard;
    int predicted_bin = 0;
};

inline std::vector<SamplePrediction> predict_dataset(const FusionEncoder& encoder,
                                                     const PrototypeLibrary& lib,
                                                     const EngineConfig& cfg,
                                                     const Dataset& ds) {
    std::vector<SamplePrediction> out;
    out.reserve(ds.records.size());
    for (const auto& r : ds.records) {
        SamplePrediction p;
        p.sample_id = r.sample_id;
        p.event_time = r.event_time;
        p.censored = r.censored;
        const Vec fused = encoder.encode(r);
        p.logits = mpmatch_logits(fused, lib, cfg);
        p.hazard = risk_score(p.logits);
        p.predicted_bin = static_cast<int>(
            std::max_element(p.logits.begin(), p.logits.end()) - p.logits.begin());
        out.push_back(std::move(p));
    }
    return out;
}

inline std::vector<CohortSample> cohort_from_predictions(
    const std::vector<SamplePrediction>& preds) {
    std::vector<CohortSample> cohort;
    cohort.reserve(preds.size());
    for (const auto& p : preds)
        cohort.push_back({p.sample_id, p.hazard.risk, p.event_time, p.censored});
    return cohort;
}

struct BatchGradients {
    LossBreakdown breakdown;
    Vec grad_w;
    Vec grad_b;
};

// One forward/backward pass over a batch of records: encode, match, loss,
// then chain the survival-loss logit gradients through the matching
// jacobian and both paths through the encoder.
inline BatchGradients compute_batch_gradients(const FusionEncoder& encoder,
                                              const PrototypeLibrary& lib,
                                              const EngineConfig& cfg,
                                              const std::vector<const FeatureRecord*>& batch) {
    std::vector<EncodedSample> encoded;
    std::vector<FusionEncoder::Cache> caches(batch.size());
    encoded.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        EncodedSample s;
        s.sample_id = batch[i]->sample_id;
        s.fused = encoder.encode(*batch[i], &caches[i]);
        s.time_bin = batch[i]->time_bin;
        s.censored = batch[i]->censored;
        encoded.push_back(std::move(s));
    }
    auto [breakdown, grads] = total_loss(encoded, lib, cfg);

    BatchGradients out;
    out.breakdown = std::move(breakdown);
    out.grad_w.assign(encoder.weights.size(), 0.0);
    out.grad_b.assign(encoder.bias.size(), 0.0);
    for (std::size_t i = 0; i < encoded.size(); ++i) {
        Vec dfused = grads.feature[i];
        const auto jac = mpmatch_feature_jacobian(encoded[i].fused, lib, cfg);
        for (std::size_t c = 0; c < jac.size(); ++c) {
            const double gl = grads.logits[i][c];
            if (gl == 0.0) continue;
            for (std::size_t d = 0; d < dfused.size(); ++d) dfused[d] += gl * jac[c][d];
        }
        encoder.accumulate_gradient(caches[i], dfused, out.grad_w, out.grad_b);
    }
    return out;
}

inline double cosine_step_size(double base, int epoch, int total_epochs) {
    if (total_epochs <= 1) return base;
    const double progress = static_cast<double>(epoch - 1) / total_epochs;
    return base * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
}

// Full training loop. Epoch 0 initializes the library from the encoded
// training features; each subsequent epoch runs minibatch gradient steps
// and, every update_period_epochs, folds the epoch's encoded features into
// the library with the selected strategy.
inline TrainState train(const Dataset& train_set, const Dataset& val_set,
                        const EngineConfig& cfg, const TrainOptions& opts) {
    const auto report = validate_config(cfg);
    if (!report.ok()) throw DataError("train: invalid config: " + report.joined());
    if (!train_set.binned()) throw DataError("train: dataset is not binned");
    if (opts.epochs < 0) throw DataError("train: epochs must be >= 0");
    if (opts.batch_size <= 0) throw DataError("train: batch_size must be positive");

    std::mt19937_64 rng(opts.seed);
    TrainState state;
    state.config = cfg;
    state.encoder = FusionEncoder::init(
        train_set.input_dim(), cfg.fused_dim, rng,
        cfg.normalization == NormalizationPolicy::at_encoding);

    const std::string hash = config_hash(cfg);
    {
        const auto encoded = encode_dataset(state.encoder, train_set);
        state.library =
            init_library(class_sets_from_encoded(encoded, cfg.num_classes), cfg, hash, 0);
    }

    auto epoch_c_index = [&](const Dataset& ds) {
        if (ds.records.empty()) return std::numeric_limits<double>::quiet_NaN();
        const auto preds = predict_dataset(state.encoder, state.library, cfg, ds);
        return c_index(cohort_from_predictions(preds));
    };
    state.history.push_back({0, 0.0, epoch_c_index(train_set), epoch_c_index(val_set)});

    std::vector<std::size_t> order(train_set.records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        state.epoch = epoch;
        const double lr = cosine_step_size(opts.learning_rate, epoch, opts.epochs);
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        int steps = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(opts.batch_size)) {
            std::vector<const FeatureRecord*> batch;
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
            for (std::size_t i = start; i < stop; ++i)
                batch.push_back(&train_set.records[order[i]]);
            auto grads = compute_batch_gradients(state.encoder, state.library, cfg, batch);
            if (!std::isfinite(grads.breakdown.total))
                throw NumericError(
                    "train: non-finite loss at epoch " + std::to_string(epoch) +
                    " step " + std::to_string(steps) + " (contrastive " +
                    format_real(grads.breakdown.contrastive) + ", center " +
                    format_real(grads.breakdown.center) + ", survival " +
                    format_real(grads.breakdown.survival) + ", library version " +
                    std::to_string(state.library.version) + ")");
            if (!opts.freeze_encoder) {
                for (std::size_t i = 0; i < state.encoder.weights.size(); ++i)
                    state.encoder.weights[i] -= lr * grads.grad_w[i];
                for (std::size_t i = 0; i < state.encoder.bias.size(); ++i)
                    state.encoder.bias[i] -= lr * grads.grad_b[i];
            }
            loss_sum += grads.breakdown.total;
            state.step_losses.push_back({epoch, steps, grads.breakdown.contrastive,
                                         grads.breakdown.center, grads.breakdown.prototypes,
                                         grads.breakdown.survival, grads.breakdown.total});
            steps += 1;
        }

        if (epoch % cfg.update_period_epochs == 0) {
            const auto encoded = encode_dataset(state.encoder, train_set);
            const auto sets = class_sets_from_encoded(encoded, cfg.num_classes);
            auto [next, report] =
                opts.update_strategy == UpdateStrategy::ema
                    ? ema_update(state.library, sets, cfg, epoch)
                    : basic_update(state.library, sets, cfg, epoch);
            state.library = std::move(next);
            state.update_reports.push_back(std::move(report));
        }

        state.history.push_back({epoch, steps > 0 ? loss_sum / steps : 0.0,
                                 epoch_c_index(train_set), epoch_c_index(val_set)});
    }
    return state;
}

enum class AblationVariant {
    full,
    no_wandering,
    basic_update,
    nearest_only_match,
    nll_only,
    proto_only
};

inline const char* to_string(AblationVariant v) {
    switch (v) {
        case AblationVariant::full: return "full";
        case AblationVariant::no_wandering: return "no_wandering";
        case AblationVariant::basic_update: return "basic_update";
        case AblationVariant::nearest_only_match: return "nearest_only_match";
        case AblationVariant::nll_only: return "nll_only";
        case AblationVariant::proto_only: return "proto_only";
    }
    return "full";
}

inline AblationVariant ablation_variant_from_string(std::string_view s) {
    for (AblationVariant v :
         {AblationVariant::full, AblationVariant::no_wandering, AblationVariant::basic_update,
          AblationVariant::nearest_only_match, AblationVariant::nll_only,
          AblationVariant::proto_only})
        if (s == to_string(v)) return v;
    throw UsageError("unknown ablation variant: " + std::string(s));
}

inline void apply_variant(AblationVariant variant, EngineConfig& cfg, TrainOptions& opts) {
    switch (variant) {
        case AblationVariant::full:
            break;
        case AblationVariant::no_wandering:
            cfg.wandering_per_class = 0;
            break;
        case AblationVariant::basic_update:
            opts.update_strategy = UpdateStrategy::basic;
            break;
        case AblationVariant::nearest_only_match:
            cfg.weight_mean_sim = 0.0;
            cfg.weight_max_sim = 1.0;
            cfg.weight_center_sim = 0.0;
            break;
        case AblationVariant::nll_only:
            cfg.prototype_loss_weight = 0.0;
            break;
        case AblationVariant::proto_only:
            cfg.prototype_loss_weight = 1.0;
            break;
    }
}

inline TrainState ablation_run(const Dataset& train_set, const Dataset& val_set,
                               EngineConfig cfg, TrainOptions opts,
                               AblationVariant variant) {
    apply_variant(variant, cfg, opts);
    return train(train_set, val_set, cfg, opts);
}

struct AblationRow {
    AblationVariant variant = AblationVariant::full;
    double train_c_index = 0.0;
    double val_c_index = 0.0;
    double final_loss = 0.0;
};

// Comparison report over all six variants; values are recorded, no
// ordering is asserted.
inline std::vector<AblationRow> run_all_ablations(const Dataset& train_set,
                                                  const Dataset& val_set,
                                                  const EngineConfig& cfg,
                                                  const TrainOptions& opts) {
    std::vector<AblationRow> rows;
    for (AblationVariant v :
         {AblationVariant::full, AblationVariant::no_wandering, AblationVariant::basic_update,
          AblationVariant::nearest_only_match, AblationVariant::nll_only,
          AblationVariant::proto_only}) {
        const TrainState state = ablation_run(train_set, val_set, cfg, opts, v);
        const auto& last = state.history.back();
        rows.push_back({v, last.train_c_index, last.val_c_index, last.mean_loss});
    }
    return rows;
}

// ---------------------------------------------------------- encoder file

inline std::string emit_encoder(const FusionEncoder& e) {
    std::ostringstream out;
    out << "protosurv_encoder v1\n";
    out << "input_dim " << e.input_dim << "\n";
    out << "fused_dim " << e.fused_dim << "\n";
    out << "normalize " << (e.normalize_output ? 1 : 0) << "\n";
    for (int i = 0; i < e.fused_dim; ++i) {
        out << "w " << i;
        for (int j = 0; j < e.input_dim; ++j)
            out << " " << format_real(e.weights[static_cast<std::size_t>(i) * e.input_dim + j]);
        out << "\n";
    }
    out << "b";
    for (double v : e.bias) out << " " << format_real(v);
    out << "\n";
    return out.str();
}

inline FusionEncoder read_encoder(const std::filesystem::path& path) {
    const auto lines = ioutil::read_lines(path);
    const std::string p = path.string();
    ioutil::expect_header(lines, "protosurv_encoder", p);
    if (lines.size() < 4) throw DataError(p + ": truncated encoder file");
    FusionEncoder e;
    auto header_int = [&](std::size_t i, const char* key) {
        const auto toks = ioutil::split_tokens(lines.at(i));
        if (toks.size() != 2 || toks[0] != key)
            throw DataError(ioutil::where(p, i + 1) + ": expected '" + key + " <value>'");
        return static_cast<int>(ioutil::parse_int(toks[1], ioutil::where(p, i + 1)));
    };
    e.input_dim = header_int(1, "input_dim");
    e.fused_dim = header_int(2, "fused_dim");
    e.normalize_output = header_int(3, "normalize") != 0;
    e.weights.assign(static_cast<std::size_t>(e.input_dim) * e.fused_dim, 0.0);
    e.bias.assign(static_cast<std::size_t>(e.fused_dim), 0.0);
    for (std::size_t i = 4; i < lines.size(); ++i) {
        const auto toks = ioutil::split_tokens(lines[i]);
        if (toks.empty()) continue;
        const std::string ctx = ioutil::where(p, i + 1);
        if (toks[0] == "w") {
            if (static_cast<int>(toks.size()) != 2 + e.input_dim)
                throw DataError(ctx + ": weight row has wrong field count");
            const int row = static_cast<int>(ioutil::parse_int(toks[1], ctx));
            if (row < 0 || row >= e.fused_dim) throw DataError(ctx + ": weight row out of range");
            for (int j = 0; j < e.input_dim; ++j)
                e.weights[static_cast<std::size_t>(row) * e.input_dim + j] =
                    ioutil::parse_real(toks[static_cast<std::size_t>(2 + j)], ctx);
        } else if (toks[0] == "b") {
            if (static_cast<int>(toks.size()) != 1 + e.fused_dim)
                throw DataError(ctx + ": bias row has wrong field count");
            for (int j = 0; j < e.fused_dim; ++j)
                e.bias[static_cast<std::size_t>(j)] =
                    ioutil::parse_real(toks[static_cast<std::size_t>(1 + j)], ctx);
        } else {
            throw DataError(ctx + ": unknown record '" + toks[0] + "'");
        }
    }
    return e;
}

inline void write_encoder(const std::filesystem::path& path, const FusionEncoder& e) {
    ioutil::write_text(path, emit_encoder(e));
}

}  // namespace protosurv
