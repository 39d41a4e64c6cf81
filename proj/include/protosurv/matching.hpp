#pragma once
// MPMatch: three-level similarity fusion (class average, nearest prototype,
// class center) producing per-time-bin logits, the hazard/survival/risk
// chain, and the full per-query explanation trace.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "protosurv/core.hpp"
#include "protosurv/library.hpp"
#include "protosurv/similarity.hpp"

namespace protosurv {

struct HazardPrediction {
    Vec logits;    // one per time bin
    Vec hazards;   // sigmoid(logit), in [0,1]
    Vec survival;  // survival[t] = prod_{i<=t}(1 - hazards[i]), non-increasing
    double risk = 0.0;  // -sum_t survival[t], in [-K_time, 0]
};

// Per-class slice of the explanation: the full similarity row over the
// effective prototype set (typical entries first, wandering after), the
// three fused levels, and the nearest prototype with its source samples.
struct ClassTraceRow {
    int class_index = 0;
    Vec similarity_row;
    double mean_similarity = 0.0;
    double max_similarity = 0.0;
    double center_similarity = 0.0;
    double logit = 0.0;
    std::string nearest_id;
    PrototypeKind nearest_kind = PrototypeKind::typical;
    int nearest_index = 0;  // position in the row
    std::vector<SourceRef> nearest_sources;
    double nearest_residual = 0.0;
};

struct ExplanationTrace {
    std::string sample_id;
    std::vector<ClassTraceRow> classes;
    Vec logits;
    int predicted_bin = 0;  // argmax logit
    double risk = 0.0;
};

// Effective prototype set of one class, typical before wandering so trace
// indices stay stable across runs.
inline std::vector<const PrototypeEntry*> effective_set(const PrototypeLibrary& lib,
                                                        int class_index) {
    std::vector<const PrototypeEntry*> set;
    const auto c = static_cast<std::size_t>(class_index);
    set.reserve(lib.typical[c].size() + lib.wandering[c].size());
    for (const auto& e : lib.typical[c]) set.push_back(&e);
    for (const auto& e : lib.wandering[c]) set.push_back(&e);
    return set;
}

inline Vec similarity_row(const Vec& feature,
                          const std::vector<const PrototypeEntry*>& prototypes,
                          double exponent) {
    if (prototypes.empty()) throw DataError("similarity_row: empty prototype set");
    Vec row(prototypes.size());
    for (std::size_t i = 0; i < prototypes.size(); ++i)
        row[i] = pmdsim(feature, prototypes[i]->vector, exponent);
    return row;
}

inline double fuse_similarities(double mean_sim, double max_sim, double center_sim,
                                const EngineConfig& cfg) {
    return cfg.weight_mean_sim * mean_sim + cfg.weight_max_sim * max_sim +
           cfg.weight_center_sim * center_sim;
}

namespace detail {

inline void require_matching_library(const Vec& feature, const PrototypeLibrary& lib,
                                     const EngineConfig& cfg) {
    if (static_cast<int>(feature.size()) != lib.dim)
        throw DataError("mpmatch: feature dimension " + std::to_string(feature.size()) +
                        " != library dimension " + std::to_string(lib.dim));
    if (lib.num_classes != cfg.num_classes)
        throw DataError("mpmatch: library has " + std::to_string(lib.num_classes) +
                        " classes, config expects " + std::to_string(cfg.num_classes));
    if (cfg.num_classes != cfg.time_bins)
        throw DataError("mpmatch: num_classes must equal time_bins");
}

}  // namespace detail

// Core matcher. Computes per-class logits; when `trace` is non-null it is
// filled with the full similarity breakdown (trace and logits share one
// computation path, so explain and eval agree bit-for-bit).
inline Vec mpmatch_logits(const Vec& feature, const PrototypeLibrary& lib,
                          const EngineConfig& cfg, ExplanationTrace* trace = nullptr,
                          const std::string& sample_id = "") {
    detail::require_matching_library(feature, lib, cfg);
    Vec logits(static_cast<std::size_t>(lib.num_classes), 0.0);
    if (trace) {
        trace->sample_id = sample_id;
        trace->classes.assign(static_cast<std::size_t>(lib.num_classes), {});
    }
    for (int c = 0; c < lib.num_classes; ++c) {
        const auto protos = effective_set(lib, c);
        const Vec row = similarity_row(feature, protos, cfg.power_exponent);
        double sum = 0.0, max_sim = -1.0;
        std::size_t nearest = 0;
        for (std::size_t i = 0; i < row.size(); ++i) {
            sum += row[i];
            if (row[i] > max_sim) {  // strict >: ties resolve to typical, lowest slot
                max_sim = row[i];
                nearest = i;
            }
        }
        const double mean_sim = sum / static_cast<double>(row.size());
        const double center_sim =
            pmdsim(feature, lib.class_centers[c], cfg.power_exponent);
        const double logit = fuse_similarities(mean_sim, max_sim, center_sim, cfg);
        logits[static_cast<std::size_t>(c)] = logit;
        if (trace) {
            auto& tr = trace->classes[static_cast<std::size_t>(c)];
            tr.class_index = c;
            tr.similarity_row = row;
            tr.mean_similarity = mean_sim;
            tr.max_similarity = max_sim;
            tr.center_similarity = center_sim;
            tr.logit = logit;
            const PrototypeEntry& p = *protos[nearest];
            tr.nearest_id = p.id;
            tr.nearest_kind = p.kind;
            tr.nearest_index = static_cast<int>(nearest);
            tr.nearest_sources.assign(
                p.sources.begin(),
                p.sources.begin() +
                    std::min<std::size_t>(p.sources.size(),
                                          static_cast<std::size_t>(cfg.top_sources)));
            tr.nearest_residual = p.residual_weight;
        }
    }
    if (trace) trace->logits = logits;
    return logits;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Discrete-time risk: hazards from the logits, cumulative-product survival,
// risk = negative sum of survival values (higher risk = worse prognosis).
inline HazardPrediction risk_score(const Vec& logits) {
    if (logits.empty()) throw DataError("risk_score: empty logits");
    for (double v : logits)
        if (!std::isfinite(v)) throw NumericError("risk_score: non-finite logit");
    HazardPrediction out;
    out.logits = logits;
    out.hazards.resize(logits.size());
    out.survival.resize(logits.size());
    double surv = 1.0;
    double total = 0.0;
    for (std::size_t t = 0; t < logits.size(); ++t) {
        out.hazards[t] = sigmoid(logits[t]);
        surv *= 1.0 - out.hazards[t];
        out.survival[t] = surv;
        total += surv;
    }
    out.risk = -total;
    return out;
}

// Full Algorithm-1 style match: logits plus the explanation trace with the
// predicted bin and risk filled in.
inline std::pair<Vec, ExplanationTrace> mpmatch(const Vec& feature,
                                                const PrototypeLibrary& lib,
                                                const EngineConfig& cfg,
                                                const std::string& sample_id = "") {
    ExplanationTrace trace;
    Vec logits = mpmatch_logits(feature, lib, cfg, &trace, sample_id);
    const auto best = std::max_element(logits.begin(), logits.end());
    trace.predicted_bin = static_cast<int>(best - logits.begin());
    trace.risk = risk_score(logits).risk;
    return {std::move(logits), std::move(trace)};
}

// d logits / d feature as a C x D matrix; the max level differentiates
// through the argmax branch. Used by the trainer to chain the survival
// loss back into the encoder.
inline std::vector<Vec> mpmatch_feature_jacobian(const Vec& feature,
                                                 const PrototypeLibrary& lib,
                                                 const EngineConfig& cfg) {
    detail::require_matching_library(feature, lib, cfg);
    std::vector<Vec> jac(static_cast<std::size_t>(lib.num_classes),
                         Vec(feature.size(), 0.0));
    for (int c = 0; c < lib.num_classes; ++c) {
        const auto protos = effective_set(lib, c);
        const Vec row = similarity_row(feature, protos, cfg.power_exponent);
        std::size_t nearest = 0;
        for (std::size_t i = 1; i < row.size(); ++i)
            if (row[i] > row[nearest]) nearest = i;

        Vec& g = jac[static_cast<std::size_t>(c)];
        const double mean_w = cfg.weight_mean_sim / static_cast<double>(row.size());
        for (std::size_t i = 0; i < protos.size(); ++i) {
            const Vec gi = pmdsim_gradient(feature, protos[i]->vector, cfg.power_exponent);
            const double w = mean_w + (i == nearest ? cfg.weight_max_sim : 0.0);
            for (std::size_t d = 0; d < g.size(); ++d) g[d] += w * gi[d];
        }
        const Vec gc =
            pmdsim_gradient(feature, lib.class_centers[c], cfg.power_exponent);
        for (std::size_t d = 0; d < g.size(); ++d)
            g[d] += cfg.weight_center_sim * gc[d];
    }
    return jac;
}

}  // namespace protosurv
