#pragma once
// Prototype library construction and evolution. Initialization picks the
// most center-similar features as typical prototypes and fills the
// wandering slots from a distance band around the class's mean center
// distance; updates either replace outliers (basic) or fold new features
// into their nearest typical prototype with an EMA merge while rebuilding
// the wandering set from the epoch's features.

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include "protosurv/core.hpp"
#include "protosurv/similarity.hpp"

namespace protosurv {

// Features of one class, as (sample_id, vector) pairs.
struct ClassFeatureSet {
    int class_index = 0;
    std::vector<std::pair<std::string, Vec>> features;
};

struct MergeRecord {
    std::string prototype_id;   // id after the update
    std::string sample_id;      // merged or replacing feature
    double displacement = 0.0;  // ||new - old||_2
    double source_distance = 0.0;  // ||old - feature||_2, for audit
};

struct ClassUpdateCounts {
    int merged = 0;               // EMA merges
    int replaced = 0;             // basic-mode replacements
    int wandering_refreshed = 0;  // wandering slots rebuilt
};

struct UpdateReport {
    int epoch = 0;
    std::uint64_t new_version = 0;
    std::vector<ClassUpdateCounts> per_class;
    std::vector<MergeRecord> merges;

    int total_merged() const {
        int n = 0;
        for (const auto& c : per_class) n += c.merged;
        return n;
    }
    int total_replaced() const {
        int n = 0;
        for (const auto& c : per_class) n += c.replaced;
        return n;
    }
};

inline double euclidean_norm_diff(const Vec& a, const Vec& b) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

// Arithmetic mean of the class's feature vectors.
inline Vec class_center(const ClassFeatureSet& set) {
    if (set.features.empty())
        throw DataError("class_center: class " + std::to_string(set.class_index) +
                        " has no features");
    const std::size_t dim = set.features.front().second.size();
    Vec mean(dim, 0.0);
    for (const auto& [id, v] : set.features) {
        if (v.size() != dim)
            throw DataError("class_center: dimension mismatch for sample " + id);
        for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
    }
    const double inv = 1.0 / static_cast<double>(set.features.size());
    for (double& x : mean) x *= inv;
    return mean;
}

// P_new = lambda * P_old + (1 - lambda) * f_new. Pure helper shared by
// ema_update and the geometry tests.
inline Vec ema_merge(const Vec& old_vec, const Vec& new_feature, double decay) {
    if (old_vec.size() != new_feature.size())
        throw DataError("ema_merge: dimension mismatch");
    Vec out(old_vec.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = decay * old_vec[i] + (1.0 - decay) * new_feature[i];
    return out;
}

// Decays the existing contribution history by lambda, appends the new
// source at 1-lambda, and re-truncates to the top-F slice. The truncated
// tail accumulates into residual_weight so the full history keeps summing
// to 1.
inline void merge_sources(PrototypeEntry& entry, const std::string& sample_id,
                          double decay, int top_sources) {
    for (auto& s : entry.sources) s.weight *= decay;
    entry.residual_weight *= decay;
    entry.sources.push_back({sample_id, 1.0 - decay});
    std::stable_sort(entry.sources.begin(), entry.sources.end(),
                     [](const SourceRef& a, const SourceRef& b) {
                         if (a.weight != b.weight) return a.weight > b.weight;
                         return a.sample_id < b.sample_id;
                     });
    while (static_cast<int>(entry.sources.size()) > top_sources) {
        entry.residual_weight += entry.sources.back().weight;
        entry.sources.pop_back();
    }
}

namespace detail {

struct RankedFeature {
    const std::string* sample_id;
    const Vec* vector;
    double center_similarity;
};

// Features ordered by similarity to the class center, descending; ties go
// to the lexicographically lowest sample_id so runs are deterministic.
inline std::vector<RankedFeature> rank_by_center_similarity(
    const ClassFeatureSet& set, const Vec& center, double exponent) {
    std::vector<RankedFeature> ranked;
    ranked.reserve(set.features.size());
    for (const auto& [id, v] : set.features)
        ranked.push_back({&id, &v, pmdsim(v, center, exponent)});
    std::sort(ranked.begin(), ranked.end(),
              [](const RankedFeature& a, const RankedFeature& b) {
                  if (a.center_similarity != b.center_similarity)
                      return a.center_similarity > b.center_similarity;
                  return *a.sample_id < *b.sample_id;
              });
    return ranked;
}

struct BandCandidate {
    const std::string* sample_id;
    const Vec* vector;
    double band_offset;  // |distance - mean_distance|
};

inline bool vector_equals(const Vec& a, const Vec& b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

// Wandering selection: among candidate features, compute the dissimilarity
// to the center, take the ones inside [d_mean - eps, d_mean + eps] closest
// to d_mean. Candidates whose vector duplicates a same-class typical
// prototype are held back and used only if the band (and then the
// out-of-band fallback) cannot fill every slot.
inline std::vector<PrototypeEntry> select_wandering(
    const std::vector<std::pair<const std::string*, const Vec*>>& candidates,
    const Vec& center, const std::vector<PrototypeEntry>& typical_entries,
    int class_index, int count, const EngineConfig& cfg, std::uint64_t version,
    int creation_epoch, std::map<std::string, ProvenanceRecord>& provenance) {
    std::vector<PrototypeEntry> out;
    if (count <= 0 || candidates.empty()) return out;

    double mean_distance = 0.0;
    std::vector<double> distances(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        distances[i] = dissimilarity(*candidates[i].second, center, cfg.power_exponent);
        mean_distance += distances[i];
    }
    mean_distance /= static_cast<double>(candidates.size());
    const double half_width = cfg.band_fraction * mean_distance;

    std::vector<BandCandidate> in_band, out_of_band, duplicates;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        BandCandidate c{candidates[i].first, candidates[i].second,
                        std::fabs(distances[i] - mean_distance)};
        const bool dup = std::any_of(
            typical_entries.begin(), typical_entries.end(),
            [&](const PrototypeEntry& t) { return vector_equals(t.vector, *c.vector); });
        if (dup)
            duplicates.push_back(c);
        else if (c.band_offset <= half_width)
            in_band.push_back(c);
        else
            out_of_band.push_back(c);
    }
    auto by_offset = [](const BandCandidate& a, const BandCandidate& b) {
        if (a.band_offset != b.band_offset) return a.band_offset < b.band_offset;
        return *a.sample_id < *b.sample_id;
    };
    std::sort(in_band.begin(), in_band.end(), by_offset);
    std::sort(out_of_band.begin(), out_of_band.end(), by_offset);
    std::sort(duplicates.begin(), duplicates.end(), by_offset);

    auto take = [&](const std::vector<BandCandidate>& pool) {
        for (const auto& c : pool) {
            if (static_cast<int>(out.size()) >= count) return;
            PrototypeEntry e;
            e.class_index = class_index;
            e.kind = PrototypeKind::wandering;
            e.vector = *c.vector;
            e.sources = {{*c.sample_id, 1.0}};
            e.residual_weight = 0.0;
            e.id = prototype_id(class_index, PrototypeKind::wandering,
                                static_cast<int>(out.size()), version);
            provenance[e.id] = {creation_epoch, 0};
            out.push_back(std::move(e));
        }
    };
    take(in_band);
    take(out_of_band);  // fallback: nearest to the mean distance, band ignored
    take(duplicates);   // last resort on degenerate classes
    return out;
}

inline void rebuild_index(PrototypeLibrary& lib) {
    lib.index.clear();
    for (int c = 0; c < lib.num_classes; ++c) {
        for (int s = 0; s < static_cast<int>(lib.typical[c].size()); ++s)
            lib.index[lib.typical[c][s].id] = {PrototypeKind::typical, c, s};
        for (int s = 0; s < static_cast<int>(lib.wandering[c].size()); ++s)
            lib.index[lib.wandering[c][s].id] = {PrototypeKind::wandering, c, s};
    }
}

inline void prune_provenance(PrototypeLibrary& lib) {
    for (auto it = lib.provenance.begin(); it != lib.provenance.end();) {
        if (lib.index.count(it->first) == 0)
            it = lib.provenance.erase(it);
        else
            ++it;
    }
}

inline Vec mean_of_typical(const std::vector<PrototypeEntry>& entries, int dim) {
    Vec mean(static_cast<std::size_t>(dim), 0.0);
    for (const auto& e : entries)
        for (int i = 0; i < dim; ++i) mean[i] += e.vector[i];
    if (!entries.empty()) {
        const double inv = 1.0 / static_cast<double>(entries.size());
        for (double& x : mean) x *= inv;
    }
    return mean;
}

inline const ClassFeatureSet* find_class_set(
    const std::vector<ClassFeatureSet>& sets, int class_index) {
    for (const auto& s : sets)
        if (s.class_index == class_index) return &s;
    return nullptr;
}

}  // namespace detail

// Builds the initial library: per class, the typical_per_class features
// most similar to the class center become typical prototypes and the
// wandering slots are filled from the remaining features via the distance
// band. Requires typical_per_class + wandering_per_class features per class.
inline PrototypeLibrary init_library(const std::vector<ClassFeatureSet>& data,
                                     const EngineConfig& cfg,
                                     const std::string& config_hash = "",
                                     int creation_epoch = 0) {
    const auto report = validate_config(cfg);
    if (!report.ok()) throw DataError("init_library: invalid config: " + report.joined());

    PrototypeLibrary lib;
    lib.version = 1;
    lib.dim = cfg.fused_dim;
    lib.num_classes = cfg.num_classes;
    lib.typical_per_class = cfg.typical_per_class;
    lib.wandering_per_class = cfg.wandering_per_class;
    lib.normalization = cfg.normalization;
    lib.config_hash = config_hash;
    lib.typical.resize(cfg.num_classes);
    lib.wandering.resize(cfg.num_classes);
    lib.class_centers.resize(cfg.num_classes);

    const int needed = cfg.typical_per_class + cfg.wandering_per_class;
    for (int c = 0; c < cfg.num_classes; ++c) {
        const ClassFeatureSet* set = detail::find_class_set(data, c);
        if (set == nullptr || static_cast<int>(set->features.size()) < needed)
            throw DataError("init_library: class " + std::to_string(c) + " has " +
                            std::to_string(set ? set->features.size() : 0) +
                            " features, needs " + std::to_string(needed));

        // Literal normalize-at-init behavior for the ablation policy.
        ClassFeatureSet normalized;
        const ClassFeatureSet* working = set;
        if (cfg.normalization == NormalizationPolicy::at_init_only) {
            normalized.class_index = set->class_index;
            normalized.features.reserve(set->features.size());
            for (const auto& [id, v] : set->features)
                normalized.features.emplace_back(id, l2_normalize(v).value);
            working = &normalized;
        }

        for (const auto& [id, v] : working->features)
            if (static_cast<int>(v.size()) != cfg.fused_dim)
                throw DataError("init_library: sample " + id + " has dimension " +
                                std::to_string(v.size()) + ", expected " +
                                std::to_string(cfg.fused_dim));

        const Vec center = class_center(*working);
        auto ranked = detail::rank_by_center_similarity(*working, center, cfg.power_exponent);

        auto& typ = lib.typical[c];
        typ.reserve(cfg.typical_per_class);
        for (int s = 0; s < cfg.typical_per_class; ++s) {
            PrototypeEntry e;
            e.class_index = c;
            e.kind = PrototypeKind::typical;
            e.vector = *ranked[s].vector;
            e.sources = {{*ranked[s].sample_id, 1.0}};
            e.id = prototype_id(c, PrototypeKind::typical, s, lib.version);
            lib.provenance[e.id] = {creation_epoch, 0};
            typ.push_back(std::move(e));
        }

        std::vector<std::pair<const std::string*, const Vec*>> remainder;
        for (std::size_t i = cfg.typical_per_class; i < ranked.size(); ++i)
            remainder.emplace_back(ranked[i].sample_id, ranked[i].vector);
        lib.wandering[c] = detail::select_wandering(
            remainder, center, typ, c, cfg.wandering_per_class, cfg, lib.version,
            creation_epoch, lib.provenance);
        lib.class_centers[c] = center;
    }
    detail::rebuild_index(lib);
    detail::prune_provenance(lib);
    return lib;
}

// Single-pass structural check of every library invariant. Returns the
// full violation list rather than stopping at the first.
inline ValidationReport validate_library(const PrototypeLibrary& lib) {
    ValidationReport r;
    auto fail = [&r](const std::string& m) { r.violations.push_back(m); };

    if (static_cast<int>(lib.typical.size()) != lib.num_classes ||
        static_cast<int>(lib.wandering.size()) != lib.num_classes ||
        static_cast<int>(lib.class_centers.size()) != lib.num_classes) {
        fail("library: container count does not match num_classes");
        return r;
    }
    std::size_t total = 0;
    for (int c = 0; c < lib.num_classes; ++c) {
        if (static_cast<int>(lib.typical[c].size()) != lib.typical_per_class)
            fail("class " + std::to_string(c) + ": typical count " +
                 std::to_string(lib.typical[c].size()) + " != " +
                 std::to_string(lib.typical_per_class));
        if (static_cast<int>(lib.wandering[c].size()) != lib.wandering_per_class)
            fail("class " + std::to_string(c) + ": wandering count " +
                 std::to_string(lib.wandering[c].size()) + " != " +
                 std::to_string(lib.wandering_per_class));
        if (static_cast<int>(lib.class_centers[c].size()) != lib.dim)
            fail("class " + std::to_string(c) + ": center dimension mismatch");

        std::unordered_set<std::uint64_t> typical_hashes;
        auto check_entry = [&](const PrototypeEntry& e, PrototypeKind kind, int slot) {
            total += 1;
            if (static_cast<int>(e.vector.size()) != lib.dim)
                fail("prototype " + e.id + ": dimension " + std::to_string(e.vector.size()) +
                     " != " + std::to_string(lib.dim));
            auto it = lib.index.find(e.id);
            if (it == lib.index.end())
                fail("prototype " + e.id + ": missing from identity map");
            else if (it->second.kind != kind || it->second.class_index != c ||
                     it->second.slot != slot)
                fail("prototype " + e.id + ": identity map entry inconsistent");
            if (lib.provenance.find(e.id) == lib.provenance.end())
                fail("prototype " + e.id + ": missing provenance record");
            const double wsum = e.source_weight_sum();
            if (std::fabs(wsum - 1.0) > 1e-9)
                fail("prototype " + e.id + ": source weights sum to " + format_real(wsum));
            for (std::size_t i = 0; i + 1 < e.sources.size(); ++i)
                if (e.sources[i].weight < e.sources[i + 1].weight)
                    fail("prototype " + e.id + ": sources not descending by weight");
        };
        for (int s = 0; s < static_cast<int>(lib.typical[c].size()); ++s) {
            const auto& e = lib.typical[c][s];
            check_entry(e, PrototypeKind::typical, s);
            typical_hashes.insert(fnv1a_hash(std::string_view(
                reinterpret_cast<const char*>(e.vector.data()),
                e.vector.size() * sizeof(double))));
        }
        for (int s = 0; s < static_cast<int>(lib.wandering[c].size()); ++s) {
            const auto& e = lib.wandering[c][s];
            check_entry(e, PrototypeKind::wandering, s);
            const auto h = fnv1a_hash(std::string_view(
                reinterpret_cast<const char*>(e.vector.data()),
                e.vector.size() * sizeof(double)));
            if (typical_hashes.count(h) != 0) {
                const bool dup = std::any_of(
                    lib.typical[c].begin(), lib.typical[c].end(),
                    [&](const PrototypeEntry& t) {
                        return detail::vector_equals(t.vector, e.vector);
                    });
                if (dup)
                    fail("prototype " + e.id +
                         ": wandering vector equals a typical vector of class " +
                         std::to_string(c));
            }
        }
    }
    if (lib.index.size() != total) fail("identity map size does not match entry count");
    return r;
}

// Basic update strategy: each of the epoch's top-K center-similar features
// replaces the farthest typical prototype of its class when its average
// dissimilarity to the class's typical set exceeds the threshold. Wandering
// prototypes are untouched in this mode.
inline std::pair<PrototypeLibrary, UpdateReport> basic_update(
    const PrototypeLibrary& lib, const std::vector<ClassFeatureSet>& epoch_features,
    const EngineConfig& cfg, int epoch = 0) {
    PrototypeLibrary next = lib;
    next.version = lib.version + 1;
    UpdateReport report;
    report.epoch = epoch;
    report.new_version = next.version;
    report.per_class.resize(next.num_classes);

    for (int c = 0; c < next.num_classes; ++c) {
        const ClassFeatureSet* set = detail::find_class_set(epoch_features, c);
        if (set == nullptr || set->features.empty()) continue;
        auto ranked = detail::rank_by_center_similarity(*set, next.class_centers[c],
                                                        cfg.power_exponent);
        const int top_k =
            std::min<int>(cfg.effective_update_top_k(), static_cast<int>(ranked.size()));
        auto& typ = next.typical[c];
        for (int k = 0; k < top_k; ++k) {
            const Vec& f = *ranked[k].vector;
            double sum = 0.0, worst = -1.0;
            int worst_slot = 0;
            for (int s = 0; s < static_cast<int>(typ.size()); ++s) {
                const double d = dissimilarity(f, typ[s].vector, cfg.power_exponent);
                sum += d;
                if (d > worst) {  // strict > keeps the lowest slot on ties
                    worst = d;
                    worst_slot = s;
                }
            }
            const double average = sum / static_cast<double>(typ.size());
            if (average > cfg.replace_threshold) {
                PrototypeEntry e;
                e.class_index = c;
                e.kind = PrototypeKind::typical;
                e.vector = f;
                e.sources = {{*ranked[k].sample_id, 1.0}};
                e.id = prototype_id(c, PrototypeKind::typical, worst_slot, next.version);
                report.merges.push_back({e.id, *ranked[k].sample_id,
                                         euclidean_norm_diff(f, typ[worst_slot].vector),
                                         euclidean_norm_diff(f, typ[worst_slot].vector)});
                next.provenance[e.id] = {epoch, 0};
                typ[worst_slot] = std::move(e);
                report.per_class[c].replaced += 1;
            }
        }
        next.class_centers[c] = detail::mean_of_typical(typ, next.dim);
    }
    detail::rebuild_index(next);
    detail::prune_provenance(next);
    return {std::move(next), std::move(report)};
}

// EMA update strategy: each top-K feature folds into its most similar
// typical prototype (P_new = lambda*P_old + (1-lambda)*f), decaying the
// prototype's contribution history; the wandering set is rebuilt entirely
// from this epoch's features via the band rule.
inline std::pair<PrototypeLibrary, UpdateReport> ema_update(
    const PrototypeLibrary& lib, const std::vector<ClassFeatureSet>& epoch_features,
    const EngineConfig& cfg, int epoch = 0) {
    PrototypeLibrary next = lib;
    next.version = lib.version + 1;
    UpdateReport report;
    report.epoch = epoch;
    report.new_version = next.version;
    report.per_class.resize(next.num_classes);

    for (int c = 0; c < next.num_classes; ++c) {
        const ClassFeatureSet* set = detail::find_class_set(epoch_features, c);
        if (set == nullptr || set->features.empty()) continue;
        auto ranked = detail::rank_by_center_similarity(*set, next.class_centers[c],
                                                        cfg.power_exponent);
        const int top_k =
            std::min<int>(cfg.effective_update_top_k(), static_cast<int>(ranked.size()));
        auto& typ = next.typical[c];

        for (int k = 0; k < top_k; ++k) {
            const Vec& f = *ranked[k].vector;
            double best = -1.0;
            int best_slot = 0;
            for (int s = 0; s < static_cast<int>(typ.size()); ++s) {
                const double sim = pmdsim(f, typ[s].vector, cfg.power_exponent);
                if (sim > best) {  // strict > keeps the lowest slot on ties
                    best = sim;
                    best_slot = s;
                }
            }
            PrototypeEntry& p = typ[best_slot];
            const double source_distance = euclidean_norm_diff(p.vector, f);
            const Vec merged = ema_merge(p.vector, f, cfg.ema_decay);
            const double displacement = euclidean_norm_diff(merged, p.vector);
            const std::string old_id = p.id;
            p.vector = merged;
            merge_sources(p, *ranked[k].sample_id, cfg.ema_decay, cfg.top_sources);
            p.id = prototype_id(c, PrototypeKind::typical, best_slot, next.version);
            auto prov = next.provenance[old_id];
            prov.update_count += 1;
            next.provenance.erase(old_id);
            next.provenance[p.id] = prov;
            report.merges.push_back(
                {p.id, *ranked[k].sample_id, displacement, source_distance});
            report.per_class[c].merged += 1;
        }
        next.class_centers[c] = detail::mean_of_typical(typ, next.dim);

        // Wandering prototypes come from the latest features: exclude the
        // merge sources, then apply the band rule around the new center.
        // Keeps the previous wandering set when the epoch cannot fill it.
        std::vector<std::pair<const std::string*, const Vec*>> candidates;
        for (std::size_t i = static_cast<std::size_t>(top_k); i < ranked.size(); ++i)
            candidates.emplace_back(ranked[i].sample_id, ranked[i].vector);
        if (cfg.wandering_per_class > 0 &&
            static_cast<int>(candidates.size()) >= cfg.wandering_per_class) {
            for (const auto& e : next.wandering[c]) next.provenance.erase(e.id);
            next.wandering[c] = detail::select_wandering(
                candidates, next.class_centers[c], typ, c, cfg.wandering_per_class,
                cfg, next.version, epoch, next.provenance);
            report.per_class[c].wandering_refreshed =
                static_cast<int>(next.wandering[c].size());
        }
    }
    detail::rebuild_index(next);
    detail::prune_provenance(next);
    return {std::move(next), std::move(report)};
}

}  // namespace protosurv
