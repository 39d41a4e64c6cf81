#pragma once
// Core domain types shared by every module: feature records, prototype
// library containers, engine configuration, and the canonical text forms
// used for on-disk round trips.

#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace protosurv {

using Vec = std::vector<double>;

// Exit-code-mapped error categories (0 ok, 1 usage, 2 data, 3 numeric).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class PrototypeKind { typical, wandering };

inline const char* to_string(PrototypeKind k) {
    return k == PrototypeKind::typical ? "typical" : "wandering";
}

inline PrototypeKind prototype_kind_from_string(std::string_view s) {
    if (s == "typical") return PrototypeKind::typical;
    if (s == "wandering") return PrototypeKind::wandering;
    throw DataError("unknown prototype kind: " + std::string(s));
}

// Where fused features get L2-normalized. "at_encoding" keeps every
// comparison in one metric space; "at_init_only" restores the literal
// normalize-during-initialization behavior for ablation.
enum class NormalizationPolicy { at_encoding, at_init_only };

inline const char* to_string(NormalizationPolicy p) {
    return p == NormalizationPolicy::at_encoding ? "at_encoding" : "at_init_only";
}

inline NormalizationPolicy normalization_policy_from_string(std::string_view s) {
    if (s == "at_encoding") return NormalizationPolicy::at_encoding;
    if (s == "at_init_only") return NormalizationPolicy::at_init_only;
    throw DataError("unknown normalization policy: " + std::string(s));
}

// One sample: per-modality raw blocks plus the fused embedding (present
// after encoding), survival label and discrete time bin.
struct FeatureRecord {
    std::string sample_id;
    std::vector<Vec> modality_blocks;
    Vec fused;                 // dimension D once encoded, empty before
    double event_time = 0.0;   // months, >= 0
    int censored = 0;          // 1 = censored
    int time_bin = -1;         // in [0, K_time) once binned
};

struct SourceRef {
    std::string sample_id;
    double weight = 0.0;  // contribution in [0,1]
};

// A single prototype vector. `sources` is the top-F slice of the full
// contribution history, descending by weight; `residual_weight` carries the
// truncated tail so the full history always sums to 1.
struct PrototypeEntry {
    std::string id;
    int class_index = 0;
    PrototypeKind kind = PrototypeKind::typical;
    Vec vector;
    std::vector<SourceRef> sources;
    double residual_weight = 0.0;

    double source_weight_sum() const {
        double s = residual_weight;
        for (const auto& src : sources) s += src.weight;
        return s;
    }
};

struct SlotRef {
    PrototypeKind kind = PrototypeKind::typical;
    int class_index = 0;
    int slot = 0;
};

struct ProvenanceRecord {
    int creation_epoch = 0;
    int update_count = 0;
};

// Versioned snapshot of the whole prototype store: typical entries P,
// wandering entries W, identity map I and provenance store A, plus the
// per-class centers the matcher and losses read. Snapshots are value
// objects; every mutation produces a new snapshot with version+1.
struct PrototypeLibrary {
    std::uint64_t version = 0;
    int dim = 0;                 // D
    int num_classes = 0;         // C
    int typical_per_class = 0;   // K_proto
    int wandering_per_class = 0; // M_wander
    NormalizationPolicy normalization = NormalizationPolicy::at_encoding;
    std::string config_hash;

    std::vector<std::vector<PrototypeEntry>> typical;    // P, [C][K_proto]
    std::vector<std::vector<PrototypeEntry>> wandering;  // W, [C][M_wander]
    std::map<std::string, SlotRef> index;                // I
    std::map<std::string, ProvenanceRecord> provenance;  // A
    std::vector<Vec> class_centers;                      // mu_c, [C][D]

    const PrototypeEntry* find(const std::string& id) const {
        auto it = index.find(id);
        if (it == index.end()) return nullptr;
        const auto& ref = it->second;
        const auto& bank =
            ref.kind == PrototypeKind::typical ? typical : wandering;
        return &bank[static_cast<std::size_t>(ref.class_index)]
                    [static_cast<std::size_t>(ref.slot)];
    }
};

inline std::string prototype_id(int class_index, PrototypeKind kind, int slot,
                                std::uint64_t version) {
    return "c" + std::to_string(class_index) + "-" + to_string(kind) + "-" +
           std::to_string(slot) + "-v" + std::to_string(version);
}

// Engine-wide knobs. Field names spell out the roles; the similarity
// fusion weights must sum to 1 and the EMA decay must sit in (0, 0.5).
struct EngineConfig {
    int fused_dim = 16;            // D
    int num_classes = 4;           // C, hard-linked to time_bins
    int typical_per_class = 40;    // K_proto
    int wandering_per_class = 5;   // M_wander, 0 disables wandering
    int time_bins = 4;             // K_time
    double power_exponent = 2.0;   // m in PMDSim
    double ema_decay = 0.1;        // lambda in (0, 0.5)
    double band_fraction = 0.10;   // wandering band half-width / mean distance
    double weight_mean_sim = 0.4;  // alpha_sim
    double weight_max_sim = 0.4;   // beta_sim
    double weight_center_sim = 0.2;  // gamma_sim
    double replace_threshold = 2.0;  // theta, basic-update dissimilarity gate
    double center_loss_weight = 1.0;    // sigma
    double censored_weight = 0.4;       // alpha_loss
    double prototype_loss_weight = 0.5; // beta_loss
    int update_period_epochs = 1;       // n
    int top_sources = 3;                // F, provenance depth per prototype
    int update_top_k = 0;               // 0 means "use typical_per_class"
    NormalizationPolicy normalization = NormalizationPolicy::at_encoding;

    int effective_update_top_k() const {
        return update_top_k > 0 ? update_top_k : typical_per_class;
    }
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
    std::string joined() const {
        std::string out;
        for (const auto& v : violations) {
            if (!out.empty()) out += "; ";
            out += v;
        }
        return out;
    }
};

inline std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline ValidationReport validate_config(const EngineConfig& c) {
    ValidationReport r;
    auto fail = [&r](const std::string& msg) { r.violations.push_back(msg); };

    if (c.fused_dim <= 0) fail("fused_dim must be positive, got " + std::to_string(c.fused_dim));
    if (c.num_classes <= 0) fail("num_classes must be positive, got " + std::to_string(c.num_classes));
    if (c.typical_per_class <= 0)
        fail("typical_per_class must be positive, got " + std::to_string(c.typical_per_class));
    if (c.wandering_per_class < 0)
        fail("wandering_per_class must be >= 0, got " + std::to_string(c.wandering_per_class));
    if (c.time_bins <= 0) fail("time_bins must be positive, got " + std::to_string(c.time_bins));
    if (c.num_classes != c.time_bins)
        fail("num_classes must equal time_bins, got " + std::to_string(c.num_classes) + " vs " +
             std::to_string(c.time_bins));
    if (!(c.power_exponent > 0.0))
        fail("power_exponent must be positive, got " + format_real(c.power_exponent));
    if (!(c.ema_decay > 0.0 && c.ema_decay < 0.5))
        fail("ema_decay out of (0,0.5), got " + format_real(c.ema_decay));
    if (!(c.band_fraction > 0.0))
        fail("band_fraction must be positive, got " + format_real(c.band_fraction));
    if (c.weight_mean_sim < 0.0)
        fail("weight_mean_sim must be nonnegative, got " + format_real(c.weight_mean_sim));
    if (c.weight_max_sim < 0.0)
        fail("weight_max_sim must be nonnegative, got " + format_real(c.weight_max_sim));
    if (c.weight_center_sim < 0.0)
        fail("weight_center_sim must be nonnegative, got " + format_real(c.weight_center_sim));
    const double wsum = c.weight_mean_sim + c.weight_max_sim + c.weight_center_sim;
    if (!(wsum > 1.0 - 1e-9 && wsum < 1.0 + 1e-9))
        fail("fusion weights do not sum to 1, got " + format_real(wsum));
    if (!(c.replace_threshold > 0.0))
        fail("replace_threshold must be positive, got " + format_real(c.replace_threshold));
    if (!(c.center_loss_weight > 0.0))
        fail("center_loss_weight must be positive, got " + format_real(c.center_loss_weight));
    if (!(c.censored_weight >= 0.0 && c.censored_weight <= 1.0))
        fail("censored_weight out of [0,1], got " + format_real(c.censored_weight));
    if (!(c.prototype_loss_weight >= 0.0 && c.prototype_loss_weight <= 1.0))
        fail("prototype_loss_weight out of [0,1], got " + format_real(c.prototype_loss_weight));
    if (c.update_period_epochs <= 0)
        fail("update_period_epochs must be positive, got " + std::to_string(c.update_period_epochs));
    if (c.top_sources <= 0)
        fail("top_sources must be positive, got " + std::to_string(c.top_sources));
    if (c.update_top_k < 0)
        fail("update_top_k must be >= 0, got " + std::to_string(c.update_top_k));
    return r;
}

inline std::uint64_t fnv1a_hash(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hash_hex(std::string_view s) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(s)));
    return buf;
}

}  // namespace protosurv
