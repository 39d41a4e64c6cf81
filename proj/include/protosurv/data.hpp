#pragma once
// Dataset container, survival-time binning (equal-frequency over uncensored
// event times with expanded outer intervals), and the seeded synthetic
// multimodal survival-data generator used for desk-scale verification.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "protosurv/core.hpp"

namespace protosurv {

struct Dataset {
    std::vector<FeatureRecord> records;
    std::vector<int> modality_dims;
    Vec bin_edges;  // time_bins + 1 ascending values, [0, ..., +inf] once binned

    int input_dim() const {
        int d = 0;
        for (int m : modality_dims) d += m;
        return d;
    }
    bool binned() const { return !bin_edges.empty(); }
};

// Interior edges at the 1/K..(K-1)/K quantiles of the UNCENSORED event
// times; the outer edges expand to 0 and +inf so every record falls in a
// bin. Uses the inverted-CDF quantile, so distinct times split into equal
// counts.
inline Vec compute_bin_edges(const std::vector<FeatureRecord>& records, int time_bins) {
    if (time_bins <= 0) throw DataError("bin_times: time_bins must be positive");
    std::vector<double> uncensored;
    for (const auto& r : records) {
        if (r.event_time < 0.0)
            throw DataError("bin_times: negative event time for " + r.sample_id);
        if (r.censored == 0) uncensored.push_back(r.event_time);
    }
    std::sort(uncensored.begin(), uncensored.end());
    long long distinct = uncensored.empty() ? 0 : 1;
    for (std::size_t i = 1; i < uncensored.size(); ++i)
        if (uncensored[i] != uncensored[i - 1]) distinct += 1;
    if (distinct < time_bins)
        throw DataError("bin_times: need at least " + std::to_string(time_bins) +
                        " distinct uncensored event times, found " +
                        std::to_string(distinct));

    const auto n = static_cast<double>(uncensored.size());
    Vec edges;
    edges.reserve(static_cast<std::size_t>(time_bins) + 1);
    edges.push_back(0.0);
    for (int j = 1; j < time_bins; ++j) {
        const auto idx = static_cast<std::size_t>(
            std::ceil(static_cast<double>(j) * n / time_bins)) - 1;
        edges.push_back(uncensored[idx]);
    }
    edges.push_back(std::numeric_limits<double>::infinity());
    return edges;
}

// Bin index = number of interior edges strictly below t; monotone in t.
inline int bin_for_time(double t, const Vec& edges) {
    if (edges.size() < 2) throw DataError("bin_for_time: malformed edges");
    int bin = 0;
    for (std::size_t j = 1; j + 1 < edges.size(); ++j)
        if (edges[j] < t) bin += 1;
    return bin;
}

// Assigns edges and per-record bins in place (dataset construction phase;
// datasets are treated as immutable afterwards).
inline void bin_times(Dataset& ds, int time_bins) {
    ds.bin_edges = compute_bin_edges(ds.records, time_bins);
    for (auto& r : ds.records) r.time_bin = bin_for_time(r.event_time, ds.bin_edges);
}

// Per-class event-time profile: median months with a multiplicative spread.
// time_levels > 0 draws the multiplier from that many evenly spaced levels
// in [1-spread, 1+spread]; 0 draws it continuously.
struct ClassTimeProfile {
    double median_time = 0.0;
    double spread = 0.15;
};

struct SynthSpec {
    std::uint64_t seed = 2026;
    int samples_per_class = 200;
    std::vector<int> modality_dims = {8, 6};
    double separation = 5.0;       // class-mean scale relative to unit noise
    double censoring_rate = 0.2;   // in [0,1)
    int time_levels = 3;
    std::vector<ClassTimeProfile> class_profiles = {
        {96.0, 0.15}, {48.0, 0.15}, {24.0, 0.15}, {12.0, 0.15}};
};

inline ValidationReport validate_synth_spec(const SynthSpec& s) {
    ValidationReport r;
    auto fail = [&r](const std::string& m) { r.violations.push_back(m); };
    if (s.samples_per_class <= 0) fail("samples_per_class must be positive");
    if (s.modality_dims.empty()) fail("modality_dims must be non-empty");
    for (int d : s.modality_dims)
        if (d <= 0) fail("modality dims must be positive");
    if (!(s.separation >= 0.0)) fail("separation must be nonnegative");
    if (!(s.censoring_rate >= 0.0 && s.censoring_rate < 1.0))
        fail("censoring_rate out of [0,1), got " + format_real(s.censoring_rate));
    if (s.time_levels < 0) fail("time_levels must be >= 0");
    if (s.class_profiles.empty()) fail("class_profiles must be non-empty");
    for (const auto& p : s.class_profiles) {
        if (!(p.median_time > 0.0)) fail("class median_time must be positive");
        if (!(p.spread >= 0.0 && p.spread < 1.0)) fail("class spread out of [0,1)");
    }
    return r;
}

// Pure function of the spec: class-specific feature means scaled by the
// separation, unit Gaussian noise, event times from the class profile
// (lower class index = longer survival with the default profiles), and
// independent right-censoring with the censoring time uniform on (0, t).
inline Dataset generate_synthetic(const SynthSpec& spec) {
    const auto report = validate_synth_spec(spec);
    if (!report.ok()) throw DataError("generate_synthetic: " + report.joined());

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int num_classes = static_cast<int>(spec.class_profiles.size());
    std::vector<std::vector<Vec>> class_means(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) {
        for (int dim : spec.modality_dims) {
            Vec mean(static_cast<std::size_t>(dim));
            for (double& x : mean) x = gauss(rng) * spec.separation;
            class_means[static_cast<std::size_t>(c)].push_back(std::move(mean));
        }
    }

    Dataset ds;
    ds.modality_dims = spec.modality_dims;
    ds.records.reserve(static_cast<std::size_t>(num_classes) * spec.samples_per_class);
    char idbuf[32];
    for (int c = 0; c < num_classes; ++c) {
        const ClassTimeProfile& profile = spec.class_profiles[static_cast<std::size_t>(c)];
        for (int k = 0; k < spec.samples_per_class; ++k) {
            FeatureRecord rec;
            std::snprintf(idbuf, sizeof(idbuf), "s%d-%04d", c, k);
            rec.sample_id = idbuf;
            for (std::size_t b = 0; b < spec.modality_dims.size(); ++b) {
                const Vec& mean = class_means[static_cast<std::size_t>(c)][b];
                Vec block(mean.size());
                for (std::size_t i = 0; i < block.size(); ++i)
                    block[i] = mean[i] + gauss(rng);
                rec.modality_blocks.push_back(std::move(block));
            }
            double multiplier;
            if (spec.time_levels > 1) {
                const int level = static_cast<int>(unit(rng) * spec.time_levels);
                const int clamped = std::min(level, spec.time_levels - 1);
                multiplier = 1.0 - profile.spread +
                             2.0 * profile.spread * clamped / (spec.time_levels - 1);
            } else if (spec.time_levels == 1) {
                multiplier = 1.0;
            } else {
                multiplier = 1.0 - profile.spread + 2.0 * profile.spread * unit(rng);
            }
            rec.event_time = profile.median_time * multiplier;
            if (unit(rng) < spec.censoring_rate) {
                rec.censored = 1;
                rec.event_time *= unit(rng);  // censoring precedes the latent event
            }
            ds.records.push_back(std::move(rec));
        }
    }
    return ds;
}

// Seeded stratified split over the generator's class blocks: for each
// contiguous block of samples_per_class records, a shuffled train_per_class
// go to train and the rest to validation. Both halves keep the parent's
// bin edges.
inline std::pair<Dataset, Dataset> split_by_class_blocks(const Dataset& ds,
                                                         int num_classes,
                                                         int train_per_class,
                                                         std::uint64_t seed) {
    if (num_classes <= 0 || ds.records.size() % static_cast<std::size_t>(num_classes) != 0)
        throw DataError("split_by_class_blocks: record count not divisible by classes");
    const auto per_class = ds.records.size() / static_cast<std::size_t>(num_classes);
    if (train_per_class <= 0 || static_cast<std::size_t>(train_per_class) >= per_class)
        throw DataError("split_by_class_blocks: train_per_class out of range");

    std::mt19937_64 rng(seed);
    Dataset train, val;
    train.modality_dims = val.modality_dims = ds.modality_dims;
    train.bin_edges = val.bin_edges = ds.bin_edges;
    for (int c = 0; c < num_classes; ++c) {
        std::vector<std::size_t> idx(per_class);
        for (std::size_t i = 0; i < per_class; ++i)
            idx[i] = static_cast<std::size_t>(c) * per_class + i;
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < per_class; ++i) {
            const FeatureRecord& r = ds.records[idx[i]];
            (i < static_cast<std::size_t>(train_per_class) ? train : val)
                .records.push_back(r);
        }
    }
    return {std::move(train), std::move(val)};
}

// Seeded 8:2-style shuffle split over the whole dataset (the protocol the
// CLI's --folds option repeats with per-fold seeds).
inline std::pair<Dataset, Dataset> shuffle_split(const Dataset& ds,
                                                 double train_fraction,
                                                 std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw DataError("shuffle_split: train_fraction out of (0,1)");
    std::vector<std::size_t> idx(ds.records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(idx.size())));
    Dataset train, val;
    train.modality_dims = val.modality_dims = ds.modality_dims;
    train.bin_edges = val.bin_edges = ds.bin_edges;
    for (std::size_t i = 0; i < idx.size(); ++i)
        (i < n_train ? train : val).records.push_back(ds.records[idx[i]]);
    return {std::move(train), std::move(val)};
}

}  // namespace protosurv
