#pragma once
// Power Mean Distance Similarity (PMDSim) and the derived dissimilarity:
// the single metric used by initialization, updates, matching and losses.
// Cosine and plain Euclidean kernels exist behind the same signature as
// ablation alternatives only.

#include <cmath>
#include <span>
#include <string>

#include "protosurv/core.hpp"

namespace protosurv {

namespace detail {

inline void require_same_dim(std::span<const double> a, std::span<const double> b,
                             const char* op) {
    if (a.size() != b.size())
        throw DataError(std::string(op) + ": dimension mismatch, " +
                        std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    if (a.empty()) throw DataError(std::string(op) + ": empty input");
}

inline void require_finite_pair(std::span<const double> a, std::span<const double> b,
                                const char* op) {
    for (double v : a)
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
    for (double v : b)
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
}

}  // namespace detail

// S_p(a,b) = 1 / (1 + mean_i |a_i - b_i|^m). Always in (0,1], equal to 1
// exactly when a == b elementwise. The exponent is a real, so fractional
// powers are valid.
inline double pmdsim(std::span<const double> a, std::span<const double> b,
                     double exponent) {
    detail::require_same_dim(a, b, "pmdsim");
    if (!(exponent > 0.0)) throw DataError("pmdsim: exponent must be positive");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = std::fabs(a[i] - b[i]);
        acc += diff == 0.0 ? 0.0 : std::pow(diff, exponent);
    }
    if (!std::isfinite(acc)) {
        detail::require_finite_pair(a, b, "pmdsim");
        throw NumericError("pmdsim: non-finite accumulation (inputs too large for exponent)");
    }
    return 1.0 / (1.0 + acc / static_cast<double>(a.size()));
}

// d(a,b) = 1 / S_p(a,b); >= 1 always, == 1 iff a == b.
inline double dissimilarity(std::span<const double> a, std::span<const double> b,
                            double exponent) {
    return 1.0 / pmdsim(a, b, exponent);
}

// dS_p/da, used by the loss gradients and the matching jacobian.
// Requires exponent >= 1 (|.|^(m-1) at zero is taken as 0).
inline Vec pmdsim_gradient(std::span<const double> a, std::span<const double> b,
                           double exponent) {
    const double s = pmdsim(a, b, exponent);
    const double scale = -s * s * exponent / static_cast<double>(a.size());
    Vec grad(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        if (diff == 0.0) continue;
        const double mag = std::pow(std::fabs(diff), exponent - 1.0);
        grad[i] = scale * mag * (diff > 0.0 ? 1.0 : -1.0);
    }
    return grad;
}

struct NormalizeResult {
    Vec value;
    bool degenerate = false;  // norm below tolerance, vector returned unchanged
};

inline NormalizeResult l2_normalize(std::span<const double> v,
                                    double tolerance = 1e-12) {
    NormalizeResult out;
    out.value.assign(v.begin(), v.end());
    double sq = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError("l2_normalize: non-finite input");
        sq += x * x;
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("l2_normalize: norm overflow");
    if (norm <= tolerance) {
        out.degenerate = true;
        return out;
    }
    for (double& x : out.value) x /= norm;
    return out;
}

// Ablation-only alternatives, same shape as pmdsim.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b,
                                double /*exponent*/ = 0.0) {
    detail::require_same_dim(a, b, "cosine_similarity");
    detail::require_finite_pair(a, b, "cosine_similarity");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    return denom > 0.0 ? dot / denom : 0.0;
}

inline double euclidean_similarity(std::span<const double> a,
                                   std::span<const double> b,
                                   double /*exponent*/ = 0.0) {
    detail::require_same_dim(a, b, "euclidean_similarity");
    detail::require_finite_pair(a, b, "euclidean_similarity");
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sq += d * d;
    }
    return 1.0 / (1.0 + std::sqrt(sq));
}

}  // namespace protosurv
