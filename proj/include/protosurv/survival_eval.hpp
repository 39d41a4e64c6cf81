#pragma once
// Cohort-level evaluation: Harrell concordance index, median-risk
// stratification, Kaplan-Meier product-limit curves, and the two-group
// log-rank test with a chi-square(1) p-value computed via the regularized
// incomplete gamma function.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "protosurv/core.hpp"

namespace protosurv {

struct CohortSample {
    std::string sample_id;
    double risk = 0.0;
    double event_time = 0.0;  // months
    int censored = 0;
};

// The standard definition requires the earlier sample of a pair to be
// uncensored; the literal mode instead gates on the later sample (the
// published formula's (1 - c_j) factor) and gives no credit for risk ties.
enum class CIndexMode { standard, literal };

inline double c_index(const std::vector<CohortSample>& cohort,
                      CIndexMode mode = CIndexMode::standard) {
    for (const auto& s : cohort) {
        if (!std::isfinite(s.risk))
            throw NumericError("c_index: non-finite risk for " + s.sample_id);
        if (s.event_time < 0.0)
            throw DataError("c_index: negative time for " + s.sample_id);
    }
    double concordant = 0.0;
    long long comparable = 0;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        for (std::size_t j = i + 1; j < cohort.size(); ++j) {
            const CohortSample& a =
                cohort[i].event_time <= cohort[j].event_time ? cohort[i] : cohort[j];
            const CohortSample& b =
                cohort[i].event_time <= cohort[j].event_time ? cohort[j] : cohort[i];
            if (a.event_time == b.event_time) continue;
            if (mode == CIndexMode::standard) {
                if (a.censored != 0) continue;
                comparable += 1;
                if (a.risk > b.risk)
                    concordant += 1.0;
                else if (a.risk == b.risk)
                    concordant += 0.5;
            } else {
                if (b.censored != 0) continue;
                comparable += 1;
                if (a.risk > b.risk) concordant += 1.0;
            }
        }
    }
    if (comparable == 0) throw DataError("C-index undefined: no comparable pairs");
    return concordant / static_cast<double>(comparable);
}

inline double median_risk(const std::vector<CohortSample>& cohort) {
    if (cohort.size() < 2) throw DataError("median_risk_split: need at least 2 samples");
    std::vector<double> risks;
    risks.reserve(cohort.size());
    for (const auto& s : cohort) risks.push_back(s.risk);
    std::sort(risks.begin(), risks.end());
    const std::size_t n = risks.size();
    return n % 2 == 1 ? risks[n / 2] : 0.5 * (risks[n / 2 - 1] + risks[n / 2]);
}

// risk > median goes high, risk <= median goes low; input order preserved.
inline std::pair<std::vector<CohortSample>, std::vector<CohortSample>>
median_risk_split(const std::vector<CohortSample>& cohort) {
    const double median = median_risk(cohort);
    std::vector<CohortSample> high, low;
    for (const auto& s : cohort) (s.risk > median ? high : low).push_back(s);
    return {std::move(high), std::move(low)};
}

struct KMPoint {
    double time = 0.0;
    double survival = 0.0;
    int at_risk = 0;  // just before this time
    int events = 0;
};

// Product-limit points at every distinct event time (survival starts at 1
// implicitly; censored samples leave the risk set without a drop).
struct KMCurve {
    std::vector<KMPoint> points;
};

inline KMCurve km_curve(const std::vector<CohortSample>& group) {
    if (group.empty()) throw DataError("km_curve: empty group");
    std::vector<CohortSample> sorted = group;
    std::sort(sorted.begin(), sorted.end(),
              [](const CohortSample& a, const CohortSample& b) {
                  return a.event_time < b.event_time;
              });
    KMCurve curve;
    double survival = 1.0;
    int at_risk = static_cast<int>(sorted.size());
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double t = sorted[i].event_time;
        int events = 0, removed = 0;
        while (i < sorted.size() && sorted[i].event_time == t) {
            if (sorted[i].censored == 0) events += 1;
            removed += 1;
            ++i;
        }
        if (events > 0) {
            survival *= 1.0 - static_cast<double>(events) / static_cast<double>(at_risk);
            curve.points.push_back({t, survival, at_risk, events});
        }
        at_risk -= removed;
    }
    return curve;
}

namespace detail {

inline double gamma_series_p(double a, double x) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_cf_q(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

// Upper regularized incomplete gamma Q(a, x) = Gamma(a,x)/Gamma(a).
inline double regularized_gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0)
        throw NumericError("regularized_gamma_q: invalid arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_series_p(a, x);
    return detail::gamma_cf_q(a, x);
}

inline double chi_square_1df_p_value(double chi_square) {
    return regularized_gamma_q(0.5, chi_square / 2.0);
}

struct LogRankResult {
    double chi_square = 0.0;
    double p_value = 1.0;
};

// Two-group log-rank: observed vs expected events under pooled risk sets,
// hypergeometric variance, chi-square with one degree of freedom.
inline LogRankResult logrank_test(const std::vector<CohortSample>& group_a,
                                  const std::vector<CohortSample>& group_b) {
    if (group_a.empty() || group_b.empty())
        throw DataError("logrank_test: both groups must be non-empty");

    struct Obs {
        double time;
        int censored;
        int group;
    };
    std::vector<Obs> all;
    all.reserve(group_a.size() + group_b.size());
    for (const auto& s : group_a) all.push_back({s.event_time, s.censored, 0});
    for (const auto& s : group_b) all.push_back({s.event_time, s.censored, 1});
    std::sort(all.begin(), all.end(),
              [](const Obs& x, const Obs& y) { return x.time < y.time; });

    int total_events = 0;
    for (const auto& o : all) total_events += o.censored == 0 ? 1 : 0;
    if (total_events == 0) throw DataError("logrank_test: zero events overall");

    double observed_minus_expected = 0.0;
    double variance = 0.0;
    int at_risk_a = static_cast<int>(group_a.size());
    int at_risk_b = static_cast<int>(group_b.size());
    std::size_t i = 0;
    while (i < all.size()) {
        const double t = all[i].time;
        int d_a = 0, d_b = 0, removed_a = 0, removed_b = 0;
        while (i < all.size() && all[i].time == t) {
            if (all[i].group == 0) {
                removed_a += 1;
                if (all[i].censored == 0) d_a += 1;
            } else {
                removed_b += 1;
                if (all[i].censored == 0) d_b += 1;
            }
            ++i;
        }
        const int d = d_a + d_b;
        const int n = at_risk_a + at_risk_b;
        if (d > 0 && n > 1) {
            const double nd = static_cast<double>(n);
            const double expected_a = static_cast<double>(d) * at_risk_a / nd;
            observed_minus_expected += static_cast<double>(d_a) - expected_a;
            variance += static_cast<double>(d) * at_risk_a * at_risk_b *
                        static_cast<double>(n - d) / (nd * nd * (nd - 1.0));
        }
        at_risk_a -= removed_a;
        at_risk_b -= removed_b;
    }

    LogRankResult result;
    if (variance <= 0.0) {
        result.chi_square = 0.0;
        result.p_value = 1.0;
        return result;
    }
    result.chi_square =
        observed_minus_expected * observed_minus_expected / variance;
    result.p_value = chi_square_1df_p_value(result.chi_square);
    return result;
}

}  // namespace protosurv
