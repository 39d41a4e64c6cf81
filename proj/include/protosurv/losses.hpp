#pragma once
// ProtoSurv loss stack: prototype contrastive loss, prototype center loss,
// discrete-time NLL survival loss, and their weighted combination, with
// hand-derived gradients (features for the prototype losses, logits for the
// survival loss). Prototypes and class centers are constants here; the
// library evolves through its update strategies, not through backprop.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "protosurv/core.hpp"
#include "protosurv/library.hpp"
#include "protosurv/matching.hpp"
#include "protosurv/similarity.hpp"

namespace protosurv {

constexpr double kProbClamp = 1e-7;

inline double clamp_probability(double p) {
    return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}

// L = max(-log(sum exp(S+) / (sum exp(S+) + sum exp(S-))), 0) with S from
// pmdsim against the sample's own class (positives) and every other class
// (negatives). The outer max is kept literally even though the inner term
// cannot go negative with exact arithmetic.
inline double contrastive_loss(const Vec& feature, const PrototypeLibrary& lib,
                               int class_index, double exponent,
                               Vec* grad_out = nullptr) {
    if (lib.num_classes < 2)
        throw DataError("contrastive_loss: undefined with a single class");
    if (class_index < 0 || class_index >= lib.num_classes)
        throw DataError("contrastive_loss: class index " + std::to_string(class_index) +
                        " out of range");

    struct Term {
        const PrototypeEntry* proto;
        double exp_sim;
        bool positive;
    };
    std::vector<Term> terms;
    double pos_sum = 0.0, neg_sum = 0.0;
    for (int c = 0; c < lib.num_classes; ++c) {
        const bool positive = c == class_index;
        for (const PrototypeEntry* p : effective_set(lib, c)) {
            const double e = std::exp(pmdsim(feature, p->vector, exponent));
            terms.push_back({p, e, positive});
            (positive ? pos_sum : neg_sum) += e;
        }
    }
    const double inner = std::log(pos_sum + neg_sum) - std::log(pos_sum);
    const double loss = std::max(inner, 0.0);
    if (grad_out) {
        grad_out->assign(feature.size(), 0.0);
        if (inner > 0.0) {
            const double inv_total = 1.0 / (pos_sum + neg_sum);
            const double inv_pos = 1.0 / pos_sum;
            for (const Term& t : terms) {
                const double coeff =
                    t.positive ? t.exp_sim * (inv_total - inv_pos) : t.exp_sim * inv_total;
                const Vec g = pmdsim_gradient(feature, t.proto->vector, exponent);
                for (std::size_t d = 0; d < grad_out->size(); ++d)
                    (*grad_out)[d] += coeff * g[d];
            }
        }
    }
    return loss;
}

// L = sigma / pmdsim(f, mu_c); minimized (value sigma) exactly at the center.
inline double center_loss(const Vec& feature, const Vec& center, double sigma,
                          double exponent, Vec* grad_out = nullptr) {
    const double sim = pmdsim(feature, center, exponent);
    const double loss = sigma / sim;
    if (grad_out) {
        // 1/S = 1 + mean |f - mu|^m, so the gradient skips the 1/S^2 chain.
        grad_out->assign(feature.size(), 0.0);
        const double scale = sigma * exponent / static_cast<double>(feature.size());
        for (std::size_t d = 0; d < feature.size(); ++d) {
            const double diff = feature[d] - center[d];
            if (diff == 0.0) continue;
            (*grad_out)[d] =
                scale * std::pow(std::fabs(diff), exponent - 1.0) * (diff > 0.0 ? 1.0 : -1.0);
        }
    }
    return loss;
}

struct NllSurvResult {
    double uncensored_term = 0.0;  // L_UCs
    double censored_term = 0.0;    // L_Cs
    double value = 0.0;            // (1-alpha)*(L_UCs + L_Cs) + alpha*L_Cs
    Vec logit_grad;                // d value / d logits
};

// Discrete-time survival NLL for one sample. Survival here is the
// exclusive product Surv(t) = prod_{s<t}(1 - h(s)) with Surv(0) = 1;
// probabilities are clamped to [1e-7, 1-1e-7] before the logs, and a
// clamped term contributes zero gradient.
inline NllSurvResult nll_surv_loss(const Vec& logits, int event_bin, int censored,
                                   double censored_weight) {
    const int k = static_cast<int>(logits.size());
    if (event_bin < 0 || event_bin >= k)
        throw DataError("nll_surv_loss: bin " + std::to_string(event_bin) +
                        " out of [0," + std::to_string(k) + ")");
    for (double v : logits)
        if (!std::isfinite(v)) throw NumericError("nll_surv_loss: non-finite logit");

    Vec hazard(static_cast<std::size_t>(k));
    for (int s = 0; s < k; ++s) hazard[static_cast<std::size_t>(s)] = sigmoid(logits[s]);
    auto survival_until = [&](int t) {  // Surv(t), exclusive product
        double p = 1.0;
        for (int s = 0; s < t; ++s) p *= 1.0 - hazard[static_cast<std::size_t>(s)];
        return p;
    };

    NllSurvResult out;
    out.logit_grad.assign(static_cast<std::size_t>(k), 0.0);
    if (censored == 0) {
        const double surv_y = survival_until(event_bin);
        const double h_y = hazard[static_cast<std::size_t>(event_bin)];
        out.uncensored_term =
            -(std::log(clamp_probability(surv_y)) + std::log(clamp_probability(h_y)));
        const double w = 1.0 - censored_weight;
        out.value = w * out.uncensored_term;
        const bool surv_clamped = surv_y < kProbClamp || surv_y > 1.0 - kProbClamp;
        const bool h_clamped = h_y < kProbClamp || h_y > 1.0 - kProbClamp;
        if (!surv_clamped)
            for (int s = 0; s < event_bin; ++s)
                out.logit_grad[static_cast<std::size_t>(s)] +=
                    w * hazard[static_cast<std::size_t>(s)];
        if (!h_clamped)
            out.logit_grad[static_cast<std::size_t>(event_bin)] -= w * (1.0 - h_y);
    } else {
        const double surv_next = survival_until(event_bin + 1);
        out.censored_term = -std::log(clamp_probability(surv_next));
        // (1-alpha)*L_Cs + alpha*L_Cs collapses to L_Cs for a censored sample.
        out.value = out.censored_term;
        const bool clamped = surv_next < kProbClamp || surv_next > 1.0 - kProbClamp;
        if (!clamped)
            for (int s = 0; s <= event_bin; ++s)
                out.logit_grad[static_cast<std::size_t>(s)] +=
                    hazard[static_cast<std::size_t>(s)];
    }
    return out;
}

// One encoded training sample as the loss stack consumes it.
struct EncodedSample {
    std::string sample_id;
    Vec fused;
    int time_bin = 0;
    int censored = 0;
};

struct SampleLossRecord {
    std::string sample_id;
    double contrastive = 0.0;
    double center = 0.0;
    double uncensored_nll = 0.0;
    double censored_nll = 0.0;
    double survival = 0.0;
    double total = 0.0;
};

struct LossBreakdown {
    double contrastive = 0.0;
    double center = 0.0;
    double prototypes = 0.0;     // contrastive + center
    double uncensored_nll = 0.0;
    double censored_nll = 0.0;
    double survival = 0.0;
    double total = 0.0;          // beta*prototypes + (1-beta)*survival
    std::vector<SampleLossRecord> per_sample;
};

struct LossGradients {
    // d total / d fused_i from the prototype losses (beta and 1/B included).
    std::vector<Vec> feature;
    // d total / d logits_i from the survival loss ((1-beta) and 1/B included).
    std::vector<Vec> logits;
};

// Batch loss per the weighted combination: every component is the batch
// mean of its per-sample values, reduced in ascending sample order.
inline std::pair<LossBreakdown, LossGradients> total_loss(
    const std::vector<EncodedSample>& batch, const PrototypeLibrary& lib,
    const EngineConfig& cfg) {
    if (batch.empty()) throw DataError("total_loss: empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const double beta = cfg.prototype_loss_weight;

    LossBreakdown bd;
    LossGradients grads;
    bd.per_sample.reserve(batch.size());
    grads.feature.reserve(batch.size());
    grads.logits.reserve(batch.size());

    for (const EncodedSample& s : batch) {
        Vec g_contra, g_center;
        const double contra =
            contrastive_loss(s.fused, lib, s.time_bin, cfg.power_exponent, &g_contra);
        const double center =
            center_loss(s.fused, lib.class_centers[static_cast<std::size_t>(s.time_bin)],
                        cfg.center_loss_weight, cfg.power_exponent, &g_center);
        const Vec logits = mpmatch_logits(s.fused, lib, cfg);
        const NllSurvResult nll =
            nll_surv_loss(logits, s.time_bin, s.censored, cfg.censored_weight);

        SampleLossRecord rec;
        rec.sample_id = s.sample_id;
        rec.contrastive = contra;
        rec.center = center;
        rec.uncensored_nll = nll.uncensored_term;
        rec.censored_nll = nll.censored_term;
        rec.survival = nll.value;
        rec.total = beta * (contra + center) + (1.0 - beta) * nll.value;
        bd.per_sample.push_back(rec);

        bd.contrastive += contra * inv_b;
        bd.center += center * inv_b;
        bd.uncensored_nll += nll.uncensored_term * inv_b;
        bd.censored_nll += nll.censored_term * inv_b;
        bd.survival += nll.value * inv_b;

        Vec gf(s.fused.size(), 0.0);
        for (std::size_t d = 0; d < gf.size(); ++d)
            gf[d] = beta * inv_b * (g_contra[d] + g_center[d]);
        grads.feature.push_back(std::move(gf));
        Vec gl(nll.logit_grad.size(), 0.0);
        for (std::size_t d = 0; d < gl.size(); ++d)
            gl[d] = (1.0 - beta) * inv_b * nll.logit_grad[d];
        grads.logits.push_back(std::move(gl));
    }
    bd.prototypes = bd.contrastive + bd.center;
    bd.total = beta * bd.prototypes + (1.0 - beta) * bd.survival;
    if (!std::isfinite(bd.total))
        throw NumericError("total_loss: non-finite batch loss");
    return {std::move(bd), std::move(grads)};
}

}  // namespace protosurv
