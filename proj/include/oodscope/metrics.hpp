// Evaluation: AUROC between in-distribution and out-of-distribution score
// vectors, plus shared-range histograms for the report output.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "oodscope/common.hpp"
#include "oodscope/gaussian.hpp"
#include "oodscope/scoring.hpp"

namespace oodscope {

/// Fixed-width histogram. `lo`/`hi` are the joint score range of both sets;
/// a degenerate range (all scores equal) puts everything in bin 0.
struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<int64_t> counts;
};

constexpr int kHistogramBins = 50;

/// AUROC on raw score arrays: the fraction of (ind, ood) pairs with
/// ind > ood, ties counting 1/2. Computed through average ranks in
/// O((n+m) log(n+m)).
inline double auroc_values(const Eigen::VectorXd& ind, const Eigen::VectorXd& ood) {
    const Eigen::Index n = ind.size();
    const Eigen::Index m = ood.size();
    if (n == 0) throw InputError("auroc: in-distribution score set is empty");
    if (m == 0) throw InputError("auroc: out-of-distribution score set is empty");
    for (Eigen::Index i = 0; i < n; ++i)
        if (std::isnan(ind[i]))
            throw InputError("auroc: NaN in-distribution score at index " + std::to_string(i));
    for (Eigen::Index i = 0; i < m; ++i)
        if (std::isnan(ood[i]))
            throw InputError("auroc: NaN out-of-distribution score at index " + std::to_string(i));

    struct Entry {
        double value;
        bool is_ind;
    };
    std::vector<Entry> all;
    all.reserve(static_cast<size_t>(n + m));
    for (Eigen::Index i = 0; i < n; ++i) all.push_back({ind[i], true});
    for (Eigen::Index i = 0; i < m; ++i) all.push_back({ood[i], false});
    std::sort(all.begin(), all.end(),
              [](const Entry& a, const Entry& b) { return a.value < b.value; });

    // Sum of average ranks (1-based) of the ind scores; tied runs share the
    // mean of their rank range.
    double ind_rank_sum = 0.0;
    size_t i = 0;
    while (i < all.size()) {
        size_t j = i;
        while (j < all.size() && all[j].value == all[i].value) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t t = i; t < j; ++t)
            if (all[t].is_ind) ind_rank_sum += avg_rank;
        i = j;
    }
    const double u = ind_rank_sum - 0.5 * static_cast<double>(n) * static_cast<double>(n + 1);
    return u / (static_cast<double>(n) * static_cast<double>(m));
}

/// AUROC on score vectors. Mismatched scorer or model fingerprint is a
/// user error worth surfacing but not fatal: a warning goes to `warnings`
/// when provided.
inline double auroc(const ScoreVector& ind, const ScoreVector& ood,
                    std::ostream* warnings = nullptr) {
    if (warnings) {
        if (ind.scorer != ood.scorer)
            *warnings << "warning: comparing scores from different scorers (" +
                             to_string(ind.scorer) + " vs " + to_string(ood.scorer) + ")\n";
        if (ind.model_fingerprint != ood.model_fingerprint)
            *warnings << "warning: comparing scores from different models ("
                      << format_hex_u64(ind.model_fingerprint) << " vs "
                      << format_hex_u64(ood.model_fingerprint) << ")\n";
    }
    return auroc_values(ind.scores, ood.scores);
}

inline Histogram histogram_over(const Eigen::VectorXd& values, double lo, double hi) {
    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(kHistogramBins, 0);
    const double width = hi - lo;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        int bin = 0;
        if (width > 0.0) {
            bin = static_cast<int>((values[i] - lo) / width * kHistogramBins);
            bin = std::clamp(bin, 0, kHistogramBins - 1);
        }
        ++h.counts[static_cast<size_t>(bin)];
    }
    return h;
}

struct EvalReport {
    double auroc = 0.0;
    int64_t n_ind = 0;
    int64_t n_ood = 0;
    Histogram ind_hist;
    Histogram ood_hist;
    ScorerId scorer = ScorerId::md;
    uint64_t model_fingerprint = 0;
};

/// Builds the full report from two score vectors (used both by one-shot
/// evaluation and when re-reading persisted score files).
inline EvalReport evaluate_scores(const ScoreVector& ind, const ScoreVector& ood,
                                  std::ostream* warnings = nullptr) {
    EvalReport r;
    r.auroc = auroc(ind, ood, warnings);
    r.n_ind = ind.scores.size();
    r.n_ood = ood.scores.size();
    const double lo = std::min(ind.scores.minCoeff(), ood.scores.minCoeff());
    const double hi = std::max(ind.scores.maxCoeff(), ood.scores.maxCoeff());
    r.ind_hist = histogram_over(ind.scores, lo, hi);
    r.ood_hist = histogram_over(ood.scores, lo, hi);
    r.scorer = ind.scorer;
    r.model_fingerprint = ind.model_fingerprint;
    return r;
}

/// Scores both test sets with the named scorer and reports AUROC plus
/// shared-range histograms.
inline EvalReport evaluate(const GaussianSuite& suite, const FeatureMatrix& ind_test,
                           const FeatureMatrix& ood_test, const ScorerSpec& spec,
                           std::ostream* warnings = nullptr) {
    return evaluate_scores(score_with(suite, ind_test, spec), score_with(suite, ood_test, spec),
                           warnings);
}

}  // namespace oodscope
