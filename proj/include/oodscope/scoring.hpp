// Confidence scorers over a fitted Gaussian suite. All scores follow one
// orientation: higher = more in-distribution, so distances enter negated.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oodscope/common.hpp"
#include "oodscope/gaussian.hpp"
#include "oodscope/linalg.hpp"

namespace oodscope {

enum class ScorerId { md, rmd, pmd, mmd, msp };

inline std::string to_string(ScorerId id) {
    switch (id) {
        case ScorerId::md: return "md";
        case ScorerId::rmd: return "rmd";
        case ScorerId::pmd: return "pmd";
        case ScorerId::mmd: return "mmd";
        case ScorerId::msp: return "msp";
    }
    throw InputError("unknown scorer id");
}

inline ScorerId scorer_from_string(const std::string& s) {
    if (s == "md") return ScorerId::md;
    if (s == "rmd") return ScorerId::rmd;
    if (s == "pmd") return ScorerId::pmd;
    if (s == "mmd") return ScorerId::mmd;
    if (s == "msp") return ScorerId::msp;
    throw InputError("unknown scorer '" + s + "' (expected md, rmd, pmd, mmd, or msp)");
}

/// Eigen-dimension selector for partial distances: head(d) keeps the d
/// leading (largest-eigenvalue) dimensions, tail(d) keeps everything after
/// them. Dimensions are counted 1-based; validity depends on D and is
/// checked when the selector is applied.
struct PmdIndexSet {
    enum class Kind { head, tail };
    Kind kind = Kind::head;
    int d = 1;

    static PmdIndexSet head(int d) { return PmdIndexSet{Kind::head, d}; }
    static PmdIndexSet tail(int d) { return PmdIndexSet{Kind::tail, d}; }

    void validate(Eigen::Index dim) const {
        if (d < 1 || d > dim)
            throw InputError("pmd selector d=" + std::to_string(d) + " out of range [1, " +
                             std::to_string(dim) + "]");
        if (kind == Kind::tail && d == dim)
            throw InputError("pmd tail:" + std::to_string(d) + " selects no dimensions at D=" +
                             std::to_string(dim));
    }

    [[nodiscard]] std::string str() const {
        return (kind == Kind::head ? "head:" : "tail:") + std::to_string(d);
    }
};

inline PmdIndexSet parse_pmd_selector(const std::string& s) {
    const auto colon = s.find(':');
    if (colon != std::string::npos) {
        const std::string kind = s.substr(0, colon);
        const std::string num = s.substr(colon + 1);
        try {
            const int d = std::stoi(num);
            if (std::to_string(d) == num) {
                if (kind == "head") return PmdIndexSet::head(d);
                if (kind == "tail") return PmdIndexSet::tail(d);
            }
        } catch (const std::exception&) {
        }
    }
    throw InputError("bad pmd selector '" + s + "' (expected head:<d> or tail:<d>)");
}

/// Per-sample confidence scores plus enough provenance to catch mismatched
/// joins downstream: which scorer, which model, which regularization.
struct ScoreVector {
    Eigen::VectorXd scores;
    ScorerId scorer = ScorerId::md;
    uint64_t model_fingerprint = 0;
    double shared_ridge = 0.0;
    double background_ridge = 0.0;
    std::optional<PmdIndexSet> pmd;
};

namespace detail {

inline void check_test_dim(const GaussianSuite& suite, const FeatureMatrix& test) {
    if (test.dim() != suite.dim())
        throw InputError("test dim " + std::to_string(test.dim()) + " does not match model dim " +
                         std::to_string(suite.dim()));
}

inline ScoreVector make_scores(const GaussianSuite& suite, Eigen::VectorXd scores, ScorerId id,
                               std::optional<PmdIndexSet> pmd = std::nullopt) {
    return ScoreVector{std::move(scores), id,
                       suite.fingerprint, suite.shared_factor.ridge,
                       suite.background_factor.ridge, pmd};
}

}  // namespace detail

/// Squared Mahalanobis distance from z to every class mean, all through the
/// shared (ridged) covariance factor.
inline Eigen::VectorXd md_per_class(const GaussianSuite& suite, const Eigen::VectorXd& z) {
    if (z.size() != suite.dim())
        throw InputError("input dim " + std::to_string(z.size()) + " does not match model dim " +
                         std::to_string(suite.dim()));
    const int k = suite.class_count();
    Eigen::VectorXd out(k);
    for (int c = 0; c < k; ++c)
        out[c] = quad_form(suite.shared_factor, z - suite.class_means.row(c).transpose());
    return out;
}

/// N x K matrix of per-class squared distances, batched one class at a time.
inline Eigen::MatrixXd md_matrix(const GaussianSuite& suite, const FeatureMatrix& test) {
    detail::check_test_dim(suite, test);
    const int k = suite.class_count();
    Eigen::MatrixXd out(test.n(), k);
    for (int c = 0; c < k; ++c) {
        Eigen::MatrixXd centered = test.data().rowwise() - suite.class_means.row(c);
        out.col(c) = quad_form_rows(suite.shared_factor, centered);
    }
    return out;
}

/// Squared distance to the background Gaussian, one value per row.
inline Eigen::VectorXd background_md(const GaussianSuite& suite, const FeatureMatrix& test) {
    detail::check_test_dim(suite, test);
    Eigen::MatrixXd centered = test.data().rowwise() - suite.background_mean.transpose();
    return quad_form_rows(suite.background_factor, centered);
}

inline ScoreVector score_md(const GaussianSuite& suite, const FeatureMatrix& test) {
    Eigen::VectorXd scores = -md_matrix(suite, test).rowwise().minCoeff();
    return detail::make_scores(suite, std::move(scores), ScorerId::md);
}

/// Relative distance: the class-wise minimum of MD_k - MD_0. MD_0 is
/// evaluated once per sample through the background factor; subtracting a
/// per-row constant commutes with the min, so this equals score_md + MD_0.
inline ScoreVector score_rmd(const GaussianSuite& suite, const FeatureMatrix& test) {
    Eigen::MatrixXd md = md_matrix(suite, test);
    Eigen::VectorXd md0 = background_md(suite, test);
    md.colwise() -= md0;
    Eigen::VectorXd scores = -md.rowwise().minCoeff();
    return detail::make_scores(suite, std::move(scores), ScorerId::rmd);
}

inline ScoreVector score_mmd(const GaussianSuite& suite, const FeatureMatrix& test) {
    return detail::make_scores(suite, -background_md(suite, test), ScorerId::mmd);
}

/// Eigendecomposition of shared_cov + applied_ridge*I. The ridge keeps every
/// lambda_d strictly positive, which partial distances divide by.
struct PmdBasis {
    Eigen::VectorXd lambda;   // descending
    Eigen::MatrixXd vectors;  // column d spans eigen-dimension d
    double ridge = 0.0;
};

inline PmdBasis make_pmd_basis(const GaussianSuite& suite) {
    const double ridge = suite.shared_factor.ridge;
    Eigen::MatrixXd ridged = suite.shared_cov.mat();
    ridged.diagonal().array() += ridge;
    EigenDecomposition ed = eigh(SymMatrix(std::move(ridged)), "ridged shared covariance");
    for (Eigen::Index d = 0; d < ed.eigenvalues.size(); ++d) {
        if (!(ed.eigenvalues[d] > 0.0))
            throw NumericalError("ridged shared covariance has non-positive eigenvalue " +
                                 format_double(ed.eigenvalues[d]) + " at dimension " +
                                 std::to_string(d + 1));
    }
    return PmdBasis{std::move(ed.eigenvalues), std::move(ed.eigenvectors), ridge};
}

/// N x K matrix of partial distances PMD_k = sum over selected dimensions of
/// l_d^2 / lambda_d with l = V^T (z - mu_k). Dimensions accumulate in
/// ascending order of d.
inline Eigen::MatrixXd pmd_per_class(const GaussianSuite& suite, const FeatureMatrix& test,
                                     const PmdIndexSet& sel, const PmdBasis& basis) {
    detail::check_test_dim(suite, test);
    sel.validate(suite.dim());
    const Eigen::Index dim = suite.dim();
    const Eigen::Index lo = sel.kind == PmdIndexSet::Kind::head ? 0 : sel.d;
    const Eigen::Index hi = sel.kind == PmdIndexSet::Kind::head ? sel.d : dim;  // [lo, hi)
    const int k = suite.class_count();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(test.n(), k);
    for (int c = 0; c < k; ++c) {
        Eigen::MatrixXd centered = test.data().rowwise() - suite.class_means.row(c);
        Eigen::MatrixXd proj = centered * basis.vectors;
        for (Eigen::Index d = lo; d < hi; ++d)
            out.col(c) += proj.col(d).cwiseAbs2() / basis.lambda[d];
    }
    return out;
}

inline ScoreVector score_pmd(const GaussianSuite& suite, const FeatureMatrix& test,
                             const PmdIndexSet& sel) {
    const PmdBasis basis = make_pmd_basis(suite);
    Eigen::VectorXd scores = -pmd_per_class(suite, test, sel, basis).rowwise().minCoeff();
    return detail::make_scores(suite, std::move(scores), ScorerId::pmd, sel);
}

/// Scores for every head/tail cut in one pass, for the hyperparameter sweep.
/// head.col(j) holds scores for head(j+1); tail.col(j) for tail(j+1), so
/// tail has D-1 columns (tail(D) is empty and not represented).
struct PmdCurves {
    Eigen::MatrixXd head;
    Eigen::MatrixXd tail;
};

inline PmdCurves pmd_curves(const GaussianSuite& suite, const FeatureMatrix& test,
                            const PmdBasis& basis) {
    detail::check_test_dim(suite, test);
    const Eigen::Index n = test.n();
    const Eigen::Index dim = suite.dim();
    const int k = suite.class_count();
    Eigen::MatrixXd head_min, tail_min;
    for (int c = 0; c < k; ++c) {
        Eigen::MatrixXd centered = test.data().rowwise() - suite.class_means.row(c);
        Eigen::MatrixXd contrib = (centered * basis.vectors).cwiseAbs2();
        for (Eigen::Index d = 0; d < dim; ++d) contrib.col(d) /= basis.lambda[d];
        Eigen::MatrixXd suffix = contrib;
        for (Eigen::Index d = dim - 2; d >= 0; --d) suffix.col(d) += suffix.col(d + 1);
        for (Eigen::Index d = 1; d < dim; ++d) contrib.col(d) += contrib.col(d - 1);
        if (c == 0) {
            head_min = std::move(contrib);
            tail_min = std::move(suffix);
        } else {
            head_min = head_min.cwiseMin(contrib);
            tail_min = tail_min.cwiseMin(suffix);
        }
    }
    PmdCurves out;
    out.head = -head_min;
    out.tail = Eigen::MatrixXd(n, dim - 1);
    for (Eigen::Index j = 0; j + 1 < dim; ++j) out.tail.col(j) = -tail_min.col(j + 1);
    return out;
}

/// Maximum softmax probability from raw logits; no model involved. Stable
/// under large logits via max subtraction.
inline ScoreVector score_msp(const FeatureMatrix& logits) {
    if (logits.dim() < 2)
        throw InputError("msp needs at least 2 logit columns, got " + std::to_string(logits.dim()));
    const Eigen::Index n = logits.n();
    Eigen::VectorXd scores(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = logits.data().row(i);
        const double m = row.maxCoeff();
        scores[i] = 1.0 / (row.array() - m).exp().sum();
    }
    return ScoreVector{std::move(scores), ScorerId::msp, 0, 0.0, 0.0, std::nullopt};
}

/// Scorer selection as it appears on the command line.
struct ScorerSpec {
    ScorerId id = ScorerId::md;
    std::optional<PmdIndexSet> pmd;
};

inline ScoreVector score_with(const GaussianSuite& suite, const FeatureMatrix& test,
                              const ScorerSpec& spec) {
    switch (spec.id) {
        case ScorerId::md: return score_md(suite, test);
        case ScorerId::rmd: return score_rmd(suite, test);
        case ScorerId::mmd: return score_mmd(suite, test);
        case ScorerId::pmd:
            if (!spec.pmd) throw InputError("pmd scorer requires a head:<d> or tail:<d> selector");
            return score_pmd(suite, test, *spec.pmd);
        case ScorerId::msp:
            throw InputError("msp scores logits directly and takes no model");
    }
    throw InputError("unknown scorer id");
}

}  // namespace oodscope
