// Per-eigen-dimension diagnostics: splits a sample's squared Mahalanobis
// distance into one contribution per eigen-dimension of the shared
// covariance, and forms the per-dimension relative (background-subtracted)
// counterpart. This is the lens that shows which dimensions actually carry
// the IND/OOD separation.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "oodscope/common.hpp"
#include "oodscope/gaussian.hpp"
#include "oodscope/linalg.hpp"
#include "oodscope/scoring.hpp"

namespace oodscope {

/// Shared eigen-basis of the ridged pooled covariance, with 1D variances
/// along each axis for both models. Both variances are evaluated as
/// projected quadratic forms v^T (C + ridge I) v through identical code, so
/// a one-class fit yields fg_var == bg_var bit for bit.
struct EigenAxes {
    Eigen::MatrixXd basis;   // column d spans eigen-dimension d, descending
    Eigen::VectorXd fg_var;  // v_d^T (shared_cov + ridge I) v_d
    Eigen::VectorXd bg_var;  // v_d^T (background_cov + ridge0 I) v_d
};

namespace detail {

inline Eigen::VectorXd projected_variances(const Eigen::MatrixXd& cov, double ridge,
                                           const Eigen::MatrixXd& basis) {
    Eigen::MatrixXd ridged = cov;
    ridged.diagonal().array() += ridge;
    Eigen::MatrixXd cv = ridged * basis;
    return (basis.cwiseProduct(cv)).colwise().sum().transpose();
}

}  // namespace detail

inline EigenAxes make_axes(const GaussianSuite& suite) {
    Eigen::MatrixXd ridged = suite.shared_cov.mat();
    ridged.diagonal().array() += suite.shared_factor.ridge;
    EigenDecomposition ed = eigh(SymMatrix(std::move(ridged)), "ridged shared covariance");

    EigenAxes axes;
    axes.basis = std::move(ed.eigenvectors);
    axes.fg_var = detail::projected_variances(suite.shared_cov.mat(), suite.shared_factor.ridge,
                                              axes.basis);
    axes.bg_var = detail::projected_variances(suite.background_cov.mat(),
                                              suite.background_factor.ridge, axes.basis);
    for (Eigen::Index d = 0; d < axes.fg_var.size(); ++d) {
        if (!(axes.fg_var[d] > 0.0))
            throw NumericalError("non-positive shared variance " + format_double(axes.fg_var[d]) +
                                 " along eigen-dimension " + std::to_string(d + 1));
        if (!(axes.bg_var[d] > 0.0))
            throw NumericalError("non-positive background variance " +
                                 format_double(axes.bg_var[d]) + " along eigen-dimension " +
                                 std::to_string(d + 1));
    }
    return axes;
}

namespace detail {

// Arg-min class per row; ties resolve to the lowest class index.
inline Eigen::VectorXi argmin_classes(const Eigen::MatrixXd& md) {
    Eigen::VectorXi out(md.rows());
    for (Eigen::Index i = 0; i < md.rows(); ++i) {
        Eigen::Index k = 0;
        md.row(i).minCoeff(&k);
        out[i] = static_cast<int>(k);
    }
    return out;
}

// Per-dimension squared projections onto the eigen-basis, each row centered
// at its arg-min class mean. Samples are processed grouped by class so the
// projection is one matrix product per class.
inline Eigen::MatrixXd argmin_projections_sq(const GaussianSuite& suite, const FeatureMatrix& test,
                                             const EigenAxes& axes, const Eigen::VectorXi& kstar) {
    const Eigen::Index n = test.n();
    const int k = suite.class_count();
    Eigen::MatrixXd out(n, suite.dim());
    for (int c = 0; c < k; ++c) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < n; ++i)
            if (kstar[i] == c) rows.push_back(i);
        if (rows.empty()) continue;
        Eigen::MatrixXd centered(static_cast<Eigen::Index>(rows.size()), test.dim());
        for (size_t i = 0; i < rows.size(); ++i)
            centered.row(static_cast<Eigen::Index>(i)) =
                test.data().row(rows[i]) - suite.class_means.row(c);
        Eigen::MatrixXd proj_sq = (centered * axes.basis).cwiseAbs2();
        for (size_t i = 0; i < rows.size(); ++i)
            out.row(rows[i]) = proj_sq.row(static_cast<Eigen::Index>(i));
    }
    return out;
}

}  // namespace detail

/// N x D matrix: row i holds l_d^2 / lambda_d for sample i at its arg-min
/// class, summing (to rounding) to the sample's squared distance.
inline Eigen::MatrixXd decompose_md(const GaussianSuite& suite, const FeatureMatrix& test,
                                    const EigenAxes& axes) {
    const Eigen::VectorXi kstar = detail::argmin_classes(md_matrix(suite, test));
    Eigen::MatrixXd contrib = detail::argmin_projections_sq(suite, test, axes, kstar);
    for (Eigen::Index d = 0; d < contrib.cols(); ++d) contrib.col(d) /= axes.fg_var[d];
    return contrib;
}

inline Eigen::MatrixXd decompose_md(const GaussianSuite& suite, const FeatureMatrix& test) {
    return decompose_md(suite, test, make_axes(suite));
}

/// N x D matrix of per-dimension relative contributions
/// l_d^2/lambda_d - m_d^2/s_d, with the background term projected onto the
/// same basis. The class per row is the MD arg-min, as in decompose_md.
inline Eigen::MatrixXd decompose_rmd(const GaussianSuite& suite, const FeatureMatrix& test,
                                     const EigenAxes& axes) {
    const Eigen::VectorXi kstar = detail::argmin_classes(md_matrix(suite, test));
    Eigen::MatrixXd fg = detail::argmin_projections_sq(suite, test, axes, kstar);
    Eigen::MatrixXd centered = test.data().rowwise() - suite.background_mean.transpose();
    Eigen::MatrixXd bg = (centered * axes.basis).cwiseAbs2();
    for (Eigen::Index d = 0; d < fg.cols(); ++d) {
        fg.col(d) /= axes.fg_var[d];
        bg.col(d) /= axes.bg_var[d];
    }
    return fg - bg;
}

inline Eigen::MatrixXd decompose_rmd(const GaussianSuite& suite, const FeatureMatrix& test) {
    return decompose_rmd(suite, test, make_axes(suite));
}

/// Summary statistics for one eigen-dimension.
struct EigenDimStats {
    double lambda = 0.0;
    double ind_md_mean = 0.0, ind_md_q10 = 0.0, ind_md_q90 = 0.0;
    double ood_md_mean = 0.0, ood_md_q10 = 0.0, ood_md_q90 = 0.0;
    double ind_rmd_mean = 0.0, ind_rmd_q10 = 0.0, ind_rmd_q90 = 0.0;
    double ood_rmd_mean = 0.0, ood_rmd_q10 = 0.0, ood_rmd_q90 = 0.0;
};

/// Per-dimension summary plus a heuristic split: the smallest d such that
/// the mean OOD-minus-IND MD gap stays within 5% of its maximum for every
/// dimension from d on. dim+1 means no such suffix exists.
struct EigenReport {
    Eigen::Index dim = 0;
    std::vector<EigenDimStats> per_dim;
    int suggested_split = 1;
};

namespace detail {

// Linear-interpolation empirical quantile (the numpy default) on a column.
inline double quantile(std::vector<double>& sorted_scratch, double p) {
    const size_t n = sorted_scratch.size();
    const double h = p * static_cast<double>(n - 1);
    const size_t lo = static_cast<size_t>(h);
    const size_t hi = std::min(lo + 1, n - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted_scratch[lo] + frac * (sorted_scratch[hi] - sorted_scratch[lo]);
}

inline void column_stats(const Eigen::MatrixXd& contrib, Eigen::Index d, double& mean, double& q10,
                         double& q90) {
    mean = contrib.col(d).mean();
    std::vector<double> vals(static_cast<size_t>(contrib.rows()));
    for (Eigen::Index i = 0; i < contrib.rows(); ++i) vals[static_cast<size_t>(i)] = contrib(i, d);
    std::sort(vals.begin(), vals.end());
    q10 = quantile(vals, 0.10);
    q90 = quantile(vals, 0.90);
}

}  // namespace detail

inline EigenReport summarize(const Eigen::MatrixXd& md_ind, const Eigen::MatrixXd& md_ood,
                             const Eigen::MatrixXd& rmd_ind, const Eigen::MatrixXd& rmd_ood,
                             const Eigen::VectorXd& lambda) {
    const Eigen::Index dim = lambda.size();
    if (md_ind.cols() != dim || md_ood.cols() != dim || rmd_ind.cols() != dim ||
        rmd_ood.cols() != dim)
        throw InputError("summarize: contribution matrices disagree on dimension count");
    if (md_ind.rows() == 0 || md_ood.rows() == 0)
        throw InputError("summarize: empty contribution set");

    EigenReport report;
    report.dim = dim;
    report.per_dim.resize(static_cast<size_t>(dim));
    Eigen::VectorXd gap(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
        EigenDimStats& s = report.per_dim[static_cast<size_t>(d)];
        s.lambda = lambda[d];
        detail::column_stats(md_ind, d, s.ind_md_mean, s.ind_md_q10, s.ind_md_q90);
        detail::column_stats(md_ood, d, s.ood_md_mean, s.ood_md_q10, s.ood_md_q90);
        detail::column_stats(rmd_ind, d, s.ind_rmd_mean, s.ind_rmd_q10, s.ind_rmd_q90);
        detail::column_stats(rmd_ood, d, s.ood_rmd_mean, s.ood_rmd_q10, s.ood_rmd_q90);
        gap[d] = s.ood_md_mean - s.ind_md_mean;
    }

    const double threshold = 0.05 * gap.maxCoeff();
    int split = static_cast<int>(dim) + 1;
    for (Eigen::Index d = dim - 1; d >= 0; --d) {
        if (gap[d] <= threshold)
            split = static_cast<int>(d) + 1;
        else
            break;
    }
    report.suggested_split = split;
    return report;
}

/// One-call pipeline: build axes, decompose both test sets, summarize.
inline EigenReport analyze(const GaussianSuite& suite, const FeatureMatrix& ind_test,
                           const FeatureMatrix& ood_test) {
    const EigenAxes axes = make_axes(suite);
    return summarize(decompose_md(suite, ind_test, axes), decompose_md(suite, ood_test, axes),
                     decompose_rmd(suite, ind_test, axes), decompose_rmd(suite, ood_test, axes),
                     axes.fg_var);
}

}  // namespace oodscope
