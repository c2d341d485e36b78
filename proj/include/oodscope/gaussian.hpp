// Gaussian fitting: class-conditional means with a shared covariance, plus a
// label-free background Gaussian over the same rows. Both fits run through
// the same accumulation helpers so that a one-class fit reproduces the
// background fit bit for bit.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oodscope/common.hpp"
#include "oodscope/linalg.hpp"

namespace oodscope {

/// Row-per-sample feature matrix, optionally labeled. Labels are dense class
/// ids 0..K-1; every class in that range must be populated.
class FeatureMatrix {
public:
    static FeatureMatrix with_labels(Eigen::MatrixXd data, Eigen::VectorXi labels) {
        FeatureMatrix fm(std::move(data));
        if (labels.size() != fm.data_.rows())
            throw InputError("label count " + std::to_string(labels.size()) +
                             " does not match row count " + std::to_string(fm.data_.rows()));
        int max_label = -1;
        for (Eigen::Index i = 0; i < labels.size(); ++i) {
            if (labels[i] < 0)
                throw InputError("negative label " + std::to_string(labels[i]) + " at row " +
                                 std::to_string(i));
            if (labels[i] > max_label) max_label = labels[i];
        }
        const int k = max_label + 1;
        std::vector<long> counts(static_cast<size_t>(k), 0);
        for (Eigen::Index i = 0; i < labels.size(); ++i) ++counts[static_cast<size_t>(labels[i])];
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0)
                throw InputError("class " + std::to_string(c) +
                                 " has no samples (labels must cover 0..K-1)");
        }
        fm.labels_ = std::move(labels);
        fm.class_count_ = k;
        return fm;
    }

    static FeatureMatrix unlabeled(Eigen::MatrixXd data) { return FeatureMatrix(std::move(data)); }

    [[nodiscard]] Eigen::Index n() const { return data_.rows(); }
    [[nodiscard]] Eigen::Index dim() const { return data_.cols(); }
    [[nodiscard]] bool labeled() const { return labels_.has_value(); }
    [[nodiscard]] int class_count() const { return class_count_; }
    [[nodiscard]] const Eigen::MatrixXd& data() const { return data_; }
    [[nodiscard]] const Eigen::VectorXi& labels() const {
        if (!labels_) throw InputError("feature matrix has no labels");
        return *labels_;
    }

private:
    explicit FeatureMatrix(Eigen::MatrixXd data) : data_(std::move(data)) {
        if (data_.rows() < 1) throw InputError("feature matrix must have at least one row");
        if (data_.cols() < 1) throw InputError("feature matrix must have at least one column");
        for (Eigen::Index i = 0; i < data_.rows(); ++i) {
            for (Eigen::Index j = 0; j < data_.cols(); ++j) {
                if (!std::isfinite(data_(i, j)))
                    throw InputError("non-finite feature at row " + std::to_string(i) +
                                     ", column " + std::to_string(j));
            }
        }
    }

    Eigen::MatrixXd data_;
    std::optional<Eigen::VectorXi> labels_;
    int class_count_ = 0;
};

namespace detail {

// Mean over the given rows, accumulated in ascending row order. Both fits
// call this with their own index set so identical sets give identical bits.
inline Eigen::VectorXd mean_of_rows(const Eigen::MatrixXd& data,
                                    const std::vector<Eigen::Index>& rows) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(data.cols());
    for (Eigen::Index r : rows) sum += data.row(r).transpose();
    return sum / static_cast<double>(rows.size());
}

// Accumulates sum of (z - mu)(z - mu)^T over the given rows into `scatter`
// (full matrix, symmetric by construction of the rank update).
inline void accumulate_scatter(const Eigen::MatrixXd& data, const std::vector<Eigen::Index>& rows,
                               const Eigen::VectorXd& mean, Eigen::MatrixXd& scatter) {
    Eigen::MatrixXd centered(static_cast<Eigen::Index>(rows.size()), data.cols());
    for (size_t i = 0; i < rows.size(); ++i)
        centered.row(static_cast<Eigen::Index>(i)) = data.row(rows[i]) - mean.transpose();
    scatter.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0);
    scatter.triangularView<Eigen::StrictlyUpper>() =
        scatter.triangularView<Eigen::StrictlyLower>().transpose();
}

inline std::vector<Eigen::Index> all_rows(Eigen::Index n) {
    std::vector<Eigen::Index> rows(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) rows[static_cast<size_t>(i)] = i;
    return rows;
}

}  // namespace detail

/// Per-class means plus the covariance pooled across classes. Normalizer is
/// 1/N (biased), matching the background fit.
struct ClassConditionalFit {
    Eigen::MatrixXd class_means;  // K x D
    Eigen::VectorXi class_counts;
    SymMatrix shared_cov;
};

/// Single Gaussian over all rows, labels ignored. Normalizer is 1/N.
struct BackgroundFit {
    Eigen::VectorXd mean;
    SymMatrix cov;
};

inline ClassConditionalFit fit_class_conditional(const FeatureMatrix& train) {
    if (!train.labeled()) throw InputError("class-conditional fit requires labels");
    const Eigen::Index n = train.n();
    const Eigen::Index d = train.dim();
    const int k = train.class_count();
    const auto& labels = train.labels();

    std::vector<std::vector<Eigen::Index>> by_class(static_cast<size_t>(k));
    for (Eigen::Index i = 0; i < n; ++i)
        by_class[static_cast<size_t>(labels[i])].push_back(i);

    Eigen::MatrixXd means(k, d);
    Eigen::VectorXi counts(k);
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
    for (int c = 0; c < k; ++c) {
        const auto& rows = by_class[static_cast<size_t>(c)];
        const Eigen::VectorXd mu = detail::mean_of_rows(train.data(), rows);
        means.row(c) = mu.transpose();
        counts[c] = static_cast<int>(rows.size());
        detail::accumulate_scatter(train.data(), rows, mu, scatter);
    }
    return ClassConditionalFit{std::move(means), std::move(counts),
                               SymMatrix(scatter / static_cast<double>(n))};
}

inline BackgroundFit fit_background(const FeatureMatrix& train) {
    const Eigen::Index n = train.n();
    const Eigen::Index d = train.dim();
    const auto rows = detail::all_rows(n);
    const Eigen::VectorXd mu = detail::mean_of_rows(train.data(), rows);
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
    detail::accumulate_scatter(train.data(), rows, mu, scatter);
    return BackgroundFit{mu, SymMatrix(scatter / static_cast<double>(n))};
}

/// Fingerprint of a labeled training set: class structure plus the raw
/// feature bytes in row order. Persisted with models and echoed into score
/// files so downstream joins can detect model/data mismatches.
inline uint64_t fingerprint_of(const FeatureMatrix& train) {
    if (!train.labeled()) throw InputError("fingerprint requires a labeled training set");
    Fnv1a h;
    h.update_u64(static_cast<uint64_t>(train.n()));
    h.update_u64(static_cast<uint64_t>(train.dim()));
    h.update_u64(static_cast<uint64_t>(train.class_count()));
    const auto& labels = train.labels();
    std::vector<int64_t> counts(static_cast<size_t>(train.class_count()), 0);
    for (Eigen::Index i = 0; i < labels.size(); ++i) ++counts[static_cast<size_t>(labels[i])];
    for (int64_t c : counts) h.update_i64(c);
    Eigen::RowVectorXd row(train.dim());
    for (Eigen::Index i = 0; i < train.n(); ++i) {
        row = train.data().row(i);
        h.update(row.data(), static_cast<size_t>(train.dim()) * sizeof(double));
    }
    return h.digest();
}

/// Everything a scorer needs: both fits, their factorizations, and the
/// training-set fingerprint.
struct GaussianSuite {
    Eigen::MatrixXd class_means;  // K x D
    Eigen::VectorXi class_counts;
    SymMatrix shared_cov;
    SpdFactorization shared_factor;
    Eigen::VectorXd background_mean;
    SymMatrix background_cov;
    SpdFactorization background_factor;
    uint64_t fingerprint = 0;

    [[nodiscard]] Eigen::Index dim() const { return class_means.cols(); }
    [[nodiscard]] int class_count() const { return static_cast<int>(class_means.rows()); }
};

inline GaussianSuite build_suite(const FeatureMatrix& train,
                                 const RidgePolicy& policy = RidgePolicy::standard()) {
    ClassConditionalFit cc = fit_class_conditional(train);
    BackgroundFit bg = fit_background(train);
    SpdFactorization shared_factor = spd_factorize(cc.shared_cov, policy, "shared covariance");
    SpdFactorization background_factor = spd_factorize(bg.cov, policy, "background covariance");
    const uint64_t fp = fingerprint_of(train);
    return GaussianSuite{std::move(cc.class_means), std::move(cc.class_counts),
                         std::move(cc.shared_cov),  std::move(shared_factor),
                         std::move(bg.mean),        std::move(bg.cov),
                         std::move(background_factor), fp};
}

}  // namespace oodscope
