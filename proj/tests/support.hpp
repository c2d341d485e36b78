// Shared helpers for the unit suites: seeded random data, hand-assembled
// suites, and a scratch-directory guard.
#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oodscope/gaussian.hpp"
#include "oodscope/linalg.hpp"

namespace testsupport {

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d,
                                     double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = u(rng);
    return m;
}

// Well-conditioned SPD matrix: Gram matrix of a fat random factor plus a
// floor on the spectrum.
inline oodscope::SymMatrix random_spd(std::mt19937_64& rng, Eigen::Index d) {
    Eigen::MatrixXd b = random_matrix(rng, d + 4, d);
    Eigen::MatrixXd a = b.transpose() * b / static_cast<double>(d + 4);
    a += 0.1 * Eigen::MatrixXd::Identity(d, d);
    return oodscope::SymMatrix(std::move(a));
}

// Labeled data with every class populated (labels cycle through 0..k-1) and
// enough spread that the pooled covariance factorizes at ridge 0.
inline oodscope::FeatureMatrix random_labeled(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d,
                                              int k) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd m(n, d);
    Eigen::VectorXi labels(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % k);
        labels[i] = c;
        for (Eigen::Index j = 0; j < d; ++j)
            m(i, j) = g(rng) + (j == 0 ? 2.0 * c : 0.0);
    }
    return oodscope::FeatureMatrix::with_labels(std::move(m), std::move(labels));
}

// Suite assembled directly from chosen parameters, bypassing the fit.
inline oodscope::GaussianSuite make_suite(Eigen::MatrixXd class_means, Eigen::MatrixXd shared_cov,
                                          Eigen::VectorXd background_mean,
                                          Eigen::MatrixXd background_cov,
                                          uint64_t fingerprint = 0) {
    using namespace oodscope;
    const int k = static_cast<int>(class_means.rows());
    SymMatrix shared(std::move(shared_cov));
    SymMatrix background(std::move(background_cov));
    SpdFactorization shared_factor = spd_factorize(shared, RidgePolicy::standard(), "shared");
    SpdFactorization background_factor =
        spd_factorize(background, RidgePolicy::standard(), "background");
    return GaussianSuite{std::move(class_means),
                         Eigen::VectorXi::Ones(k),
                         std::move(shared),
                         std::move(shared_factor),
                         std::move(background_mean),
                         std::move(background),
                         std::move(background_factor),
                         fingerprint};
}

// Fitted suite over random labeled data, for property tests.
inline oodscope::GaussianSuite random_suite(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d,
                                            int k) {
    return oodscope::build_suite(random_labeled(rng, n, d, k));
}

class TempDir {
public:
    TempDir() {
        const auto base = std::filesystem::temp_directory_path();
        std::mt19937_64 rng(std::random_device{}());
        for (int attempt = 0; attempt < 64; ++attempt) {
            auto candidate = base / ("oodscope_test_" + std::to_string(rng()));
            if (std::filesystem::create_directory(candidate)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("could not create scratch directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testsupport
