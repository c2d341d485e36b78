#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oodscope/eigen_analysis.hpp"
#include "support.hpp"

using namespace oodscope;
using testsupport::make_suite;
using testsupport::random_matrix;
using testsupport::random_suite;

TEST_CASE("md decomposition on the diagonal hand case") {
    Eigen::MatrixXd cov(2, 2);
    cov << 4.0, 0.0, 0.0, 1.0;
    const GaussianSuite suite = make_suite(Eigen::MatrixXd::Zero(1, 2), cov,
                                           Eigen::VectorXd::Zero(2), cov);
    Eigen::MatrixXd test(2, 2);
    test << 2.0, 2.0, 0.0, 0.0;
    const Eigen::MatrixXd contrib = decompose_md(suite, FeatureMatrix::unlabeled(test));

    // Descending eigenvalues put the lambda=4 axis first.
    CHECK(contrib(0, 0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(contrib(0, 1) == Catch::Approx(4.0).margin(1e-12));
    CHECK(contrib.row(0).sum() == Catch::Approx(5.0).margin(1e-12));
    CHECK(contrib(1, 0) == 0.0);
    CHECK(contrib(1, 1) == 0.0);
}

TEST_CASE("md contributions sum to the arg-min distance") {
    std::mt19937_64 rng(61);
    const Eigen::Index d = 8;
    const GaussianSuite suite = random_suite(rng, 96, d, 3);
    const FeatureMatrix test = FeatureMatrix::unlabeled(random_matrix(rng, 25, d, -3.0, 3.0));

    const Eigen::MatrixXd contrib = decompose_md(suite, test);
    const Eigen::VectorXd md = -score_md(suite, test).scores;
    for (Eigen::Index i = 0; i < test.n(); ++i)
        CHECK(contrib.row(i).sum() == Catch::Approx(md[i]).epsilon(1e-9));
}

TEST_CASE("rmd decomposition against a scalar recomputation") {
    std::mt19937_64 rng(62);
    const Eigen::Index d = 6;
    const GaussianSuite suite = random_suite(rng, 90, d, 2);
    const FeatureMatrix test = FeatureMatrix::unlabeled(random_matrix(rng, 8, d, -3.0, 3.0));

    const EigenAxes axes = make_axes(suite);
    const Eigen::MatrixXd contrib = decompose_rmd(suite, test, axes);
    const Eigen::MatrixXd md = md_matrix(suite, test);

    Eigen::MatrixXd shared_r = suite.shared_cov.mat();
    shared_r.diagonal().array() += suite.shared_factor.ridge;
    Eigen::MatrixXd background_r = suite.background_cov.mat();
    background_r.diagonal().array() += suite.background_factor.ridge;

    for (Eigen::Index i = 0; i < test.n(); ++i) {
        Eigen::Index kstar = 0;
        md.row(i).minCoeff(&kstar);
        const Eigen::VectorXd z = test.data().row(i).transpose();
        for (Eigen::Index dd = 0; dd < d; ++dd) {
            const Eigen::VectorXd v = axes.basis.col(dd);
            const double l = v.dot(z - suite.class_means.row(kstar).transpose());
            const double m = v.dot(z - suite.background_mean);
            const double fg = v.dot(shared_r * v);
            const double bg = v.dot(background_r * v);
            const double expected = l * l / fg - m * m / bg;
            CHECK(contrib(i, dd) == Catch::Approx(expected).margin(1e-9));
        }
    }
}

TEST_CASE("single-class rmd decomposition vanishes exactly") {
    std::mt19937_64 rng(63);
    Eigen::MatrixXd m = random_matrix(rng, 50, 5, -2.0, 2.0);
    const GaussianSuite suite =
        build_suite(FeatureMatrix::with_labels(m, Eigen::VectorXi::Zero(50)));
    const FeatureMatrix test = FeatureMatrix::unlabeled(random_matrix(rng, 20, 5, -8.0, 8.0));
    const Eigen::MatrixXd contrib = decompose_rmd(suite, test);
    CHECK(contrib.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("axes are orthonormal with positive variances on both sides") {
    std::mt19937_64 rng(64);
    const GaussianSuite suite = random_suite(rng, 80, 7, 2);
    const EigenAxes axes = make_axes(suite);
    const Eigen::MatrixXd gram = axes.basis.transpose() * axes.basis;
    CHECK((gram - Eigen::MatrixXd::Identity(7, 7)).cwiseAbs().maxCoeff() <= 1e-8);
    for (Eigen::Index d = 0; d < 7; ++d) {
        CHECK(axes.fg_var[d] > 0.0);
        CHECK(axes.bg_var[d] > 0.0);
    }
}

// Population-level version of the synthetic study, with exact parameters:
// isotropic within-class covariance and a background inflated only along the
// class-mean axis. The relative contributions must vanish in every other
// dimension, so the IND/OOD gap concentrates where the classes differ.
TEST_CASE("relative contributions concentrate on the discriminative axis") {
    const Eigen::Index d = 6;
    const double s2 = 0.0625;  // sigma = 0.25
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(2, d);
    means(0, 0) = -1.0;
    means(1, 0) = 1.0;
    Eigen::MatrixXd shared = s2 * Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd background = shared;
    background(0, 0) += 1.0;  // between-class variance of the +-1 means
    const GaussianSuite suite =
        make_suite(means, shared, Eigen::VectorXd::Zero(d), background);
    REQUIRE(suite.shared_factor.ridge == 0.0);
    REQUIRE(suite.background_factor.ridge == 0.0);

    const EigenAxes axes = make_axes(suite);
    Eigen::Index axis = -1;
    for (Eigen::Index c = 0; c < d; ++c)
        if (axes.basis(0, c) == 1.0) axis = c;
    REQUIRE(axis >= 0);  // the first coordinate is an exact eigenvector here

    std::mt19937_64 rng(65);
    Eigen::MatrixXd ood = random_matrix(rng, 12, d, -0.5, 0.5);
    ood.col(0).array() += 3.0;
    const Eigen::MatrixXd contrib = decompose_rmd(suite, FeatureMatrix::unlabeled(ood), axes);
    for (Eigen::Index i = 0; i < contrib.rows(); ++i) {
        for (Eigen::Index c = 0; c < d; ++c) {
            if (c == axis)
                CHECK(contrib(i, c) > 10.0);
            else
                CHECK(contrib(i, c) == 0.0);
        }
    }
}

TEST_CASE("summary quantiles use linear interpolation") {
    const Eigen::Index d = 2;
    Eigen::MatrixXd md_ind(10, d);
    for (Eigen::Index i = 0; i < 10; ++i) {
        md_ind(i, 0) = static_cast<double>(9 - i);  // 9..0, order must not matter
        md_ind(i, 1) = 5.0;
    }
    const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(10, d);
    const EigenReport r = summarize(md_ind, md_ind, zeros, zeros, Eigen::VectorXd::Ones(d));

    CHECK(r.per_dim[0].ind_md_mean == Catch::Approx(4.5).margin(1e-12));
    CHECK(r.per_dim[0].ind_md_q10 == Catch::Approx(0.9).margin(1e-12));
    CHECK(r.per_dim[0].ind_md_q90 == Catch::Approx(8.1).margin(1e-12));
    CHECK(r.per_dim[0].ind_md_q10 <= r.per_dim[0].ind_md_q90);
    CHECK(r.per_dim[1].ind_md_q10 == 5.0);
}

TEST_CASE("identical test sets suggest a split at the first dimension") {
    std::mt19937_64 rng(66);
    const Eigen::MatrixXd contrib = random_matrix(rng, 20, 5, 0.0, 4.0);
    const EigenReport r = summarize(contrib, contrib, contrib, contrib, Eigen::VectorXd::Ones(5));
    CHECK(r.suggested_split == 1);
    for (const auto& s : r.per_dim) CHECK(s.ood_md_mean == s.ind_md_mean);
}

TEST_CASE("split lands after the last dimension carrying a gap") {
    const Eigen::Index d = 4;
    Eigen::MatrixXd ind = Eigen::MatrixXd::Zero(2, d);
    Eigen::MatrixXd ood = Eigen::MatrixXd::Zero(2, d);
    ood.col(0).setConstant(10.0);  // the whole gap sits in dimension 1
    const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(2, d);
    CHECK(summarize(ind, ood, zeros, zeros, Eigen::VectorXd::Ones(d)).suggested_split == 2);

    Eigen::MatrixXd rising = Eigen::MatrixXd::Zero(2, d);
    for (Eigen::Index c = 0; c < d; ++c) rising.col(c).setConstant(static_cast<double>(c + 1));
    CHECK(summarize(ind, rising, zeros, zeros, Eigen::VectorXd::Ones(d)).suggested_split ==
          static_cast<int>(d) + 1);
}

TEST_CASE("summarize validates shapes") {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 4);
    const Eigen::MatrixXd b = Eigen::MatrixXd::Zero(3, 5);
    CHECK_THROWS_AS(summarize(a, b, a, a, Eigen::VectorXd::Ones(4)), InputError);
    CHECK_THROWS_AS(summarize(Eigen::MatrixXd(0, 4), a, Eigen::MatrixXd(0, 4), a,
                              Eigen::VectorXd::Ones(4)),
                    InputError);
}

TEST_CASE("reordering samples permutes decomposition rows") {
    std::mt19937_64 rng(67);
    const GaussianSuite suite = random_suite(rng, 60, 4, 2);
    const Eigen::MatrixXd test = random_matrix(rng, 9, 4, -3.0, 3.0);
    Eigen::MatrixXd reversed(9, 4);
    for (Eigen::Index i = 0; i < 9; ++i) reversed.row(i) = test.row(8 - i);

    const EigenAxes axes = make_axes(suite);
    const Eigen::MatrixXd a = decompose_md(suite, FeatureMatrix::unlabeled(test), axes);
    const Eigen::MatrixXd b = decompose_md(suite, FeatureMatrix::unlabeled(reversed), axes);
    for (Eigen::Index i = 0; i < 9; ++i)
        CHECK((a.row(i) - b.row(8 - i)).cwiseAbs().maxCoeff() == 0.0);
}
