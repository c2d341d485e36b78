// Synthetic failure-mode study: classes that differ only in dimension 1 of a
// D-dimensional isotropic Gaussian. Distance to the nearest class mean
// degrades as nuisance dimensions accumulate; the background-relative score
// does not. The generator is pinned (mt19937_64 driving an inverse-CDF
// normal) so fixed seeds reproduce bitwise across platforms.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "oodscope/common.hpp"
#include "oodscope/eigen_analysis.hpp"
#include "oodscope/gaussian.hpp"
#include "oodscope/linalg.hpp"
#include "oodscope/metrics.hpp"

namespace oodscope {

inline constexpr const char* kRngAlgorithm = "mt19937_64/icdf-as241";

/// Inverse standard normal CDF, Wichura's algorithm AS 241 (PPND16 variant,
/// accurate to ~1e-16 over (0,1)).
inline double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw InputError("inverse_normal_cdf: p must lie strictly in (0,1), got " +
                         format_double(p));
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                  6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
              1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
        const double den =
            (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                  3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
              4.2313330701600911252e+1) * r + 1.0);
        return q * num / den;
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
        x = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
        x = num / den;
    }
    return q < 0.0 ? -x : x;
}

/// Standard-normal stream over a fixed 64-bit Mersenne twister. The uniform
/// mapping ((x >> 11) + 0.5) * 2^-53 never hits 0 or 1 exactly.
class NormalSampler {
public:
    explicit NormalSampler(uint64_t seed) : rng_(seed) {}

    double next_uniform() {
        const uint64_t x = rng_();
        return (static_cast<double>(x >> 11) + 0.5) * 0x1p-53;
    }

    double next_normal() { return inverse_normal_cdf(next_uniform()); }

private:
    std::mt19937_64 rng_;
};

/// Study configuration. Each class c draws from N([mean_c, 0, ..., 0],
/// sigma^2 I); only dimension 1 separates anything.
struct SimConfig {
    int dim = 1024;
    double sigma = 0.25;
    std::vector<double> ind_means = {-1.0, 1.0};
    std::vector<double> ood_means = {-3.0, 3.0};
    int n_train_per_class = 10000;
    int n_test_per_class = 100;
    uint64_t seed = 42;

    void validate() const {
        if (dim < 2) throw InputError("sim config: dim must be >= 2, got " + std::to_string(dim));
        if (!(sigma > 0.0))
            throw InputError("sim config: sigma must be > 0, got " + format_double(sigma));
        if (n_train_per_class < 1)
            throw InputError("sim config: n_train_per_class must be >= 1");
        if (n_test_per_class < 1) throw InputError("sim config: n_test_per_class must be >= 1");
        if (ind_means.empty()) throw InputError("sim config: ind_means must be nonempty");
        if (ood_means.empty()) throw InputError("sim config: ood_means must be nonempty");
        for (double m : ind_means)
            if (!std::isfinite(m)) throw InputError("sim config: non-finite ind mean");
        for (double m : ood_means)
            if (!std::isfinite(m)) throw InputError("sim config: non-finite ood mean");
    }
};

struct SimData {
    FeatureMatrix train;
    FeatureMatrix ind_test;
    FeatureMatrix ood_test;
};

namespace detail {

// Rows are filled sequentially from one stream: entry (i, j) consumes the
// (i*D+j)-th normal of its block. Keep this order fixed; seeds are contracts.
inline Eigen::MatrixXd sample_block(NormalSampler& sampler, const std::vector<double>& dim1_means,
                                    int rows_per_mean, int dim, double sigma) {
    const Eigen::Index n =
        static_cast<Eigen::Index>(dim1_means.size()) * static_cast<Eigen::Index>(rows_per_mean);
    Eigen::MatrixXd out(n, dim);
    Eigen::Index row = 0;
    for (double mean : dim1_means) {
        for (int i = 0; i < rows_per_mean; ++i, ++row) {
            out(row, 0) = mean + sigma * sampler.next_normal();
            for (int j = 1; j < dim; ++j) out(row, j) = sigma * sampler.next_normal();
        }
    }
    return out;
}

}  // namespace detail

inline SimData generate(const SimConfig& config) {
    config.validate();
    NormalSampler sampler(config.seed);

    Eigen::MatrixXd train = detail::sample_block(sampler, config.ind_means,
                                                 config.n_train_per_class, config.dim,
                                                 config.sigma);
    Eigen::VectorXi labels(train.rows());
    Eigen::Index row = 0;
    for (int c = 0; c < static_cast<int>(config.ind_means.size()); ++c)
        for (int i = 0; i < config.n_train_per_class; ++i, ++row) labels[row] = c;

    Eigen::MatrixXd ind_test = detail::sample_block(sampler, config.ind_means,
                                                    config.n_test_per_class, config.dim,
                                                    config.sigma);
    Eigen::MatrixXd ood_test = detail::sample_block(sampler, config.ood_means,
                                                    config.n_test_per_class, config.dim,
                                                    config.sigma);

    return SimData{FeatureMatrix::with_labels(std::move(train), std::move(labels)),
                   FeatureMatrix::unlabeled(std::move(ind_test)),
                   FeatureMatrix::unlabeled(std::move(ood_test))};
}

struct StudyOptions {
    RidgePolicy policy = RidgePolicy::standard();
    bool with_eigen_report = true;
};

struct StudyReport {
    SimConfig config;
    std::string rng_algorithm = kRngAlgorithm;
    uint64_t model_fingerprint = 0;
    double shared_ridge = 0.0;
    double background_ridge = 0.0;
    EvalReport md_eval;
    EvalReport rmd_eval;
    std::optional<EigenReport> eigen_report;

    [[nodiscard]] double auroc_md() const { return md_eval.auroc; }
    [[nodiscard]] double auroc_rmd() const { return rmd_eval.auroc; }
};

/// Full pipeline on one seed: generate, fit, evaluate MD and RMD, and
/// (optionally) the per-dimension diagnostic report.
inline StudyReport run_study(const SimConfig& config, const StudyOptions& options = {}) {
    const SimData data = generate(config);
    const GaussianSuite suite = build_suite(data.train, options.policy);

    StudyReport report;
    report.config = config;
    report.model_fingerprint = suite.fingerprint;
    report.shared_ridge = suite.shared_factor.ridge;
    report.background_ridge = suite.background_factor.ridge;
    report.md_eval = evaluate(suite, data.ind_test, data.ood_test, ScorerSpec{ScorerId::md, {}});
    report.rmd_eval = evaluate(suite, data.ind_test, data.ood_test, ScorerSpec{ScorerId::rmd, {}});
    if (options.with_eigen_report)
        report.eigen_report = analyze(suite, data.ind_test, data.ood_test);
    return report;
}

}  // namespace oodscope
