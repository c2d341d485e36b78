// Dense symmetric linear algebra kernel: covariance factorization with ridge
// escalation, symmetric eigendecomposition, and the solves/quadratic forms
// behind every scorer.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oodscope/common.hpp"

namespace oodscope {

/// Dense symmetric matrix. Symmetry is enforced at construction by averaging
/// (A + A^T)/2, so entries(i,j) == entries(j,i) holds exactly.
class SymMatrix {
public:
    explicit SymMatrix(Eigen::MatrixXd a) {
        if (a.rows() != a.cols())
            throw InputError("symmetric matrix must be square, got " + std::to_string(a.rows()) +
                             "x" + std::to_string(a.cols()));
        if (a.rows() < 1) throw InputError("symmetric matrix must have dim >= 1");
        if (!a.allFinite()) throw InputError("symmetric matrix has non-finite entries");
        m_ = 0.5 * (a + a.transpose());
    }

    [[nodiscard]] Eigen::Index dim() const { return m_.rows(); }
    [[nodiscard]] const Eigen::MatrixXd& mat() const { return m_; }

    [[nodiscard]] double trace() const { return m_.trace(); }

private:
    Eigen::MatrixXd m_;
};

/// Result of eigh(): eigenvalues sorted descending, eigenvector d in column d.
/// Sign convention: the first nonzero component of each eigenvector is
/// positive, so decompositions are reproducible and diffable.
struct EigenDecomposition {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;
};

inline EigenDecomposition eigh(const SymMatrix& a, std::string_view label = "matrix") {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a.mat());
    if (solver.info() != Eigen::Success)
        throw NumericalError("eigendecomposition of " + std::string(label) + " did not converge");

    const Eigen::Index d = a.dim();
    EigenDecomposition out;
    // Eigen returns ascending order; the toolkit convention is descending.
    out.eigenvalues = solver.eigenvalues().reverse();
    out.eigenvectors = solver.eigenvectors().rowwise().reverse();
    for (Eigen::Index c = 0; c < d; ++c) {
        for (Eigen::Index r = 0; r < d; ++r) {
            const double v = out.eigenvectors(r, c);
            if (v != 0.0) {
                if (v < 0.0) out.eigenvectors.col(c) = -out.eigenvectors.col(c);
                break;
            }
        }
    }
    return out;
}

/// Ridge schedule for covariance factorization. The standard policy tries
/// ridge 0, then 1e-9*trace(A)/D escalating by 10x up to 1e-3*trace(A)/D.
/// `none` tries only ridge 0 and lets indefinite inputs fail loudly.
struct RidgePolicy {
    bool escalate = true;

    static RidgePolicy standard() { return RidgePolicy{true}; }
    static RidgePolicy none() { return RidgePolicy{false}; }

    [[nodiscard]] std::vector<double> schedule(double trace, Eigen::Index dim) const {
        std::vector<double> s{0.0};
        const double scale = trace / static_cast<double>(dim);
        if (escalate && scale > 0.0) {
            for (double f = 1e-9; f <= 1e-3 * (1.0 + 1e-12); f *= 10.0) s.push_back(f * scale);
        }
        return s;
    }
};

/// Cholesky factor of A + ridge*I with the ridge that was actually applied.
/// diag(lower) is strictly positive; the strict upper triangle is zero.
struct SpdFactorization {
    Eigen::Index dim = 0;
    Eigen::MatrixXd lower;
    double ridge = 0.0;
};

namespace detail {

struct CholeskyAttempt {
    bool ok = false;
    double worst_pivot = 0.0;  // most negative pivot seen when !ok
    Eigen::MatrixXd lower;
};

// Unblocked Cholesky. A pivot <= 0 aborts the attempt; the caller decides
// whether to escalate the ridge.
inline CholeskyAttempt try_cholesky(const Eigen::MatrixXd& a, double ridge) {
    const Eigen::Index d = a.rows();
    CholeskyAttempt out;
    out.lower = Eigen::MatrixXd::Zero(d, d);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
        double pivot = a(j, j) + ridge;
        if (j > 0) pivot -= out.lower.row(j).head(j).squaredNorm();
        if (!(pivot > 0.0)) {
            worst = std::min(worst, pivot);
            out.worst_pivot = worst;
            return out;
        }
        const double ljj = std::sqrt(pivot);
        out.lower(j, j) = ljj;
        for (Eigen::Index i = j + 1; i < d; ++i) {
            double v = a(i, j);
            if (j > 0) v -= out.lower.row(i).head(j).dot(out.lower.row(j).head(j));
            out.lower(i, j) = v / ljj;
        }
    }
    out.ok = true;
    return out;
}

}  // namespace detail

/// Factorize A + ridge*I for a fixed, known ridge (used when reloading a
/// persisted model; no schedule is consulted).
inline SpdFactorization factorize_with_ridge(const SymMatrix& a, double ridge,
                                             std::string_view label = "matrix") {
    auto attempt = detail::try_cholesky(a.mat(), ridge);
    if (!attempt.ok)
        throw NumericalError(std::string(label) + " is not positive definite at ridge " +
                             format_double(ridge) + " (most negative pivot " +
                             format_double(attempt.worst_pivot) + ")");
    return SpdFactorization{a.dim(), std::move(attempt.lower), ridge};
}

/// Factorize A + ridge*I using the smallest ridge from the policy schedule
/// that yields strictly positive pivots. Records the applied ridge.
inline SpdFactorization spd_factorize(const SymMatrix& a,
                                      const RidgePolicy& policy = RidgePolicy::standard(),
                                      std::string_view label = "matrix") {
    const auto schedule = policy.schedule(a.trace(), a.dim());
    double last_worst = 0.0;
    for (double ridge : schedule) {
        auto attempt = detail::try_cholesky(a.mat(), ridge);
        if (attempt.ok) return SpdFactorization{a.dim(), std::move(attempt.lower), ridge};
        last_worst = attempt.worst_pivot;
    }
    throw NumericalError("ridge schedule exhausted for " + std::string(label) +
                         ": matrix is indefinite beyond repair (most negative pivot " +
                         format_double(last_worst) + " at ridge " +
                         format_double(schedule.back()) + ")");
}

/// Solve (A + ridge*I) x = b through the factor.
inline Eigen::VectorXd solve_spd(const SpdFactorization& f, const Eigen::VectorXd& b) {
    if (b.size() != f.dim)
        throw InputError("solve_spd: vector length " + std::to_string(b.size()) +
                         " does not match factor dim " + std::to_string(f.dim));
    Eigen::VectorXd x = f.lower.triangularView<Eigen::Lower>().solve(b);
    f.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
}

/// v^T (A + ridge*I)^-1 v, evaluated as ||L^-1 v||^2 via one triangular
/// solve. Non-negative by construction.
inline double quad_form(const SpdFactorization& f, const Eigen::VectorXd& v) {
    if (v.size() != f.dim)
        throw InputError("quad_form: vector length " + std::to_string(v.size()) +
                         " does not match factor dim " + std::to_string(f.dim));
    return f.lower.triangularView<Eigen::Lower>().solve(v).squaredNorm();
}

/// Batched quad_form: one quadratic form per row of `rows`.
inline Eigen::VectorXd quad_form_rows(const SpdFactorization& f, const Eigen::MatrixXd& rows) {
    if (rows.cols() != f.dim)
        throw InputError("quad_form_rows: row length " + std::to_string(rows.cols()) +
                         " does not match factor dim " + std::to_string(f.dim));
    Eigen::MatrixXd y = f.lower.triangularView<Eigen::Lower>().solve(rows.transpose());
    return y.colwise().squaredNorm().transpose();
}

}  // namespace oodscope
