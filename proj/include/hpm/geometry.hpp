#pragma once

// Hyperspherical projection, class/pooled covariance estimation, ridge
// regularization, Cholesky precision factors and spectrum diagnostics.
//
// Every estimator visits the rows of a class in a canonical order (rows
// sorted lexicographically by feature value), so results are bit-identical
// under any permutation of the bank.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hpm/bank.hpp"

namespace hpm {

inline constexpr double kNormEpsilon = 1e-12;

// h / ||h||_2. Throws ValidationError("degenerate feature") when ||h|| <= eps.
Vector project_sphere(const Eigen::Ref<const Vector>& h, double eps = kNormEpsilon);

// Row-wise project_sphere; the error message names the offending row.
Matrix project_rows(const Matrix& rows, double eps = kNormEpsilon);

// Row indices of each class in canonical order.
std::vector<std::vector<Index>> class_row_indices(const FeatureBank& bank);

struct ClassStats {
    Matrix means;  // K x d
    std::vector<std::int64_t> counts;
    bool normalized = false;
};

ClassStats class_means(const FeatureBank& bank, bool normalized);

enum class CovarianceKind { class_specific, pooled };

struct CovarianceEstimate {
    Matrix matrix;  // d x d, symmetric
    CovarianceKind kind = CovarianceKind::pooled;
    int class_id = -1;  // -1 for pooled
    double dof = 0.0;   // n_c - 1 or N - K
    double ridge = 0.0; // lambda already added to the diagonal
    bool normalized = false;
};

// Unbiased covariance of class c; requires n_c >= 2.
CovarianceEstimate class_covariance(const FeatureBank& bank, int c, bool normalized);

// Sum of within-class residual outer products over all classes, divided by
// N - K. Coordinates follow `means.normalized`. Requires N > K.
CovarianceEstimate pooled_covariance(const FeatureBank& bank, const ClassStats& means);

enum class RidgeMode { relative, absolute };

// Relative mode: lambda = value * trace / d, or value itself when the trace
// is zero. Absolute mode: lambda = value.
double ridge_lambda(const CovarianceEstimate& cov, double value, RidgeMode mode = RidgeMode::relative);

CovarianceEstimate ridge(const CovarianceEstimate& cov, double lambda_rel);
CovarianceEstimate ridge(const CovarianceEstimate& cov, double value, RidgeMode mode);

struct PrecisionFactor {
    Matrix lower;  // L with L L^T = Sigma + lambda I
    double lambda = 0.0;

    Index dim() const { return lower.rows(); }
};

// Cholesky factor. Throws ValidationError("factorization failed; increase ridge")
// when the matrix is not numerically positive definite.
PrecisionFactor factorize(const CovarianceEstimate& cov);
PrecisionFactor factorize(const Matrix& spd, double lambda = 0.0);

// (x - mu)^T (L L^T)^{-1} (x - mu), via one forward substitution.
double quadform(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& mu,
                const PrecisionFactor& precision);

struct SpectrumDiagnostics {
    Vector eigenvalues;          // descending, clipped at 0
    double effective_rank = 1.0; // exp of the entropy of normalized eigenvalues
    double log_condition = 0.0;  // natural log of max / min eigenvalue above floor
};

inline constexpr double kSpectrumFloor = 1e-12;  // relative to the top eigenvalue

SpectrumDiagnostics spectrum(const Matrix& symmetric);
SpectrumDiagnostics spectrum(const CovarianceEstimate& cov);

}  // namespace hpm
