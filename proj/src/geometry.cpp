#include "hpm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hpm/error.hpp"

namespace hpm {
namespace {

// Residuals of one class in its requested coordinates, rows in the given order.
Matrix class_residuals(const FeatureBank& bank, const std::vector<Index>& rows, bool normalized,
                       const Eigen::Ref<const Vector>& mean) {
    Matrix r(static_cast<Index>(rows.size()), bank.dim());
    for (Index i = 0; i < r.rows(); ++i) {
        const Index row = rows[static_cast<std::size_t>(i)];
        if (normalized) {
            r.row(i) = project_sphere(bank.features.row(row).transpose()).transpose();
        } else {
            r.row(i) = bank.features.row(row);
        }
        r.row(i) -= mean.transpose();
    }
    return r;
}

Vector class_mean(const FeatureBank& bank, const std::vector<Index>& rows, bool normalized) {
    Vector sum = Vector::Zero(bank.dim());
    for (Index row : rows) {
        if (normalized) {
            sum += project_sphere(bank.features.row(row).transpose());
        } else {
            sum += bank.features.row(row).transpose();
        }
    }
    return sum / static_cast<double>(rows.size());
}

void symmetrize(Matrix& m) {
    m = 0.5 * (m + m.transpose()).eval();
}

}  // namespace

Vector project_sphere(const Eigen::Ref<const Vector>& h, double eps) {
    const double norm = h.norm();
    if (!(norm > eps)) {
        throw ValidationError("degenerate feature: norm " + std::to_string(norm) +
                              " is not above " + std::to_string(eps));
    }
    return h / norm;
}

Matrix project_rows(const Matrix& rows, double eps) {
    Matrix out(rows.rows(), rows.cols());
    for (Index i = 0; i < rows.rows(); ++i) {
        try {
            out.row(i) = project_sphere(rows.row(i).transpose(), eps).transpose();
        } catch (const ValidationError& e) {
            throw ValidationError("row " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

std::vector<std::vector<Index>> class_row_indices(const FeatureBank& bank) {
    std::vector<std::vector<Index>> rows(static_cast<std::size_t>(bank.num_classes));
    for (Index i = 0; i < bank.size(); ++i) {
        rows[static_cast<std::size_t>(bank.labels[static_cast<std::size_t>(i)])].push_back(i);
    }
    const Matrix& f = bank.features;
    for (auto& idx : rows) {
        std::sort(idx.begin(), idx.end(), [&f](Index a, Index b) {
            for (Index j = 0; j < f.cols(); ++j) {
                if (f(a, j) != f(b, j)) return f(a, j) < f(b, j);
            }
            return false;
        });
    }
    return rows;
}

ClassStats class_means(const FeatureBank& bank, bool normalized) {
    const auto rows = class_row_indices(bank);
    ClassStats stats;
    stats.normalized = normalized;
    stats.means.resize(bank.num_classes, bank.dim());
    stats.counts.resize(rows.size());
    for (std::size_t c = 0; c < rows.size(); ++c) {
        if (rows[c].empty()) {
            throw ValidationError("empty class " + std::to_string(c) + ": no samples to form a mean");
        }
        stats.counts[c] = static_cast<std::int64_t>(rows[c].size());
        try {
            stats.means.row(static_cast<Index>(c)) = class_mean(bank, rows[c], normalized).transpose();
        } catch (const ValidationError& e) {
            throw ValidationError("class " + std::to_string(c) + ": " + e.what());
        }
    }
    return stats;
}

CovarianceEstimate class_covariance(const FeatureBank& bank, int c, bool normalized) {
    if (c < 0 || c >= bank.num_classes) {
        throw ValidationError("class id " + std::to_string(c) + " out of range");
    }
    const auto rows = class_row_indices(bank)[static_cast<std::size_t>(c)];
    if (rows.size() < 2) {
        throw ValidationError("insufficient class support: class " + std::to_string(c) + " has " +
                              std::to_string(rows.size()) + " sample(s), need at least 2");
    }
    const Vector mean = class_mean(bank, rows, normalized);
    const Matrix r = class_residuals(bank, rows, normalized, mean);

    CovarianceEstimate cov;
    cov.kind = CovarianceKind::class_specific;
    cov.class_id = c;
    cov.normalized = normalized;
    cov.dof = static_cast<double>(rows.size() - 1);
    cov.matrix = (r.transpose() * r) / cov.dof;
    symmetrize(cov.matrix);
    return cov;
}

CovarianceEstimate pooled_covariance(const FeatureBank& bank, const ClassStats& means) {
    const Index n = bank.size();
    const Index k = bank.num_classes;
    if (n <= k) {
        throw ValidationError("pooled covariance needs N > K (N=" + std::to_string(n) +
                              ", K=" + std::to_string(k) + ")");
    }
    if (means.means.rows() != k || means.means.cols() != bank.dim()) {
        throw ValidationError("class statistics do not match bank shape");
    }
    const auto rows = class_row_indices(bank);
    Matrix stacked(n, bank.dim());
    Index offset = 0;
    for (std::size_t c = 0; c < rows.size(); ++c) {
        if (rows[c].empty()) continue;
        const Matrix r =
            class_residuals(bank, rows[c], means.normalized, means.means.row(static_cast<Index>(c)).transpose());
        stacked.middleRows(offset, r.rows()) = r;
        offset += r.rows();
    }

    CovarianceEstimate cov;
    cov.kind = CovarianceKind::pooled;
    cov.normalized = means.normalized;
    cov.dof = static_cast<double>(n - k);
    cov.matrix = (stacked.transpose() * stacked) / cov.dof;
    symmetrize(cov.matrix);
    return cov;
}

double ridge_lambda(const CovarianceEstimate& cov, double value, RidgeMode mode) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw ValidationError("ridge value must be positive and finite");
    }
    if (mode == RidgeMode::absolute) {
        return value;
    }
    const double trace = cov.matrix.trace();
    const auto d = static_cast<double>(cov.matrix.rows());
    return trace > 0.0 ? value * trace / d : value;
}

CovarianceEstimate ridge(const CovarianceEstimate& cov, double value, RidgeMode mode) {
    const double lambda = ridge_lambda(cov, value, mode);
    CovarianceEstimate out = cov;
    out.matrix.diagonal().array() += lambda;
    out.ridge = cov.ridge + lambda;
    return out;
}

CovarianceEstimate ridge(const CovarianceEstimate& cov, double lambda_rel) {
    return ridge(cov, lambda_rel, RidgeMode::relative);
}

PrecisionFactor factorize(const Matrix& spd, double lambda) {
    if (spd.rows() != spd.cols() || spd.rows() == 0) {
        throw ValidationError("factorization needs a non-empty square matrix");
    }
    Eigen::LLT<Matrix> llt(spd);
    if (llt.info() != Eigen::Success) {
        throw ValidationError("factorization failed; increase ridge");
    }
    PrecisionFactor p;
    p.lower = llt.matrixL();
    p.lambda = lambda;
    if (!p.lower.allFinite() || (p.lower.diagonal().array() <= 0.0).any()) {
        throw ValidationError("factorization failed; increase ridge");
    }
    return p;
}

PrecisionFactor factorize(const CovarianceEstimate& cov) {
    return factorize(cov.matrix, cov.ridge);
}

double quadform(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& mu,
                const PrecisionFactor& precision) {
    if (x.size() != precision.dim() || mu.size() != precision.dim()) {
        throw ValidationError("dimension mismatch in quadratic form");
    }
    const Vector y = precision.lower.triangularView<Eigen::Lower>().solve(x - mu);
    return y.squaredNorm();
}

SpectrumDiagnostics spectrum(const Matrix& symmetric) {
    if (symmetric.rows() != symmetric.cols()) {
        throw ValidationError("spectrum needs a square matrix");
    }
    const Matrix sym = 0.5 * (symmetric + symmetric.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw ValidationError("eigen decomposition failed");
    }
    SpectrumDiagnostics out;
    out.eigenvalues = solver.eigenvalues().reverse().cwiseMax(0.0);

    const double top = out.eigenvalues.size() > 0 ? out.eigenvalues(0) : 0.0;
    if (!(top > 0.0)) {
        out.effective_rank = 1.0;
        out.log_condition = 0.0;
        return out;
    }
    const double floor = kSpectrumFloor * top;
    double total = 0.0;
    double smallest = top;
    for (double v : out.eigenvalues) {
        if (v > floor) {
            total += v;
            smallest = std::min(smallest, v);
        }
    }
    double entropy = 0.0;
    for (double v : out.eigenvalues) {
        if (v > floor) {
            const double p = v / total;
            entropy -= p * std::log(p);
        }
    }
    out.effective_rank = std::clamp(std::exp(entropy), 1.0, static_cast<double>(out.eigenvalues.size()));
    out.log_condition = std::log(top / smallest);
    return out;
}

SpectrumDiagnostics spectrum(const CovarianceEstimate& cov) {
    return spectrum(cov.matrix);
}

}  // namespace hpm
