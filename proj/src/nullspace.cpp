#include "hpm/nullspace.hpp"

#include <algorithm>
#include <cmath>

#include "hpm/error.hpp"

namespace hpm {
namespace {

std::optional<double> group_mean(const std::vector<std::optional<double>>& values,
                                 const std::vector<int>& group) {
    double sum = 0.0;
    int n = 0;
    for (int c : group) {
        const auto& v = values[static_cast<std::size_t>(c)];
        if (v) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

void check_split(const GroupSplit& split, int k) {
    std::vector<int> all = split.head_classes;
    all.insert(all.end(), split.tail_classes.begin(), split.tail_classes.end());
    std::sort(all.begin(), all.end());
    bool ok = static_cast<int>(all.size()) == k;
    for (int i = 0; ok && i < k; ++i) ok = all[static_cast<std::size_t>(i)] == i;
    if (!ok) {
        throw ValidationError("group split must partition the " + std::to_string(k) + " classes");
    }
}

}  // namespace

Projectors projectors(const Matrix& weights) {
    if (!weights.allFinite()) {
        throw ValidationError("classifier weights must be finite");
    }
    const Index d = weights.cols();
    Projectors p;
    p.row = Matrix::Zero(d, d);
    if (weights.size() > 0) {
        Eigen::JacobiSVD<Matrix> svd(weights, Eigen::ComputeFullV);
        const auto& sigma = svd.singularValues();
        const double top = sigma.size() > 0 ? sigma(0) : 0.0;
        if (top > 0.0) {
            for (Index i = 0; i < sigma.size(); ++i) {
                if (sigma(i) > kPinvCutoff * top) ++p.rank_row;
            }
            const auto v = svd.matrixV().leftCols(p.rank_row);
            p.row = v * v.transpose();
        }
    }
    p.row = 0.5 * (p.row + p.row.transpose()).eval();
    p.null = Matrix::Identity(d, d) - p.row;
    return p;
}

Projectors projectors(const ClassifierHead& head) {
    validate_head(head);
    return projectors(head.weights);
}

double null_scatter_trace(const CovarianceEstimate& cov, const Projectors& proj) {
    return (proj.null * cov.matrix * proj.null).trace();
}

double null_scatter_residual(const FeatureBank& bank, int c, const Projectors& proj) {
    if (proj.null.rows() != bank.dim()) {
        throw ValidationError("projector dimension does not match bank");
    }
    const auto rows = class_row_indices(bank)[static_cast<std::size_t>(c)];
    if (rows.size() < 2) {
        throw ValidationError("insufficient class support: class " + std::to_string(c) + " has " +
                              std::to_string(rows.size()) + " sample(s), need at least 2");
    }
    Vector mean = Vector::Zero(bank.dim());
    for (Index r : rows) mean += bank.features.row(r).transpose();
    mean /= static_cast<double>(rows.size());
    double sum = 0.0;
    for (Index r : rows) {
        sum += (proj.null * (bank.features.row(r).transpose() - mean)).squaredNorm();
    }
    return sum / static_cast<double>(rows.size() - 1);
}

NullScatterReport null_scatter(const FeatureBank& bank, const Projectors& proj, const GroupSplit& split) {
    check_split(split, bank.num_classes);
    NullScatterReport report;
    report.split = split;
    report.counts = class_counts(bank);
    report.per_class.resize(static_cast<std::size_t>(bank.num_classes));
    for (int c = 0; c < bank.num_classes; ++c) {
        if (report.counts[static_cast<std::size_t>(c)] < 2) {
            report.skipped.push_back(c);
            continue;
        }
        const double residual_form = null_scatter_residual(bank, c, proj);
        const double trace_form = null_scatter_trace(class_covariance(bank, c, false), proj);
        const double scale = std::max({std::abs(residual_form), std::abs(trace_form), 1e-300});
        report.cross_check_max_rel =
            std::max(report.cross_check_max_rel, std::abs(residual_form - trace_form) / scale);
        report.per_class[static_cast<std::size_t>(c)] = residual_form;
    }
    if (static_cast<int>(report.skipped.size()) == bank.num_classes) {
        throw ValidationError("null scatter: every class has fewer than 2 samples");
    }
    report.head_avg = group_mean(report.per_class, split.head_classes);
    report.tail_avg = group_mean(report.per_class, split.tail_classes);
    return report;
}

RadiusProfile radius_profile(const FeatureBank& bank, const GroupSplit& split) {
    check_split(split, bank.num_classes);
    RadiusProfile profile;
    profile.split = split;
    profile.counts = class_counts(bank);
    std::vector<double> sums(static_cast<std::size_t>(bank.num_classes), 0.0);
    const auto rows = class_row_indices(bank);
    for (int c = 0; c < bank.num_classes; ++c) {
        for (Index r : rows[static_cast<std::size_t>(c)]) {
            sums[static_cast<std::size_t>(c)] += bank.features.row(r).norm();
        }
    }
    profile.per_class_mean_norm.resize(sums.size());
    for (std::size_t c = 0; c < sums.size(); ++c) {
        if (profile.counts[c] > 0) {
            profile.per_class_mean_norm[c] = sums[c] / static_cast<double>(profile.counts[c]);
        }
    }
    profile.head_mean = group_mean(profile.per_class_mean_norm, split.head_classes);
    profile.tail_mean = group_mean(profile.per_class_mean_norm, split.tail_classes);
    if (profile.head_mean && profile.tail_mean && *profile.head_mean > 0.0) {
        profile.tail_head_ratio = *profile.tail_mean / *profile.head_mean;
    }
    return profile;
}

}  // namespace hpm
