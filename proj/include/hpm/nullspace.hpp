#pragma once

// Classifier row/null projectors, absolute classifier-null scatter and the
// per-class feature-radius profile.

#include <cstdint>
#include <optional>
#include <vector>

#include "hpm/bank.hpp"
#include "hpm/geometry.hpp"

namespace hpm {

struct Projectors {
    Matrix row;   // W^T (W W^T)^+ W
    Matrix null;  // I - row
    int rank_row = 0;
};

// Singular values at or below this fraction of sigma_max are treated as zero.
inline constexpr double kPinvCutoff = 1e-10;

Projectors projectors(const Matrix& weights);
Projectors projectors(const ClassifierHead& head);

// Tr(P_null Sigma P_null) on a precomputed class covariance.
double null_scatter_trace(const CovarianceEstimate& cov, const Projectors& proj);

// 1/(n_c - 1) sum_i ||P_null (h_i - mu_c)||^2 straight from the samples.
double null_scatter_residual(const FeatureBank& bank, int c, const Projectors& proj);

struct NullScatterReport {
    std::vector<std::optional<double>> per_class;  // empty for skipped classes
    std::vector<std::int64_t> counts;
    std::optional<double> head_avg;
    std::optional<double> tail_avg;
    GroupSplit split;
    std::vector<int> skipped;  // classes with n_c < 2
    double cross_check_max_rel = 0.0;  // worst disagreement between the two forms
};

// Values come from the residual form; the trace form is evaluated alongside
// and the largest relative disagreement is recorded.
NullScatterReport null_scatter(const FeatureBank& bank, const Projectors& proj, const GroupSplit& split);

struct RadiusProfile {
    std::vector<std::optional<double>> per_class_mean_norm;  // empty for classes without samples
    std::vector<std::int64_t> counts;
    std::optional<double> head_mean;
    std::optional<double> tail_mean;
    std::optional<double> tail_head_ratio;
    GroupSplit split;
};

RadiusProfile radius_profile(const FeatureBank& bank, const GroupSplit& split);

}  // namespace hpm
