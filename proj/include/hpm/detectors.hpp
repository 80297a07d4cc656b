#pragma once

// OOD detectors sharing one orientation: larger score = more OOD-like.
//
//   name    feature          covariance
//   md      raw              class-specific
//   rp-md   raw              pooled
//   hc-md   hyperspherical   class-specific
//   hpm     hyperspherical   pooled
//
// plus the classifier scores energy and msp (negated max softmax).

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hpm/bank.hpp"
#include "hpm/geometry.hpp"

namespace hpm {

enum class FeatureSpace { raw, hyperspherical };

struct Variant {
    FeatureSpace feature = FeatureSpace::hyperspherical;
    CovarianceKind covariance = CovarianceKind::pooled;

    static constexpr Variant mahalanobis() { return {FeatureSpace::raw, CovarianceKind::class_specific}; }
    static constexpr Variant rp_md() { return {FeatureSpace::raw, CovarianceKind::pooled}; }
    static constexpr Variant hc_md() { return {FeatureSpace::hyperspherical, CovarianceKind::class_specific}; }
    static constexpr Variant hpm() { return {FeatureSpace::hyperspherical, CovarianceKind::pooled}; }

    bool normalized() const { return feature == FeatureSpace::hyperspherical; }
    bool pooled() const { return covariance == CovarianceKind::pooled; }

    // Short detector name: "md", "rp-md", "hc-md" or "hpm".
    std::string name() const;
    // Display label used in reports: "Mahalanobis", "RP-MD", "HC-MD", "HPM".
    std::string label() const;
    static std::optional<Variant> parse(std::string_view name);

    friend bool operator==(const Variant&, const Variant&) = default;
};

struct RidgeSetting {
    double value = 1e-3;
    RidgeMode mode = RidgeMode::relative;
};

// Fitted state of a Mahalanobis-family detector. Immutable after fit.
struct MetricModel {
    Variant variant;
    Matrix anchors;  // K x d, class means in the variant's coordinates
    std::vector<PrecisionFactor> precisions;  // 1 (pooled) or K (class-specific)
    RidgeSetting ridge;
    Index dim = 0;
    int num_classes = 0;

    const PrecisionFactor& precision_for(int c) const {
        return variant.pooled() ? precisions.front() : precisions[static_cast<std::size_t>(c)];
    }
};

MetricModel fit_metric(const FeatureBank& bank, Variant variant, RidgeSetting ridge = {});

// min_c (x - mu_c)^T Sigma_c^{-1} (x - mu_c) with x = h or h / ||h||.
double score(const MetricModel& model, const Eigen::Ref<const Vector>& h);

inline constexpr std::string_view kOrientation = "larger-is-ood";

struct ScoreSet {
    std::vector<double> scores;
    std::string detector;
    std::string source;
};

// Row-wise score; errors are rethrown with the row index.
ScoreSet score_batch(const MetricModel& model, const Matrix& rows, std::string source = {});

// -T log sum_k exp(f_k / T), max-shifted.
double energy(const Eigen::Ref<const Vector>& logits, double temperature = 1.0);

// -max_k softmax(f)_k.
double msp(const Eigen::Ref<const Vector>& logits);

ScoreSet energy_batch(const Matrix& logits, double temperature = 1.0, std::string source = {});
ScoreSet msp_batch(const Matrix& logits, std::string source = {});

// metric.json + anchors.bin (f64le) + precision_l.bin (f64le, d*d per factor).
void save_model(const MetricModel& model, const std::filesystem::path& dir);
MetricModel load_model(const std::filesystem::path& dir);

}  // namespace hpm
