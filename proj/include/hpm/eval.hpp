#pragma once

// Detection metrics with OOD as the positive class (scores oriented
// larger-is-OOD), multi-set averaging and the Log Efficiency Score.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hpm {

struct DetectionMetrics {
    double auroc = 0.0;  // [0, 1]
    double fpr95 = 0.0;  // [0, 1]
    std::int64_t n_id = 0;
    std::int64_t n_ood = 0;
};

// Mann-Whitney AUROC, ties counted as one half. Exact: the pair count is
// accumulated in integers before the single final division.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

// Fraction of ID scores >= tau, where tau is the largest score value with at
// least tpr_target of the OOD scores >= tau.
double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                  double tpr_target = 0.95);

DetectionMetrics evaluate(std::span<const double> id_scores, std::span<const double> ood_scores,
                          double tpr_target = 0.95);

// Unweighted mean of AUROC and FPR; sample counts are summed.
DetectionMetrics average_sets(std::span<const DetectionMetrics> per_set);

// log10(best_auroc_percent / cost); AUROC on the 0-100 scale.
double les(double best_auroc_percent, double cost);

struct EvalReport {
    std::string model;
    double tpr_target = 0.95;
    // ood set -> detector -> metrics
    std::map<std::string, std::map<std::string, DetectionMetrics>> per_set;
    // detector -> metrics averaged over sets
    std::map<std::string, DetectionMetrics> averaged;
    std::string best_detector;
    double best_auroc = 0.0;  // percent
    std::optional<double> cost;
    std::string cost_unit;
    std::optional<double> les;
    std::optional<double> accuracy;  // pass-through, never computed here
};

// id_scores: detector -> ID scores; ood_scores: set -> detector -> scores.
EvalReport build_report(const std::string& model,
                        const std::map<std::string, std::vector<double>>& id_scores,
                        const std::map<std::string, std::map<std::string, std::vector<double>>>& ood_scores,
                        double tpr_target = 0.95, std::optional<double> cost = std::nullopt,
                        std::string cost_unit = {});

// report.json, report.csv and les.csv under `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);
std::string report_json(const EvalReport& report);
std::string report_csv(const EvalReport& report);
std::string les_csv(const EvalReport& report);

}  // namespace hpm
