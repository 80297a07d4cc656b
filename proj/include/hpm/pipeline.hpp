#pragma once

// The synth -> fit -> score -> diagnose -> eval pipeline behind the CLI.
//
// Output layout under RunConfig::out:
//   models/<detector>/            metric.json, anchors.bin, precision_l.bin
//   scores/<detector>/id.csv      ID evaluation scores
//   scores/<detector>/ood/<set>.csv
//   diagnostics/                  null_scatter.csv, radius.csv, spectrum.csv,
//                                 spectrum_eigenvalues.csv, summary.json, plots/*.svg
//   report.json, report.csv, les.csv

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hpm/bank.hpp"
#include "hpm/detectors.hpp"
#include "hpm/eval.hpp"
#include "hpm/synth.hpp"

namespace hpm {

inline const std::vector<std::string> kAllDetectors = {"energy", "msp", "md", "rp-md", "hc-md", "hpm"};

struct RunConfig {
    std::filesystem::path out = "hpmood_out";
    std::filesystem::path id_bank;       // fitting and diagnostics; default <out>/id_train
    std::filesystem::path id_eval_bank;  // ID side of the evaluation; default <out>/id_test or id_bank
    std::vector<std::filesystem::path> ood_banks;  // default: every directory under <out>/ood
    std::optional<std::filesystem::path> head;     // directory with head_w.bin / head_b.bin
    std::vector<std::string> detectors = kAllDetectors;
    RidgeSetting ridge;
    double temperature = 1.0;
    double head_fraction = 0.5;
    double tpr_target = 0.95;
    std::optional<double> cost;
    std::string cost_unit;
    std::string model_name = "model";
    bool plots = false;
    SynthSpec synth;
};

// Parses a config document. Unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

// Fills in default bank locations and checks detector names.
RunConfig resolve_config(RunConfig config);

void cmd_synth(const SynthSpec& spec, const std::filesystem::path& out, std::ostream& log);
void cmd_fit(const RunConfig& config, std::ostream& log);
void cmd_score(const RunConfig& config, std::ostream& log);
nlohmann::json cmd_diagnose(const RunConfig& config, std::ostream& log);
EvalReport cmd_eval(const RunConfig& config, std::ostream& log);
EvalReport cmd_report(const RunConfig& config, std::ostream& log);

// Scores one bank with one detector, loading fitted models from <out>/models.
ScoreSet score_bank(const RunConfig& config, const std::string& detector, const FeatureBank& bank);

// Logits for energy/msp: the bank's own logits, else the configured head,
// else the bank's head. Throws ValidationError when none is available.
Matrix resolve_logits(const RunConfig& config, const FeatureBank& bank);

std::string score_csv(const ScoreSet& scores);
ScoreSet read_score_csv(const std::filesystem::path& path);

struct SpectrumRow {
    std::string variant;
    std::string scope;  // class id or "pooled"
    std::int64_t count = 0;
    SpectrumDiagnostics diagnostics;
};

// Spectra of the ridge-regularized covariance behind each Mahalanobis
// variant: one row per class (n_c >= 2) for class-specific variants, one
// pooled row otherwise.
std::vector<SpectrumRow> variant_spectra(const FeatureBank& bank, const RidgeSetting& ridge);

}  // namespace hpm
