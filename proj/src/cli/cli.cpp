#include "hpm/cli.hpp"

#include <filesystem>
#include <ostream>

#include "CLI11.hpp"

#include "hpm/error.hpp"
#include "hpm/pipeline.hpp"

namespace hpm {
namespace fs = std::filesystem;

namespace {

struct Flags {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    double lambda_rel = 0.0;
    std::string ridge_mode;
    double temperature = 0.0;
    std::vector<std::string> detectors;
    double head_fraction = 0.0;
    double tpr_target = 0.0;
    double cost = 0.0;
    std::string cost_unit;
    std::string model_name;
    std::string id_bank;
    std::string id_eval_bank;
    std::vector<std::string> ood_banks;
    std::string head;

    // synth only
    int classes = 0;
    long dim = 0;
    int n_max = 0;
    double imbalance = 0.0;
    double radius_coupling = 0.0;
    double spread = 0.0;
    double anisotropy = 0.0;
    double radius_jitter = 0.0;
    int n_test = 0;
    int n_ood = 0;
    std::string ood_kind;
    double ood_shift = 0.0;

    CLI::App* active = nullptr;

    bool given(const std::string& name) const {
        const auto* opt = active ? active->get_option_no_throw("--" + name) : nullptr;
        return opt != nullptr && opt->count() > 0;
    }
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON run configuration");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--seed", f.seed, "Synthetic generator seed");
    cmd->add_option("--lambda-rel", f.lambda_rel, "Ridge value (relative to trace/d by default)");
    cmd->add_option("--ridge-mode", f.ridge_mode, "relative | absolute")
        ->check(CLI::IsMember({"relative", "absolute"}));
    cmd->add_option("--temperature", f.temperature, "Energy temperature");
    cmd->add_option("--detectors", f.detectors, "Comma-separated detector list")->delimiter(',');
    cmd->add_option("--head-fraction", f.head_fraction, "Fraction of classes in the head group");
    cmd->add_option("--tpr-target", f.tpr_target, "TPR for the FPR metric");
    cmd->add_option("--cost", f.cost, "Training cost for LES");
    cmd->add_option("--cost-unit", f.cost_unit, "Unit echoed next to the cost");
    cmd->add_option("--model-name", f.model_name, "Model label in reports");
    cmd->add_option("--id-bank", f.id_bank, "ID bank used for fitting and diagnostics");
    cmd->add_option("--id-eval-bank", f.id_eval_bank, "ID bank scored for evaluation");
    cmd->add_option("--ood-bank", f.ood_banks, "OOD bank directory (repeatable)");
    cmd->add_option("--head", f.head, "Directory with head_w.bin and head_b.bin");
    cmd->add_flag("--plots", "Emit SVG charts with the diagnostics");
}

void add_synth(CLI::App* cmd, Flags& f) {
    cmd->add_option("--classes", f.classes, "Number of classes K");
    cmd->add_option("--dim", f.dim, "Feature dimension d");
    cmd->add_option("--n-max", f.n_max, "Samples in the most frequent class");
    cmd->add_option("--imbalance", f.imbalance, "Imbalance ratio n_max / n_min");
    cmd->add_option("--radius-coupling", f.radius_coupling, "Tail radius inflation");
    cmd->add_option("--spread", f.spread, "Within-class noise scale");
    cmd->add_option("--anisotropy", f.anisotropy, "Noise eigen-profile decay");
    cmd->add_option("--radius-jitter", f.radius_jitter, "Per-sample log-radius std");
    cmd->add_option("--n-test", f.n_test, "ID evaluation samples per class");
    cmd->add_option("--n-ood", f.n_ood, "OOD samples");
    cmd->add_option("--ood-kind", f.ood_kind, "shifted-gaussian | uniform-sphere")
        ->check(CLI::IsMember({"shifted-gaussian", "uniform-sphere"}));
    cmd->add_option("--ood-shift", f.ood_shift, "OOD centre offset");
}

RunConfig build_config(const Flags& f) {
    RunConfig c = f.given("config") ? load_config(f.config) : RunConfig{};
    if (f.given("out")) c.out = f.out;
    if (f.given("seed")) c.synth.seed = f.seed;
    if (f.given("lambda-rel")) c.ridge.value = f.lambda_rel;
    if (f.given("ridge-mode")) c.ridge.mode = f.ridge_mode == "absolute" ? RidgeMode::absolute : RidgeMode::relative;
    if (f.given("temperature")) c.temperature = f.temperature;
    if (f.given("detectors")) c.detectors = f.detectors;
    if (f.given("head-fraction")) c.head_fraction = f.head_fraction;
    if (f.given("tpr-target")) c.tpr_target = f.tpr_target;
    if (f.given("cost")) c.cost = f.cost;
    if (f.given("cost-unit")) c.cost_unit = f.cost_unit;
    if (f.given("model-name")) c.model_name = f.model_name;
    if (f.given("id-bank")) c.id_bank = f.id_bank;
    if (f.given("id-eval-bank")) c.id_eval_bank = f.id_eval_bank;
    if (f.given("ood-bank")) c.ood_banks.assign(f.ood_banks.begin(), f.ood_banks.end());
    if (f.given("head")) c.head = fs::path(f.head);
    if (f.given("plots")) c.plots = true;

    auto& s = c.synth;
    if (f.given("classes")) s.num_classes = f.classes;
    if (f.given("dim")) s.dim = f.dim;
    if (f.given("n-max")) s.n_max = f.n_max;
    if (f.given("imbalance")) s.imbalance_ratio = f.imbalance;
    if (f.given("radius-coupling")) s.radius_coupling = f.radius_coupling;
    if (f.given("spread")) s.spread = f.spread;
    if (f.given("anisotropy")) s.anisotropy = f.anisotropy;
    if (f.given("radius-jitter")) s.radius_jitter = f.radius_jitter;
    if (f.given("n-test")) s.n_test_per_class = f.n_test;
    if (f.given("n-ood")) s.n_ood = f.n_ood;
    if (f.given("ood-kind")) s.ood_kind = *parse_ood_kind(f.ood_kind);
    if (f.given("ood-shift")) s.ood_shift = f.ood_shift;
    return c;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Post-hoc OOD detection on frozen feature banks"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    Flags flags;
    const std::vector<std::pair<std::string, std::string>> verbs = {
        {"synth", "Generate a synthetic long-tailed ID/OOD bank set"},
        {"fit", "Fit the Mahalanobis-family detectors on the ID bank"},
        {"score", "Score the ID evaluation bank and every OOD bank"},
        {"diagnose", "Radius, classifier-null scatter and covariance spectrum diagnostics"},
        {"eval", "AUROC / FPR95 / LES report from score files"},
        {"report", "fit + score + diagnose + eval"},
    };
    for (const auto& [name, help] : verbs) {
        auto* cmd = app.add_subcommand(name, help);
        add_common(cmd, flags);
        if (name == "synth") add_synth(cmd, flags);
    }

    std::vector<const char*> argv = {"hpmood"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        flags.active = app.get_subcommands().front();
        const std::string verb = flags.active->get_name();
        RunConfig config = build_config(flags);
        if (verb == "synth") {
            cmd_synth(config.synth, config.out, out);
            return kExitOk;
        }
        config = resolve_config(std::move(config));
        if (verb == "fit") {
            cmd_fit(config, out);
        } else if (verb == "score") {
            cmd_score(config, out);
        } else if (verb == "diagnose") {
            cmd_diagnose(config, out);
        } else if (verb == "eval") {
            cmd_eval(config, out);
        } else {
            cmd_report(config, out);
        }
        return kExitOk;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

}  // namespace hpm
