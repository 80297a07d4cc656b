#include "hpm/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>

#include "hpm/error.hpp"
#include "hpm/geometry.hpp"
#include "hpm/io.hpp"
#include "hpm/nullspace.hpp"
#include "hpm/svg.hpp"

namespace hpm {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kHeadColor = "#4c72b0";
constexpr const char* kTailColor = "#dd8452";

template <typename T>
void read_key(const json& doc, const char* key, T& target) {
    if (doc.contains(key) && !doc[key].is_null()) target = doc[key].get<T>();
}

SynthSpec synth_from_json(const json& doc) {
    static const std::set<std::string> known = {
        "num_classes", "dim", "n_max", "imbalance_ratio", "radius_coupling", "spread", "anisotropy",
        "radius_jitter", "n_test_per_class", "n_ood", "ood_kind", "ood_shift", "head_scale", "seed"};
    for (const auto& [key, _] : doc.items()) {
        if (!known.count(key)) throw ValidationError("unknown synth config key: " + key);
    }
    SynthSpec s;
    read_key(doc, "num_classes", s.num_classes);
    read_key(doc, "dim", s.dim);
    read_key(doc, "n_max", s.n_max);
    read_key(doc, "imbalance_ratio", s.imbalance_ratio);
    read_key(doc, "radius_coupling", s.radius_coupling);
    read_key(doc, "spread", s.spread);
    read_key(doc, "anisotropy", s.anisotropy);
    read_key(doc, "radius_jitter", s.radius_jitter);
    read_key(doc, "n_test_per_class", s.n_test_per_class);
    read_key(doc, "n_ood", s.n_ood);
    read_key(doc, "ood_shift", s.ood_shift);
    read_key(doc, "head_scale", s.head_scale);
    read_key(doc, "seed", s.seed);
    if (doc.contains("ood_kind")) {
        const auto kind = parse_ood_kind(doc["ood_kind"].get<std::string>());
        if (!kind) throw ValidationError("unknown ood_kind: " + doc["ood_kind"].get<std::string>());
        s.ood_kind = *kind;
    }
    return s;
}

std::optional<ClassifierHead> load_head_dir(const fs::path& dir, Index k, Index d) {
    if (!fs::exists(dir / "head_w.bin")) {
        throw IoError("classifier head not found in " + dir.string());
    }
    auto w = io::decode_f32le(io::read_file(dir / "head_w.bin"));
    auto b = io::decode_f32le(io::read_file(dir / "head_b.bin"));
    if (static_cast<Index>(w.size()) != k * d || static_cast<Index>(b.size()) != k) {
        throw ValidationError("dimension mismatch: head in " + dir.string() + " is not " + std::to_string(k) +
                              " x " + std::to_string(d));
    }
    ClassifierHead head;
    head.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), k, d);
    head.bias = Eigen::Map<const Vector>(b.data(), k);
    validate_head(head);
    return head;
}

std::optional<ClassifierHead> resolve_head(const RunConfig& config, const FeatureBank& bank) {
    if (config.head) return load_head_dir(*config.head, bank.num_classes, bank.dim());
    return bank.head;
}

fs::path model_dir(const RunConfig& config, const std::string& detector) {
    return config.out / "models" / detector;
}

fs::path id_score_path(const RunConfig& config, const std::string& detector) {
    return config.out / "scores" / detector / "id.csv";
}

fs::path ood_score_path(const RunConfig& config, const std::string& detector, const std::string& set) {
    return config.out / "scores" / detector / "ood" / (set + ".csv");
}

std::string set_name(const fs::path& p) {
    auto name = p.filename().string();
    return name.empty() ? p.parent_path().filename().string() : name;
}

std::vector<fs::path> sorted_ood_banks(const RunConfig& config) {
    auto banks = config.ood_banks;
    std::sort(banks.begin(), banks.end(),
              [](const fs::path& a, const fs::path& b) { return set_name(a) < set_name(b); });
    for (std::size_t i = 1; i < banks.size(); ++i) {
        if (set_name(banks[i]) == set_name(banks[i - 1])) {
            throw ValidationError("duplicate OOD set name: " + set_name(banks[i]));
        }
    }
    return banks;
}

std::string fmt(double v) { return io::format_double(v); }

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

RunConfig config_from_json(const json& doc) {
    static const std::set<std::string> known = {
        "out", "id_bank", "id_eval_bank", "ood_banks", "head", "detectors", "lambda_rel", "ridge_mode",
        "temperature", "head_fraction", "tpr_target", "cost", "cost_unit", "model_name", "plots", "seed", "synth"};
    if (!doc.is_object()) throw ValidationError("config must be a JSON object");
    for (const auto& [key, _] : doc.items()) {
        if (!known.count(key)) throw ValidationError("unknown config key: " + key);
    }
    RunConfig c;
    try {
        if (doc.contains("synth")) c.synth = synth_from_json(doc["synth"]);
        if (doc.contains("out")) c.out = doc["out"].get<std::string>();
        if (doc.contains("id_bank")) c.id_bank = doc["id_bank"].get<std::string>();
        if (doc.contains("id_eval_bank")) c.id_eval_bank = doc["id_eval_bank"].get<std::string>();
        if (doc.contains("ood_banks")) {
            for (const auto& p : doc["ood_banks"]) c.ood_banks.emplace_back(p.get<std::string>());
        }
        if (doc.contains("head") && !doc["head"].is_null()) c.head = fs::path(doc["head"].get<std::string>());
        read_key(doc, "detectors", c.detectors);
        read_key(doc, "lambda_rel", c.ridge.value);
        if (doc.contains("ridge_mode")) {
            const auto mode = doc["ridge_mode"].get<std::string>();
            if (mode != "relative" && mode != "absolute") throw ValidationError("ridge_mode must be relative or absolute");
            c.ridge.mode = mode == "absolute" ? RidgeMode::absolute : RidgeMode::relative;
        }
        read_key(doc, "temperature", c.temperature);
        read_key(doc, "head_fraction", c.head_fraction);
        read_key(doc, "tpr_target", c.tpr_target);
        if (doc.contains("cost") && !doc["cost"].is_null()) c.cost = doc["cost"].get<double>();
        read_key(doc, "cost_unit", c.cost_unit);
        read_key(doc, "model_name", c.model_name);
        read_key(doc, "plots", c.plots);
        read_key(doc, "seed", c.synth.seed);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed config: ") + e.what());
    }
    return c;
}

RunConfig load_config(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        throw ValidationError("malformed config " + path.string() + ": " + e.what());
    }
    return config_from_json(doc);
}

RunConfig resolve_config(RunConfig c) {
    for (const auto& d : c.detectors) {
        if (std::find(kAllDetectors.begin(), kAllDetectors.end(), d) == kAllDetectors.end()) {
            throw ValidationError("unknown detector: " + d + " (expected one of energy, msp, md, rp-md, hc-md, hpm)");
        }
    }
    if (c.detectors.empty()) throw ValidationError("detector list is empty");
    if (!(c.temperature > 0.0)) throw ValidationError("temperature must be positive");
    if (!(c.head_fraction > 0.0 && c.head_fraction < 1.0)) throw ValidationError("head_fraction must lie in (0, 1)");
    if (!(c.tpr_target > 0.0 && c.tpr_target <= 1.0)) throw ValidationError("tpr_target must lie in (0, 1]");
    if (!(c.ridge.value > 0.0)) throw ValidationError("lambda_rel must be positive");
    if (c.cost && !(*c.cost > 0.0)) throw ValidationError("cost must be positive");

    if (c.id_bank.empty()) c.id_bank = c.out / "id_train";
    if (c.id_eval_bank.empty()) {
        c.id_eval_bank = fs::exists(c.out / "id_test") ? c.out / "id_test" : c.id_bank;
    }
    if (c.ood_banks.empty() && fs::is_directory(c.out / "ood")) {
        for (const auto& entry : fs::directory_iterator(c.out / "ood")) {
            if (entry.is_directory()) c.ood_banks.push_back(entry.path());
        }
    }
    c.ood_banks = sorted_ood_banks(c);
    return c;
}

void cmd_synth(const SynthSpec& spec, const fs::path& out, std::ostream& log) {
    const auto data = generate_synthetic(spec);
    write_synthetic(data, spec, out);
    log << "synth: wrote id_train (N=" << data.train.size() << "), id_test (N=" << data.test.size()
        << "), ood/" << data.ood.name << " (N=" << data.ood.size() << ") to " << out.string() << "\n";
}

void cmd_fit(const RunConfig& config, std::ostream& log) {
    const auto bank = load_bank(config.id_bank);
    for (const auto& detector : config.detectors) {
        const auto variant = Variant::parse(detector);
        if (!variant) continue;
        const auto model = fit_metric(bank, *variant, config.ridge);
        save_model(model, model_dir(config, detector));
        log << "fit: " << variant->label() << " -> " << model_dir(config, detector).string() << "\n";
    }
}

Matrix resolve_logits(const RunConfig& config, const FeatureBank& bank) {
    if (bank.logits) return *bank.logits;
    const auto head = resolve_head(config, bank);
    if (!head) {
        throw ValidationError("missing logits for classifier scores: bank " + bank.name +
                              " has no logits.bin and no classifier head");
    }
    return compute_logits(*head, bank.features);
}

ScoreSet score_bank(const RunConfig& config, const std::string& detector, const FeatureBank& bank) {
    if (detector == "energy") return energy_batch(resolve_logits(config, bank), config.temperature, bank.name);
    if (detector == "msp") return msp_batch(resolve_logits(config, bank), bank.name);
    const auto variant = Variant::parse(detector);
    if (!variant) throw ValidationError("unknown detector: " + detector);
    const auto model = load_model(model_dir(config, detector));
    if (model.dim != bank.dim()) {
        throw ValidationError("dimension mismatch: model " + detector + " has d=" + std::to_string(model.dim) +
                              ", bank " + bank.name + " has d=" + std::to_string(bank.dim()));
    }
    return score_batch(model, bank.features, bank.name);
}

std::string score_csv(const ScoreSet& scores) {
    std::string out = "# detector=" + scores.detector + " source=" + scores.source + " orientation=" +
                      std::string(kOrientation) + "\n";
    out += "index,score\n";
    for (std::size_t i = 0; i < scores.scores.size(); ++i) {
        out += std::to_string(i) + "," + fmt(scores.scores[i]) + "\n";
    }
    return out;
}

ScoreSet read_score_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("missing score file: " + path.string());
    ScoreSet set;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto grab = [&line](const std::string& key) {
                const auto pos = line.find(key + "=");
                if (pos == std::string::npos) return std::string();
                const auto start = pos + key.size() + 1;
                return line.substr(start, line.find(' ', start) - start);
            };
            set.detector = grab("detector");
            set.source = grab("source");
            if (const auto o = grab("orientation"); !o.empty() && o != kOrientation) {
                throw ValidationError("score file " + path.string() + " has orientation " + o);
            }
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("index", 0) == 0) continue;
        }
        const auto comma = line.find(',');
        try {
            set.scores.push_back(std::stod(line.substr(comma == std::string::npos ? 0 : comma + 1)));
        } catch (const std::exception&) {
            throw ValidationError("malformed score line in " + path.string() + ": " + line);
        }
    }
    return set;
}

void cmd_score(const RunConfig& config, std::ostream& log) {
    std::vector<std::pair<fs::path, FeatureBank>> targets;
    targets.emplace_back(fs::path(), load_bank(config.id_eval_bank));
    for (const auto& p : config.ood_banks) {
        auto bank = load_bank(p);
        bank.name = set_name(p);
        targets.emplace_back(p, std::move(bank));
    }
    for (const auto& detector : config.detectors) {
        for (const auto& [path, bank] : targets) {
            const bool is_id = path.empty();
            const auto scores = score_bank(config, detector, bank);
            const auto dest = is_id ? id_score_path(config, detector) : ood_score_path(config, detector, bank.name);
            io::ensure_directory(dest.parent_path());
            io::write_file_atomic(dest, score_csv(scores));
        }
        log << "score: " << detector << " on " << targets.size() << " bank(s)\n";
    }
}

std::vector<SpectrumRow> variant_spectra(const FeatureBank& bank, const RidgeSetting& ridge_setting) {
    std::vector<SpectrumRow> rows;
    const auto counts = class_counts(bank);
    for (const Variant v : {Variant::mahalanobis(), Variant::rp_md(), Variant::hc_md(), Variant::hpm()}) {
        if (v.pooled()) {
            const auto cov = pooled_covariance(bank, class_means(bank, v.normalized()));
            rows.push_back({v.name(), "pooled", bank.size(),
                            spectrum(ridge(cov, ridge_setting.value, ridge_setting.mode))});
        } else {
            for (int c = 0; c < bank.num_classes; ++c) {
                if (counts[static_cast<std::size_t>(c)] < 2) continue;
                const auto cov = class_covariance(bank, c, v.normalized());
                rows.push_back({v.name(), std::to_string(c), counts[static_cast<std::size_t>(c)],
                                spectrum(ridge(cov, ridge_setting.value, ridge_setting.mode))});
            }
        }
    }
    return rows;
}

json cmd_diagnose(const RunConfig& config, std::ostream& log) {
    const auto bank = load_bank(config.id_bank);
    const fs::path dir = config.out / "diagnostics";
    io::ensure_directory(dir);
    const auto counts = class_counts(bank);
    const auto split = split_head_tail(std::span<const std::int64_t>(counts), config.head_fraction);

    json summary;
    summary["bank"] = bank.name;
    summary["n"] = bank.size();
    summary["d"] = bank.dim();
    summary["k"] = bank.num_classes;
    summary["orientation"] = kOrientation;
    summary["conventions"] = {
        {"head_split", split.rule},
        {"head_classes", split.head_classes},
        {"tail_classes", split.tail_classes},
        {"effective_rank", "exp of Shannon entropy of eigenvalues above 1e-12 * max, normalized to sum 1"},
        {"log_condition", "natural log of max / min eigenvalue above 1e-12 * max"},
        {"spectrum_matrix", "ridge-regularized covariance used by each detector"},
        {"lambda_rel", config.ridge.value},
        {"ridge_mode", config.ridge.mode == RidgeMode::relative ? "relative" : "absolute"},
        {"group_mean", "unweighted over classes"},
    };

    // Radius profile.
    const auto radius = radius_profile(bank, split);
    {
        std::string csv = "class,count,mean_norm\n";
        for (int c = 0; c < bank.num_classes; ++c) {
            csv += std::to_string(c) + "," + std::to_string(counts[static_cast<std::size_t>(c)]) + "," +
                   opt_fmt(radius.per_class_mean_norm[static_cast<std::size_t>(c)]) + "\n";
        }
        io::write_file_atomic(dir / "radius.csv", csv);
        summary["radius"] = {{"head_mean", opt_json(radius.head_mean)},
                             {"tail_mean", opt_json(radius.tail_mean)},
                             {"tail_head_ratio", opt_json(radius.tail_head_ratio)}};
    }

    // Classifier-null scatter.
    std::optional<NullScatterReport> null_report;
    const auto head = resolve_head(config, bank);
    if (head) {
        const auto proj = projectors(*head);
        null_report = null_scatter(bank, proj, split);
        std::string csv = "class,count,a_null\n";
        for (int c = 0; c < bank.num_classes; ++c) {
            csv += std::to_string(c) + "," + std::to_string(counts[static_cast<std::size_t>(c)]) + "," +
                   opt_fmt(null_report->per_class[static_cast<std::size_t>(c)]) + "\n";
        }
        io::write_file_atomic(dir / "null_scatter.csv", csv);
        summary["null_scatter"] = {{"head_avg", opt_json(null_report->head_avg)},
                                   {"tail_avg", opt_json(null_report->tail_avg)},
                                   {"rank_row", proj.rank_row},
                                   {"skipped_classes", null_report->skipped},
                                   {"cross_check_max_rel", null_report->cross_check_max_rel}};
    } else {
        log << "diagnose: no classifier head for bank " << bank.name << "; skipping null-space diagnostics\n";
        summary["null_scatter"] = nullptr;
    }

    // Spectra.
    const auto spectra = variant_spectra(bank, config.ridge);
    {
        std::string csv = "variant,scope,count,effective_rank,log_condition\n";
        std::string eig = "variant,scope,index,eigenvalue\n";
        for (const auto& row : spectra) {
            csv += row.variant + "," + row.scope + "," + std::to_string(row.count) + "," +
                   fmt(row.diagnostics.effective_rank) + "," + fmt(row.diagnostics.log_condition) + "\n";
            for (Index i = 0; i < row.diagnostics.eigenvalues.size(); ++i) {
                eig += row.variant + "," + row.scope + "," + std::to_string(i) + "," +
                       fmt(row.diagnostics.eigenvalues(i)) + "\n";
            }
        }
        io::write_file_atomic(dir / "spectrum.csv", csv);
        io::write_file_atomic(dir / "spectrum_eigenvalues.csv", eig);

        json by_variant = json::object();
        for (const Variant v : {Variant::mahalanobis(), Variant::rp_md(), Variant::hc_md(), Variant::hpm()}) {
            std::vector<double> ranks, conds;
            for (const auto& row : spectra) {
                if (row.variant == v.name()) {
                    ranks.push_back(row.diagnostics.effective_rank);
                    conds.push_back(row.diagnostics.log_condition);
                }
            }
            by_variant[v.name()] = {
                {"estimates", ranks.size()},
                {"median_effective_rank", median(ranks)},
                {"max_effective_rank", ranks.empty() ? 0.0 : *std::max_element(ranks.begin(), ranks.end())},
                {"median_log_condition", median(conds)},
            };
        }
        summary["spectrum"] = by_variant;
    }

    if (config.plots) {
        const fs::path plots = dir / "plots";
        io::ensure_directory(plots);
        std::vector<svg::Bar> bars;
        for (int c = 0; c < bank.num_classes; ++c) {
            const auto& v = radius.per_class_mean_norm[static_cast<std::size_t>(c)];
            bars.push_back({std::to_string(c), v.value_or(0.0), split.is_head(c) ? kHeadColor : kTailColor});
        }
        io::write_file_atomic(plots / "radius.svg",
                              svg::bar_chart("Mean feature norm by class (head blue, tail orange)", "mean ||h||", bars));
        if (null_report) {
            bars.clear();
            for (int c = 0; c < bank.num_classes; ++c) {
                const auto& v = null_report->per_class[static_cast<std::size_t>(c)];
                bars.push_back({std::to_string(c), v.value_or(0.0), split.is_head(c) ? kHeadColor : kTailColor});
            }
            io::write_file_atomic(plots / "null_scatter.svg",
                                  svg::bar_chart("Classifier-null scatter by class", "A_null", bars));
        }
        std::vector<svg::Series> series;
        const char* colors[] = {"#c44e52", "#dd8452", "#55a868", "#4c72b0"};
        std::size_t color = 0;
        for (const auto& row : spectra) {
            // Pooled estimates plus the least-supported class of each class-specific variant.
            const bool last_class = row.scope == std::to_string(bank.num_classes - 1);
            if (row.scope != "pooled" && !last_class) continue;
            std::vector<double> values(row.diagnostics.eigenvalues.data(),
                                       row.diagnostics.eigenvalues.data() + row.diagnostics.eigenvalues.size());
            series.push_back({row.variant + (row.scope == "pooled" ? "" : " class " + row.scope), values,
                              colors[color++ % 4]});
        }
        io::write_file_atomic(plots / "spectrum.svg",
                              svg::log_line_chart("Covariance eigenvalues", "index", "eigenvalue", series));
    }

    io::write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
    log << "diagnose: wrote " << dir.string() << "\n";
    return summary;
}

EvalReport cmd_eval(const RunConfig& config, std::ostream& log) {
    if (config.ood_banks.empty()) throw ValidationError("no OOD sets configured");
    std::vector<std::string> missing;
    std::map<std::string, std::vector<double>> id_scores;
    std::map<std::string, std::map<std::string, std::vector<double>>> ood_scores;
    for (const auto& detector : config.detectors) {
        const auto id_path = id_score_path(config, detector);
        if (fs::exists(id_path)) {
            id_scores[detector] = read_score_csv(id_path).scores;
        } else {
            missing.push_back(id_path.string());
        }
        for (const auto& bank : config.ood_banks) {
            const auto set = set_name(bank);
            const auto path = ood_score_path(config, detector, set);
            if (fs::exists(path)) {
                ood_scores[set][detector] = read_score_csv(path).scores;
            } else {
                missing.push_back(path.string());
            }
        }
    }
    if (!missing.empty()) {
        std::string msg = "missing score files:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw IoError(msg);
    }
    auto report = build_report(config.model_name, id_scores, ood_scores, config.tpr_target, config.cost,
                               config.cost_unit);
    write_report(report, config.out);
    log << "eval: best " << report.best_detector << " AUROC " << report.best_auroc << " over "
        << report.per_set.size() << " OOD set(s)\n";
    return report;
}

EvalReport cmd_report(const RunConfig& config, std::ostream& log) {
    cmd_fit(config, log);
    cmd_score(config, log);
    cmd_diagnose(config, log);
    return cmd_eval(config, log);
}

}  // namespace hpm
