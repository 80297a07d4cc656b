#include "hpm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"

#include "hpm/error.hpp"
#include "hpm/io.hpp"

namespace hpm {
using json = nlohmann::json;

namespace {

void require_scores(std::span<const double> id_scores, std::span<const double> ood_scores) {
    if (id_scores.empty() || ood_scores.empty()) {
        throw ValidationError("empty input: both ID and OOD score sets must be non-empty");
    }
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(id_scores.begin(), id_scores.end(), finite) ||
        !std::all_of(ood_scores.begin(), ood_scores.end(), finite)) {
        throw ValidationError("scores must be finite");
    }
}

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", 100.0 * v);
    return buf;
}

json metrics_json(const DetectionMetrics& m) {
    return {{"auroc", 100.0 * m.auroc}, {"fpr95", 100.0 * m.fpr95}, {"n_id", m.n_id}, {"n_ood", m.n_ood}};
}

}  // namespace

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
    require_scores(id_scores, ood_scores);
    std::vector<double> id(id_scores.begin(), id_scores.end());
    std::sort(id.begin(), id.end());
    // Twice the Mann-Whitney count, so ties stay integral.
    std::int64_t twice_wins = 0;
    for (double s : ood_scores) {
        const auto lo = std::lower_bound(id.begin(), id.end(), s);
        const auto hi = std::upper_bound(lo, id.end(), s);
        twice_wins += 2 * (lo - id.begin()) + (hi - lo);
    }
    const auto pairs = static_cast<std::int64_t>(id.size()) * static_cast<std::int64_t>(ood_scores.size());
    return static_cast<double>(twice_wins) / static_cast<double>(2 * pairs);
}

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                  double tpr_target) {
    require_scores(id_scores, ood_scores);
    if (!(tpr_target > 0.0 && tpr_target <= 1.0)) {
        throw ValidationError("tpr_target must lie in (0, 1]");
    }
    std::vector<double> ood(ood_scores.begin(), ood_scores.end());
    std::sort(ood.begin(), ood.end(), std::greater<>());
    const auto n = static_cast<double>(ood.size());
    // Smallest number of detections reaching the target; slack absorbs 0.95 * 20 = 18.999...
    auto needed = static_cast<std::size_t>(std::ceil(tpr_target * n - 1e-9));
    needed = std::clamp<std::size_t>(needed, 1, ood.size());
    const double tau = ood[needed - 1];
    const auto accepted = std::count_if(id_scores.begin(), id_scores.end(), [tau](double s) { return s >= tau; });
    return static_cast<double>(accepted) / static_cast<double>(id_scores.size());
}

DetectionMetrics evaluate(std::span<const double> id_scores, std::span<const double> ood_scores,
                          double tpr_target) {
    DetectionMetrics m;
    m.auroc = auroc(id_scores, ood_scores);
    m.fpr95 = fpr_at_tpr(id_scores, ood_scores, tpr_target);
    m.n_id = static_cast<std::int64_t>(id_scores.size());
    m.n_ood = static_cast<std::int64_t>(ood_scores.size());
    return m;
}

DetectionMetrics average_sets(std::span<const DetectionMetrics> per_set) {
    if (per_set.empty()) {
        throw ValidationError("cannot average an empty list of OOD sets");
    }
    DetectionMetrics out;
    for (const auto& m : per_set) {
        out.auroc += m.auroc;
        out.fpr95 += m.fpr95;
        out.n_id += m.n_id;
        out.n_ood += m.n_ood;
    }
    out.auroc /= static_cast<double>(per_set.size());
    out.fpr95 /= static_cast<double>(per_set.size());
    return out;
}

double les(double best_auroc_percent, double cost) {
    if (!(best_auroc_percent > 0.0) || !(cost > 0.0) || !std::isfinite(best_auroc_percent) ||
        !std::isfinite(cost)) {
        throw ValidationError("LES needs positive AUROC and cost");
    }
    return std::log10(best_auroc_percent / cost);
}

EvalReport build_report(const std::string& model,
                        const std::map<std::string, std::vector<double>>& id_scores,
                        const std::map<std::string, std::map<std::string, std::vector<double>>>& ood_scores,
                        double tpr_target, std::optional<double> cost, std::string cost_unit) {
    if (ood_scores.empty()) {
        throw ValidationError("report needs at least one OOD set");
    }
    EvalReport report;
    report.model = model;
    report.tpr_target = tpr_target;
    report.cost = cost;
    report.cost_unit = std::move(cost_unit);

    std::map<std::string, std::vector<DetectionMetrics>> collected;
    for (const auto& [set, by_detector] : ood_scores) {
        for (const auto& [detector, scores] : by_detector) {
            const auto id = id_scores.find(detector);
            if (id == id_scores.end()) {
                throw ValidationError("missing ID scores for detector " + detector);
            }
            const auto m = evaluate(id->second, scores, tpr_target);
            report.per_set[set][detector] = m;
            collected[detector].push_back(m);
        }
    }
    for (const auto& [detector, scores] : id_scores) {
        if (!collected.count(detector)) {
            throw ValidationError("detector " + detector + " has ID scores but no OOD scores");
        }
    }
    for (const auto& [detector, list] : collected) {
        if (list.size() != ood_scores.size()) {
            throw ValidationError("detector " + detector + " is missing scores for some OOD sets");
        }
        report.averaged[detector] = average_sets(list);
    }
    for (const auto& [detector, m] : report.averaged) {
        if (report.best_detector.empty() || 100.0 * m.auroc > report.best_auroc) {
            report.best_auroc = 100.0 * m.auroc;
            report.best_detector = detector;
        }
    }
    if (cost) {
        report.les = les(report.best_auroc, *cost);
    }
    return report;
}

std::string report_json(const EvalReport& report) {
    json j;
    j["model"] = report.model;
    j["orientation"] = "larger-is-ood";
    j["positive_class"] = "ood";
    j["metric_scale"] = "percent";
    j["tpr_target"] = report.tpr_target;
    j["per_set"] = json::object();
    for (const auto& [set, by_detector] : report.per_set) {
        for (const auto& [detector, m] : by_detector) {
            j["per_set"][set][detector] = metrics_json(m);
        }
    }
    j["averaged"] = json::object();
    for (const auto& [detector, m] : report.averaged) {
        j["averaged"][detector] = metrics_json(m);
    }
    j["best_detector"] = report.best_detector;
    j["best_auroc"] = report.best_auroc;
    j["cost"] = report.cost ? json(*report.cost) : json(nullptr);
    j["cost_unit"] = report.cost_unit;
    j["les"] = report.les ? json(*report.les) : json(nullptr);
    j["accuracy"] = report.accuracy ? json(*report.accuracy) : json(nullptr);
    return j.dump(2) + "\n";
}

std::string report_csv(const EvalReport& report) {
    std::string out = "# orientation=larger-is-ood positive=ood scale=percent\n";
    out += "model,detector,ood_set,auroc,fpr95\n";
    for (const auto& [detector, avg] : report.averaged) {
        for (const auto& [set, by_detector] : report.per_set) {
            const auto it = by_detector.find(detector);
            if (it == by_detector.end()) continue;
            out += report.model + "," + detector + "," + set + "," + percent(it->second.auroc) + "," +
                   percent(it->second.fpr95) + "\n";
        }
        out += report.model + "," + detector + ",avg," + percent(avg.auroc) + "," + percent(avg.fpr95) + "\n";
    }
    return out;
}

std::string les_csv(const EvalReport& report) {
    std::string out = "model,best_auroc,cost,cost_unit,les\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", report.best_auroc);
    out += report.model + "," + buf + ",";
    out += report.cost ? io::format_double(*report.cost) : std::string();
    out += "," + report.cost_unit + ",";
    if (report.les) {
        std::snprintf(buf, sizeof(buf), "%.6f", *report.les);
        out += buf;
    }
    out += "\n";
    return out;
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
    io::ensure_directory(dir);
    io::write_file_atomic(dir / "report.json", report_json(report));
    io::write_file_atomic(dir / "report.csv", report_csv(report));
    io::write_file_atomic(dir / "les.csv", les_csv(report));
}

}  // namespace hpm
