#include "hpm/detectors.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"

#include "hpm/error.hpp"
#include "hpm/io.hpp"

namespace hpm {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_temperature(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) {
        throw ValidationError("temperature must be positive, got " + io::format_double(t));
    }
}

void require_finite_logits(const Eigen::Ref<const Vector>& logits) {
    if (logits.size() == 0 || !logits.allFinite()) {
        throw ValidationError("logits must be non-empty and finite");
    }
}

void check_support(const FeatureBank& bank, Variant variant) {
    const auto counts = class_counts(bank);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) {
            throw ValidationError("insufficient class support: class " + std::to_string(c) +
                                  " has no samples");
        }
        if (!variant.pooled() && counts[c] < 2) {
            throw ValidationError("insufficient class support: class " + std::to_string(c) +
                                  " has " + std::to_string(counts[c]) +
                                  " sample(s), class-specific covariance needs at least 2");
        }
    }
    if (variant.pooled() && bank.size() <= bank.num_classes) {
        throw ValidationError("insufficient class support: pooled covariance needs N > K (N=" +
                              std::to_string(bank.size()) + ", K=" +
                              std::to_string(bank.num_classes) + ")");
    }
    if (variant.normalized()) {
        for (Index i = 0; i < bank.size(); ++i) {
            if (!(bank.features.row(i).norm() > kNormEpsilon)) {
                throw ValidationError("degenerate feature: zero-norm row " + std::to_string(i) +
                                      " cannot be projected to the sphere");
            }
        }
    }
}

std::string ridge_mode_name(RidgeMode mode) {
    return mode == RidgeMode::relative ? "relative" : "absolute";
}

}  // namespace

std::string Variant::name() const {
    if (feature == FeatureSpace::raw) return pooled() ? "rp-md" : "md";
    return pooled() ? "hpm" : "hc-md";
}

std::string Variant::label() const {
    if (feature == FeatureSpace::raw) return pooled() ? "RP-MD" : "Mahalanobis";
    return pooled() ? "HPM" : "HC-MD";
}

std::optional<Variant> Variant::parse(std::string_view name) {
    if (name == "md" || name == "mahalanobis") return mahalanobis();
    if (name == "rp-md") return rp_md();
    if (name == "hc-md") return hc_md();
    if (name == "hpm") return hpm();
    return std::nullopt;
}

MetricModel fit_metric(const FeatureBank& bank, Variant variant, RidgeSetting ridge_setting) {
    validate_bank(bank);
    check_support(bank, variant);

    MetricModel model;
    model.variant = variant;
    model.ridge = ridge_setting;
    model.dim = bank.dim();
    model.num_classes = bank.num_classes;

    const ClassStats stats = class_means(bank, variant.normalized());
    model.anchors = stats.means;

    if (variant.pooled()) {
        const auto cov = pooled_covariance(bank, stats);
        model.precisions.push_back(factorize(ridge(cov, ridge_setting.value, ridge_setting.mode)));
    } else {
        model.precisions.reserve(static_cast<std::size_t>(bank.num_classes));
        for (int c = 0; c < bank.num_classes; ++c) {
            const auto cov = class_covariance(bank, c, variant.normalized());
            try {
                model.precisions.push_back(
                    factorize(ridge(cov, ridge_setting.value, ridge_setting.mode)));
            } catch (const ValidationError& e) {
                throw ValidationError("class " + std::to_string(c) + ": " + e.what());
            }
        }
    }
    return model;
}

double score(const MetricModel& model, const Eigen::Ref<const Vector>& h) {
    if (h.size() != model.dim) {
        throw ValidationError("dimension mismatch: query has d=" + std::to_string(h.size()) +
                              ", model expects d=" + std::to_string(model.dim));
    }
    if (!h.allFinite()) {
        throw ValidationError("non-finite query feature");
    }
    const Vector x = model.variant.normalized() ? project_sphere(h) : Vector(h);
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < model.num_classes; ++c) {
        const double q = quadform(x, model.anchors.row(c).transpose(), model.precision_for(c));
        best = std::min(best, q);
    }
    return best;
}

ScoreSet score_batch(const MetricModel& model, const Matrix& rows, std::string source) {
    ScoreSet out;
    out.detector = model.variant.name();
    out.source = std::move(source);
    out.scores.resize(static_cast<std::size_t>(rows.rows()));
    for (Index i = 0; i < rows.rows(); ++i) {
        try {
            out.scores[static_cast<std::size_t>(i)] = score(model, rows.row(i).transpose());
        } catch (const ValidationError& e) {
            throw ValidationError("row " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

double energy(const Eigen::Ref<const Vector>& logits, double temperature) {
    require_temperature(temperature);
    require_finite_logits(logits);
    const Vector scaled = logits / temperature;
    const double top = scaled.maxCoeff();
    const double lse = top + std::log((scaled.array() - top).exp().sum());
    return -temperature * lse;
}

double msp(const Eigen::Ref<const Vector>& logits) {
    require_finite_logits(logits);
    const double top = logits.maxCoeff();
    // max softmax = exp(0) / sum exp(f - top)
    return -1.0 / (logits.array() - top).exp().sum();
}

ScoreSet energy_batch(const Matrix& logits, double temperature, std::string source) {
    ScoreSet out{{}, "energy", std::move(source)};
    out.scores.resize(static_cast<std::size_t>(logits.rows()));
    for (Index i = 0; i < logits.rows(); ++i) {
        out.scores[static_cast<std::size_t>(i)] = energy(logits.row(i).transpose(), temperature);
    }
    return out;
}

ScoreSet msp_batch(const Matrix& logits, std::string source) {
    ScoreSet out{{}, "msp", std::move(source)};
    out.scores.resize(static_cast<std::size_t>(logits.rows()));
    for (Index i = 0; i < logits.rows(); ++i) {
        out.scores[static_cast<std::size_t>(i)] = msp(logits.row(i).transpose());
    }
    return out;
}

void save_model(const MetricModel& model, const fs::path& dir) {
    io::ensure_directory(dir);
    json lambdas = json::array();
    for (const auto& p : model.precisions) lambdas.push_back(p.lambda);
    json meta = {
        {"variant", model.variant.name()},
        {"feature", model.variant.normalized() ? "hyperspherical" : "raw"},
        {"covariance", model.variant.pooled() ? "pooled" : "class-specific"},
        {"lambda_rel", model.ridge.value},
        {"ridge_mode", ridge_mode_name(model.ridge.mode)},
        {"lambdas", lambdas},
        {"d", model.dim},
        {"k", model.num_classes},
        {"orientation", kOrientation},
    };
    io::write_file_atomic(dir / "metric.json", meta.dump(2) + "\n");

    RowMajor anchors = model.anchors;
    io::write_file_atomic(dir / "anchors.bin",
                          io::encode_f64le({anchors.data(), static_cast<std::size_t>(anchors.size())}));

    std::vector<double> factors;
    factors.reserve(model.precisions.size() * static_cast<std::size_t>(model.dim * model.dim));
    for (const auto& p : model.precisions) {
        RowMajor l = p.lower.triangularView<Eigen::Lower>().toDenseMatrix();
        factors.insert(factors.end(), l.data(), l.data() + l.size());
    }
    io::write_file_atomic(dir / "precision_l.bin", io::encode_f64le(factors));
}

MetricModel load_model(const fs::path& dir) {
    if (!fs::exists(dir / "metric.json")) {
        throw IoError("model not found: " + (dir / "metric.json").string());
    }
    MetricModel model;
    std::vector<double> lambdas;
    try {
        const json meta = json::parse(io::read_file(dir / "metric.json"));
        const auto variant = Variant::parse(meta.at("variant").get<std::string>());
        if (!variant) throw ValidationError("unknown variant in metric.json");
        model.variant = *variant;
        model.ridge.value = meta.at("lambda_rel").get<double>();
        model.ridge.mode =
            meta.value("ridge_mode", std::string("relative")) == "absolute" ? RidgeMode::absolute
                                                                            : RidgeMode::relative;
        model.dim = meta.at("d").get<Index>();
        model.num_classes = meta.at("k").get<int>();
        if (meta.contains("lambdas")) lambdas = meta["lambdas"].get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ValidationError("malformed metric.json: " + std::string(e.what()));
    }
    const Index d = model.dim;
    const Index k = model.num_classes;
    if (d <= 0 || k <= 0) throw ValidationError("metric.json dimensions must be positive");

    const auto anchors = io::decode_f64le(io::read_file(dir / "anchors.bin"));
    if (static_cast<Index>(anchors.size()) != k * d) {
        throw ValidationError("blob length mismatch in anchors.bin");
    }
    model.anchors = Eigen::Map<const RowMajor>(anchors.data(), k, d);

    const auto factors = io::decode_f64le(io::read_file(dir / "precision_l.bin"));
    const Index n_factors = model.variant.pooled() ? 1 : k;
    if (static_cast<Index>(factors.size()) != n_factors * d * d) {
        throw ValidationError("blob length mismatch in precision_l.bin");
    }
    for (Index f = 0; f < n_factors; ++f) {
        PrecisionFactor p;
        p.lower = Eigen::Map<const RowMajor>(factors.data() + f * d * d, d, d);
        p.lambda = static_cast<std::size_t>(f) < lambdas.size() ? lambdas[static_cast<std::size_t>(f)] : 0.0;
        if (!p.lower.allFinite() || (p.lower.diagonal().array() <= 0.0).any()) {
            throw ValidationError("precision factor " + std::to_string(f) + " is not positive definite");
        }
        model.precisions.push_back(std::move(p));
    }
    return model;
}

}  // namespace hpm
