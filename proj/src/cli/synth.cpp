#include "hpm/synth.hpp"

#include <cmath>
#include <random>

#include "json.hpp"

#include "hpm/error.hpp"
#include "hpm/io.hpp"

namespace hpm {
using json = nlohmann::json;

namespace {

using Rng = std::mt19937_64;

Vector gaussian_vector(Rng& rng, Index d) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(d);
    for (Index j = 0; j < d; ++j) v(j) = normal(rng);
    return v;
}

Vector random_unit(Rng& rng, Index d) {
    for (;;) {
        Vector v = gaussian_vector(rng, d);
        const double n = v.norm();
        if (n > 1e-8) return v / n;
    }
}

// u = normalize(centre + spread * Q diag(s) eps)
Vector noisy_direction(Rng& rng, const Vector& centre, const SynthSpec& spec, const SynthGroundTruth& truth) {
    for (;;) {
        const Vector eps = gaussian_vector(rng, spec.dim);
        const Vector v = centre + spec.spread * (truth.noise_basis * truth.noise_scales.cwiseProduct(eps));
        const double n = v.norm();
        if (n > 1e-8) return v / n;
    }
}

double jittered(Rng& rng, double radius, double jitter) {
    std::normal_distribution<double> normal(0.0, 1.0);
    return radius * std::exp(jitter * normal(rng));
}

void attach_head(FeatureBank& bank, const ClassifierHead& head) {
    bank.head = head;
    bank.logits = compute_logits(head, bank.features);
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_json(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

std::string ood_kind_name(OodKind kind) {
    return kind == OodKind::shifted_gaussian ? "shifted-gaussian" : "uniform-sphere";
}

std::optional<OodKind> parse_ood_kind(std::string_view name) {
    if (name == "shifted-gaussian") return OodKind::shifted_gaussian;
    if (name == "uniform-sphere") return OodKind::uniform_sphere;
    return std::nullopt;
}

void validate_spec(const SynthSpec& spec) {
    auto fail = [](const std::string& what) { throw ValidationError("synthetic spec: " + what); };
    if (spec.num_classes < 2) fail("K must be at least 2");
    if (spec.dim < 1) fail("d must be positive");
    if (spec.n_max < 2) fail("n_max must be at least 2");
    if (!(spec.imbalance_ratio >= 1.0)) fail("imbalance_ratio must be >= 1");
    if (!(spec.radius_coupling >= 1.0)) fail("radius_coupling must be >= 1");
    if (!(spec.spread > 0.0)) fail("spread must be positive");
    if (!(spec.anisotropy >= 0.0)) fail("anisotropy must be non-negative");
    if (!(spec.radius_jitter >= 0.0)) fail("radius_jitter must be non-negative");
    if (spec.n_test_per_class < 1) fail("n_test_per_class must be positive");
    if (spec.n_ood < 1) fail("n_ood must be positive");
    if (!(spec.ood_shift >= 0.0)) fail("ood_shift must be non-negative");
    if (!(spec.head_scale > 0.0)) fail("head_scale must be positive");
}

std::vector<std::int64_t> synth_class_counts(const SynthSpec& spec) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(spec.num_classes));
    const double steps = static_cast<double>(spec.num_classes - 1);
    for (int c = 0; c < spec.num_classes; ++c) {
        const double n = spec.n_max * std::pow(spec.imbalance_ratio, -static_cast<double>(c) / steps);
        counts[static_cast<std::size_t>(c)] = std::max<std::int64_t>(2, std::llround(n));
    }
    return counts;
}

std::vector<double> synth_class_radii(const SynthSpec& spec) {
    std::vector<double> radii(static_cast<std::size_t>(spec.num_classes), 1.0);
    if (spec.imbalance_ratio > 1.0) {
        const double steps = static_cast<double>(spec.num_classes - 1);
        for (int c = 0; c < spec.num_classes; ++c) {
            radii[static_cast<std::size_t>(c)] = 1.0 + (spec.radius_coupling - 1.0) * (c / steps);
        }
    }
    return radii;
}

SynthData generate_synthetic(const SynthSpec& spec) {
    validate_spec(spec);
    Rng rng(spec.seed);
    const Index d = spec.dim;
    const int k = spec.num_classes;

    SynthData data;
    auto& truth = data.truth;
    truth.class_directions.resize(k, d);
    for (int c = 0; c < k; ++c) {
        truth.class_directions.row(c) = random_unit(rng, d).transpose();
    }
    Matrix g(d, d);
    for (Index j = 0; j < d; ++j) g.col(j) = gaussian_vector(rng, d);
    truth.noise_basis = Eigen::HouseholderQR<Matrix>(g).householderQ();
    truth.noise_scales.resize(d);
    for (Index j = 0; j < d; ++j) {
        const double t = d > 1 ? static_cast<double>(j) / static_cast<double>(d - 1) : 0.0;
        truth.noise_scales(j) = std::exp(-spec.anisotropy * t);
    }
    truth.noise_scales /= truth.noise_scales.norm();
    const auto radii = synth_class_radii(spec);
    truth.class_radii = Eigen::Map<const Vector>(radii.data(), k);

    std::uniform_int_distribution<int> pick_class(0, k - 1);
    truth.ood_anchor_class = pick_class(rng);
    const Vector offset = random_unit(rng, d);
    truth.ood_direction =
        (truth.class_directions.row(truth.ood_anchor_class).transpose() + spec.ood_shift * offset).normalized();

    auto draw_bank = [&](const std::vector<std::int64_t>& per_class) {
        Index n = 0;
        for (auto c : per_class) n += c;
        Matrix features(n, d);
        std::vector<int> labels;
        labels.reserve(static_cast<std::size_t>(n));
        Index row = 0;
        for (int c = 0; c < k; ++c) {
            const Vector centre = truth.class_directions.row(c).transpose();
            for (std::int64_t i = 0; i < per_class[static_cast<std::size_t>(c)]; ++i) {
                const Vector u = noisy_direction(rng, centre, spec, truth);
                features.row(row++) = jittered(rng, truth.class_radii(c), spec.radius_jitter) * u.transpose();
                labels.push_back(c);
            }
        }
        return make_bank(std::move(features), std::move(labels), k);
    };

    data.train = draw_bank(synth_class_counts(spec));
    data.train.name = "id_train";
    data.test = draw_bank(std::vector<std::int64_t>(static_cast<std::size_t>(k), spec.n_test_per_class));
    data.test.name = "id_test";

    Matrix ood(spec.n_ood, d);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Index i = 0; i < spec.n_ood; ++i) {
        const Vector u = spec.ood_kind == OodKind::shifted_gaussian
                             ? noisy_direction(rng, truth.ood_direction, spec, truth)
                             : random_unit(rng, d);
        const double radius = 1.0 + (spec.radius_coupling - 1.0) * unit(rng);
        ood.row(i) = jittered(rng, radius, spec.radius_jitter) * u.transpose();
    }
    // OOD labels carry no meaning; they are zero so the bank keeps the ID head shape.
    data.ood = make_bank(std::move(ood), std::vector<int>(static_cast<std::size_t>(spec.n_ood), 0), k);
    data.ood.name = ood_kind_name(spec.ood_kind);

    ClassifierHead head;
    head.weights = spec.head_scale * truth.class_directions;
    head.bias = Vector::Zero(k);
    attach_head(data.train, head);
    attach_head(data.test, head);
    attach_head(data.ood, head);
    return data;
}

Matrix sample_class(const SynthSpec& spec, const SynthGroundTruth& truth, int c, Index n, std::uint64_t seed) {
    Rng rng(seed);
    Matrix out(n, spec.dim);
    const Vector centre = truth.class_directions.row(c).transpose();
    for (Index i = 0; i < n; ++i) {
        const Vector u = noisy_direction(rng, centre, spec, truth);
        out.row(i) = jittered(rng, truth.class_radii(c), spec.radius_jitter) * u.transpose();
    }
    return out;
}

void write_synthetic(const SynthData& data, const SynthSpec& spec, const std::filesystem::path& out) {
    io::ensure_directory(out);
    save_bank(data.train, out / "id_train");
    save_bank(data.test, out / "id_test");
    save_bank(data.ood, out / "ood" / ood_kind_name(spec.ood_kind));

    json spec_json = {
        {"num_classes", spec.num_classes},
        {"dim", spec.dim},
        {"n_max", spec.n_max},
        {"imbalance_ratio", spec.imbalance_ratio},
        {"radius_coupling", spec.radius_coupling},
        {"spread", spec.spread},
        {"anisotropy", spec.anisotropy},
        {"radius_jitter", spec.radius_jitter},
        {"n_test_per_class", spec.n_test_per_class},
        {"n_ood", spec.n_ood},
        {"ood_kind", ood_kind_name(spec.ood_kind)},
        {"ood_shift", spec.ood_shift},
        {"head_scale", spec.head_scale},
        {"seed", spec.seed},
    };
    io::write_file_atomic(out / "synth_spec.json", spec_json.dump(2) + "\n");

    const auto& t = data.truth;
    json truth = {
        {"class_counts", synth_class_counts(spec)},
        {"class_radii", vector_json(t.class_radii)},
        {"class_directions", matrix_json(t.class_directions)},
        {"noise_scales", vector_json(t.noise_scales)},
        {"ood_direction", vector_json(t.ood_direction)},
        {"ood_anchor_class", t.ood_anchor_class},
    };
    io::write_file_atomic(out / "ground_truth.json", truth.dump(2) + "\n");
}

}  // namespace hpm
