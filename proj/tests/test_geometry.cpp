#include "doctest.h"

#include "hpm/error.hpp"
#include "hpm/geometry.hpp"
#include "hpm/synth.hpp"
#include "oracles.hpp"

using doctest::Approx;
using hpm::FeatureBank;
using hpm::Matrix;
using hpm::Vector;
using oracle::contains;
using oracle::error_of;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

FeatureBank bank_of(std::initializer_list<std::initializer_list<double>> rows, std::vector<int> labels, int k) {
    Matrix f(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : rows) f.row(i++) = vec(r).transpose();
    return hpm::make_bank(f, std::move(labels), k);
}

hpm::CovarianceEstimate estimate(const Matrix& m) {
    hpm::CovarianceEstimate c;
    c.matrix = m;
    return c;
}

double rel_frob(const Matrix& a, const Matrix& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

std::vector<int> random_sizes(std::mt19937_64& rng, int k, int lo, int hi) {
    std::uniform_int_distribution<int> s(lo, hi);
    std::vector<int> sizes(static_cast<std::size_t>(k));
    for (auto& x : sizes) x = s(rng);
    return sizes;
}

}  // namespace

TEST_CASE("project_sphere examples") {
    const Vector a = hpm::project_sphere(vec({3, 4}));
    CHECK(a(0) == Approx(0.6).epsilon(1e-15));
    CHECK(a(1) == Approx(0.8).epsilon(1e-15));
    const Vector b = hpm::project_sphere(vec({0, -2}));
    CHECK(b(0) == 0.0);
    CHECK(b(1) == -1.0);
    CHECK(contains(error_of([] { hpm::project_sphere(vec({0, 0})); }), "degenerate feature"));
    CHECK_THROWS_AS(hpm::project_sphere(vec({1e-13, 0})), hpm::ValidationError);
}

TEST_CASE("project_sphere is idempotent and degree-0 homogeneous") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> logscale(-6, 6);
    for (int t = 0; t < 500; ++t) {
        const Vector h = oracle::random_vector(rng, 1 + t % 9);
        const Vector z = hpm::project_sphere(h);
        CHECK(std::abs(z.norm() - 1.0) <= 1e-12);
        CHECK((hpm::project_sphere(z) - z).norm() <= 1e-15);
        const double alpha = std::pow(10.0, logscale(rng));
        CHECK((hpm::project_sphere(alpha * h) - z).norm() <= 1e-12);
        CHECK(z.dot(h) > 0);
    }
}

TEST_CASE("project_rows names the row") {
    Matrix m(2, 2);
    m << 1, 1, 0, 0;
    CHECK(contains(error_of([&] { hpm::project_rows(m); }), "row 1"));
}

TEST_CASE("class_means examples") {
    auto raw = bank_of({{1, 0}, {0, 1}}, {0, 0}, 1);
    const auto m = hpm::class_means(raw, false);
    CHECK(m.means(0, 0) == 0.5);
    CHECK(m.means(0, 1) == 0.5);
    CHECK(m.counts == std::vector<std::int64_t>{2});

    auto scaled = bank_of({{2, 0}, {0, 2}}, {0, 0}, 1);
    const auto z = hpm::class_means(scaled, true);
    CHECK(z.normalized);
    CHECK(z.means(0, 0) == 0.5);
    CHECK(z.means(0, 1) == 0.5);

    auto single = bank_of({{3, 4}}, {0}, 1);
    const auto s = hpm::class_means(single, true);
    CHECK(s.means(0, 0) == Approx(0.6));
    CHECK(s.means(0, 1) == Approx(0.8));

    auto missing = bank_of({{1, 2}, {3, 4}}, {0, 0}, 3);
    const auto msg = error_of([&] { hpm::class_means(missing, false); });
    CHECK(contains(msg, "empty class 1"));
}

TEST_CASE("normalized means lie inside the unit ball") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
        const auto bank = oracle::random_bank(rng, random_sizes(rng, 4, 1, 6), 5, 0.5);
        const auto z = hpm::class_means(bank, true);
        for (Eigen::Index c = 0; c < z.means.rows(); ++c) CHECK(z.means.row(c).norm() <= 1.0 + 1e-15);
    }
}

TEST_CASE("class_covariance examples") {
    auto b = bank_of({{0, 1}, {0, -1}}, {0, 0}, 1);
    const auto c = hpm::class_covariance(b, 0, false);
    Matrix expect(2, 2);
    expect << 0, 0, 0, 2;
    CHECK(c.matrix == expect);
    CHECK(c.dof == 1.0);
    CHECK(c.kind == hpm::CovarianceKind::class_specific);
    CHECK(c.class_id == 0);
    CHECK(c.ridge == 0.0);

    auto same = bank_of({{1.5, -2}, {1.5, -2}}, {0, 0}, 1);
    CHECK(hpm::class_covariance(same, 0, false).matrix == Matrix::Zero(2, 2));

    auto one = bank_of({{1, 2}, {3, 4}}, {0, 1}, 2);
    CHECK(contains(error_of([&] { hpm::class_covariance(one, 1, false); }), "insufficient class support"));
}

TEST_CASE("class_covariance matches the two-pass oracle and obeys the rank bound") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 200; ++t) {
        std::uniform_int_distribution<int> nn(2, 12), dd(1, 10);
        const int n = nn(rng);
        const auto bank = oracle::random_bank(rng, {n}, dd(rng));
        for (bool normalized : {false, true}) {
            const auto est = hpm::class_covariance(bank, 0, normalized);
            const Matrix ref = oracle::covariance(oracle::class_rows(bank, 0, normalized));
            CHECK(rel_frob(est.matrix, ref) <= 1e-12);
            CHECK(oracle::svd_rank(est.matrix) <= n - 1);
            CHECK((est.matrix - est.matrix.transpose()).norm() == 0.0);
        }
    }
}

TEST_CASE("pooled_covariance examples") {
    auto zero = bank_of({{1, 0}, {1, 0}, {0, 2}, {0, 2}}, {0, 0, 1, 1}, 2);
    const auto z = hpm::pooled_covariance(zero, hpm::class_means(zero, false));
    CHECK(z.matrix == Matrix::Zero(2, 2));
    CHECK(z.dof == 2.0);
    CHECK(z.kind == hpm::CovarianceKind::pooled);

    std::mt19937_64 rng(8);
    const auto five = oracle::random_bank(rng, {2, 2}, 5);
    const auto p5 = hpm::pooled_covariance(five, hpm::class_means(five, true));
    CHECK(oracle::svd_rank(p5.matrix) <= 2);

    // class 0 residuals +-(1,0), class 1 residuals +-(0,1)
    auto cross = bank_of({{1, 0}, {-1, 0}, {5, 6}, {5, 4}}, {0, 0, 1, 1}, 2);
    const auto pc = hpm::pooled_covariance(cross, hpm::class_means(cross, false));
    Matrix expect(2, 2);
    expect << 1, 0, 0, 1;  // (2 e1e1' + 2 e2e2') / (4 - 2)
    CHECK(rel_frob(pc.matrix, expect) <= 1e-15);
    CHECK(oracle::svd_rank(pc.matrix) == 2);

    auto too_few = bank_of({{1, 0}, {0, 1}}, {0, 1}, 2);
    CHECK(contains(error_of([&] { hpm::pooled_covariance(too_few, hpm::class_means(too_few, false)); }), "N > K"));
}

TEST_CASE("pooled covariance range equals the stacked-residual span") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 200; ++t) {
        std::uniform_int_distribution<int> kk(1, 5), dd(1, 20);
        const int k = kk(rng);
        const auto bank = oracle::random_bank(rng, random_sizes(rng, k, 2, 6), dd(rng));
        const auto pooled = hpm::pooled_covariance(bank, hpm::class_means(bank, true));
        CHECK(oracle::svd_rank(pooled.matrix) == oracle::svd_rank(oracle::stacked_residuals(bank, true)));
    }
}

TEST_CASE("pooled covariance is the dof-weighted combination of class covariances") {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 100; ++t) {
        std::uniform_int_distribution<int> kk(1, 6), dd(1, 12);
        const int k = kk(rng);
        const auto sizes = random_sizes(rng, k, 2, 9);
        const auto bank = oracle::random_bank(rng, sizes, dd(rng));
        int n = 0;
        for (int s : sizes) n += s;
        for (bool normalized : {true, false}) {
            const auto pooled = hpm::pooled_covariance(bank, hpm::class_means(bank, normalized));
            Matrix mix = Matrix::Zero(bank.dim(), bank.dim());
            for (int c = 0; c < k; ++c) {
                const double alpha = static_cast<double>(sizes[static_cast<std::size_t>(c)] - 1) / (n - k);
                mix += alpha * oracle::covariance(oracle::class_rows(bank, c, normalized));
            }
            CHECK(rel_frob(pooled.matrix, mix) <= 1e-10);
            CHECK(pooled.dof == n - k);
        }
    }
}

TEST_CASE("covariance estimates are symmetric and PSD") {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 100; ++t) {
        const auto bank = oracle::random_bank(rng, random_sizes(rng, 3, 2, 8), 1 + t % 15);
        const auto pooled = hpm::pooled_covariance(bank, hpm::class_means(bank, true));
        Eigen::SelfAdjointEigenSolver<Matrix> es(pooled.matrix);
        const double top = es.eigenvalues().maxCoeff();
        CHECK(es.eigenvalues().minCoeff() >= -1e-8 * std::max(top, 1e-300));
        CHECK((pooled.matrix - pooled.matrix.transpose()).norm() <= 1e-10 * pooled.matrix.norm());
    }
}

TEST_CASE("estimators are bit-identical under row permutation") {
    std::mt19937_64 rng(30);
    for (int t = 0; t < 50; ++t) {
        const auto bank = oracle::random_bank(rng, random_sizes(rng, 4, 2, 7), 6);
        const auto shuffled = oracle::permuted(bank, rng);
        for (bool normalized : {false, true}) {
            const auto a = hpm::class_means(bank, normalized);
            const auto b = hpm::class_means(shuffled, normalized);
            CHECK(a.means == b.means);
            CHECK(hpm::pooled_covariance(bank, a).matrix == hpm::pooled_covariance(shuffled, b).matrix);
            CHECK(hpm::class_covariance(bank, 2, normalized).matrix ==
                  hpm::class_covariance(shuffled, 2, normalized).matrix);
        }
    }
}

TEST_CASE("ridge examples") {
    const auto z = hpm::ridge(estimate(Matrix::Zero(3, 3)), 0.01);
    CHECK(rel_frob(z.matrix, 0.01 * Matrix::Identity(3, 3)) <= 1e-15);
    CHECK(z.ridge == 0.01);

    const auto i = hpm::ridge(estimate(Matrix::Identity(4, 4)), 0.5);
    CHECK(rel_frob(i.matrix, 1.5 * Matrix::Identity(4, 4)) <= 1e-15);

    Matrix d(2, 2);
    d << 3, 0, 0, 1;
    const auto r = hpm::ridge(estimate(d), 0.1);
    CHECK(r.ridge == Approx(0.2).epsilon(1e-15));
    CHECK(r.matrix(0, 0) == Approx(3.2).epsilon(1e-15));
    CHECK(r.matrix(1, 1) == Approx(1.2).epsilon(1e-15));
    CHECK(r.matrix(0, 1) == 0.0);

    const auto a = hpm::ridge(estimate(d), 0.1, hpm::RidgeMode::absolute);
    CHECK(a.ridge == 0.1);
    CHECK(a.matrix(0, 0) == Approx(3.1));

    CHECK_THROWS_AS(hpm::ridge(estimate(d), 0.0), hpm::ValidationError);
    CHECK_THROWS_AS(hpm::ridge(estimate(d), -1.0), hpm::ValidationError);
}

TEST_CASE("factorize examples") {
    const auto i = hpm::factorize(Matrix::Identity(3, 3));
    CHECK(i.lower == Matrix::Identity(3, 3));

    Matrix d(2, 2);
    d << 4, 0, 0, 9;
    const auto f = hpm::factorize(d);
    Matrix expect(2, 2);
    expect << 2, 0, 0, 3;
    CHECK(f.lower == expect);

    Matrix s(2, 2);
    s << 2, 1, 1, 2;
    const auto g = hpm::factorize(s);
    CHECK((g.lower * g.lower.transpose() - s).norm() <= 1e-12);
    CHECK(g.lower(0, 1) == 0.0);

    Matrix bad(2, 2);
    bad << 1, 2, 2, 1;
    CHECK(contains(error_of([&] { hpm::factorize(bad); }), "factorization failed; increase ridge"));
    CHECK_THROWS_AS(hpm::factorize(Matrix::Zero(2, 2)), hpm::ValidationError);
}

TEST_CASE("ridge then factorize always succeeds") {
    std::mt19937_64 rng(40);
    std::uniform_real_distribution<double> lam(-9, 0);
    for (int t = 0; t < 200; ++t) {
        std::uniform_int_distribution<int> kk(1, 5), dd(1, 20);
        const auto bank = oracle::random_bank(rng, random_sizes(rng, kk(rng), 2, 6), dd(rng));
        const auto pooled = hpm::pooled_covariance(bank, hpm::class_means(bank, true));
        const double lambda_rel = std::pow(10.0, lam(rng));
        hpm::PrecisionFactor f;
        CHECK_NOTHROW(f = hpm::factorize(hpm::ridge(pooled, lambda_rel)));
        const Matrix target = hpm::ridge(pooled, lambda_rel).matrix;
        CHECK(rel_frob(f.lower * f.lower.transpose(), target) <= 1e-8);
    }
}

TEST_CASE("quadform examples") {
    const auto id = hpm::factorize(Matrix::Identity(2, 2));
    CHECK(hpm::quadform(vec({1, 2}), vec({1, 2}), id) == 0.0);
    CHECK(hpm::quadform(vec({0.6, -0.2}), vec({0, 0}), id) == Approx(0.4).epsilon(1e-15));

    Matrix d(2, 2);
    d << 4, 0, 0, 1;
    CHECK(hpm::quadform(vec({2, 0}), vec({0, 0}), hpm::factorize(d)) == 1.0);

    CHECK_THROWS_AS(hpm::quadform(vec({1, 2, 3}), vec({0, 0}), id), hpm::ValidationError);
}

TEST_CASE("quadform agrees with an explicit inverse") {
    std::mt19937_64 rng(50);
    for (int t = 0; t < 200; ++t) {
        const Eigen::Index d = 1 + t % 50;
        const Matrix a = oracle::random_matrix(rng, d, d);
        const Matrix sigma = a * a.transpose() + 0.1 * Matrix::Identity(d, d);
        const Vector x = oracle::random_vector(rng, d);
        const Vector mu = oracle::random_vector(rng, d);
        const double fast = hpm::quadform(x, mu, hpm::factorize(sigma));
        const double ref = oracle::quadform_inverse(x, mu, sigma);
        CHECK(std::abs(fast - ref) <= 1e-8 * std::abs(ref));

        const auto id = hpm::factorize(Matrix::Identity(d, d));
        CHECK(std::abs(hpm::quadform(x, mu, id) - (x - mu).squaredNorm()) <= 1e-12 * (x - mu).squaredNorm());
    }
}

TEST_CASE("spectrum examples") {
    const auto i = hpm::spectrum(Matrix::Identity(10, 10));
    CHECK(i.effective_rank == Approx(10.0).epsilon(1e-12));
    CHECK(i.log_condition == Approx(0.0));
    CHECK(i.eigenvalues.size() == 10);

    Matrix one = Matrix::Zero(3, 3);
    one(0, 0) = 1.0;
    const auto o = hpm::spectrum(one);
    CHECK(o.effective_rank == Approx(1.0));
    CHECK(o.log_condition == Approx(0.0));

    Matrix m = Matrix::Zero(3, 3);
    m.diagonal() << 1, 2, 1;
    const auto s = hpm::spectrum(m);
    CHECK(s.effective_rank == Approx(std::exp(1.5 * std::log(2.0))).epsilon(1e-12));
    CHECK(s.effective_rank == Approx(2.828).epsilon(1e-3));
    CHECK(s.eigenvalues(0) == Approx(2.0));
    CHECK(s.log_condition == Approx(std::log(2.0)));

    const auto z = hpm::spectrum(Matrix::Zero(4, 4));
    CHECK(z.effective_rank == 1.0);
    CHECK(z.log_condition == 0.0);
}

TEST_CASE("spectrum invariants on random covariances") {
    std::mt19937_64 rng(60);
    for (int t = 0; t < 100; ++t) {
        const Eigen::Index d = 1 + t % 20;
        const Matrix a = oracle::random_matrix(rng, d, 1 + t % 7);
        const Matrix sigma = a * a.transpose();
        const auto s = hpm::spectrum(sigma);
        CHECK(s.effective_rank >= 1.0);
        CHECK(s.effective_rank <= static_cast<double>(d) + 1e-9);
        CHECK(s.log_condition >= 0.0);
        for (Eigen::Index i = 0; i + 1 < s.eigenvalues.size(); ++i) CHECK(s.eigenvalues(i) >= s.eigenvalues(i + 1));
        CHECK(s.eigenvalues.minCoeff() >= 0.0);

        Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
        Vector eig = es.eigenvalues().cwiseMax(0.0);
        const double floor = 1e-12 * eig.maxCoeff();
        for (Eigen::Index i = 0; i < eig.size(); ++i)
            if (eig(i) <= floor) eig(i) = 0.0;
        CHECK(s.effective_rank == Approx(oracle::effective_rank(eig)).epsilon(1e-9));
    }
}

TEST_CASE("pooled hyperspherical effective rank beats every class on the seed-0 long-tail suite") {
    hpm::SynthSpec spec;
    spec.num_classes = 20;
    spec.dim = 64;
    spec.imbalance_ratio = 50.0;
    spec.n_max = 500;
    spec.radius_coupling = 1.3;
    const auto data = hpm::generate_synthetic(spec);
    const auto pooled = hpm::spectrum(hpm::pooled_covariance(data.train, hpm::class_means(data.train, true)));
    double best = 0.0;
    for (int c = 0; c < spec.num_classes; ++c)
        best = std::max(best, hpm::spectrum(hpm::class_covariance(data.train, c, true)).effective_rank);
    CHECK(pooled.effective_rank >= best);
}
