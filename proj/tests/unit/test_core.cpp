#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hamflow/mixture.hpp"
#include "hamflow/rng.hpp"

using namespace hamflow;

namespace {

double normal_pdf(double x, double mean, double var) {
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

Vec point(std::initializer_list<double> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

GaussianMixture symmetric(double mu) {
    return GaussianMixture({0.5, 0.5}, {point({-mu}), point({mu})}, {1.0, 1.0});
}

GaussianMixture mixture_2d() {
    return GaussianMixture({0.3, 0.7}, {point({-1.0, 0.5}), point({1.5, -0.5})}, {0.5, 1.2});
}

}  // namespace

TEST_CASE("log density of the standard normal at its mode") {
    const auto m = GaussianMixture::standard_normal(1);
    CHECK(m.log_density(point({0.0})) == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
}

TEST_CASE("log density of the bimodal mixture matches direct summation") {
    const auto m = GaussianMixture::bimodal_1d();
    const double expected = std::log(0.4 * normal_pdf(0.0, 0.0, 1.0) + 0.6 * normal_pdf(4.0, 0.0, 1.0));
    CHECK(m.log_density(point({-2.0})) == doctest::Approx(expected).epsilon(1e-14));
    for (double x = -6.0; x <= 6.0; x += 0.75) {
        const double direct = 0.4 * normal_pdf(x, -2.0, 1.0) + 0.6 * normal_pdf(x, 2.0, 1.0);
        CHECK(std::exp(m.log_density(point({x}))) == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("2D density equals the weighted sum of isotropic component pdfs") {
    const auto m = mixture_2d();
    const Vec x = point({0.3, -0.2});
    double direct = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double var = m.variances()[i];
        direct += m.weights()[i] * normal_pdf(x(0), m.means()[i](0), var) * normal_pdf(x(1), m.means()[i](1), var);
    }
    CHECK(std::exp(m.log_density(x)) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("log density stays finite far in the tails") {
    const auto m = GaussianMixture::bimodal_1d();
    const double lp = m.log_density(point({60.0}));
    CHECK(std::isfinite(lp));
    CHECK(m.score(point({60.0}))(0) == doctest::Approx(-58.0).epsilon(1e-12));
}

TEST_CASE("score closed forms") {
    CHECK(GaussianMixture::standard_normal(1).score(point({2.0}))(0) == doctest::Approx(-2.0));
    CHECK(std::abs(symmetric(1.7).score(point({0.0}))(0)) < 1e-15);
}

TEST_CASE("score matches central differences of the log density") {
    const double h = 1e-4;
    const auto m1 = GaussianMixture::bimodal_1d();
    for (double x = -5.0; x <= 5.0; x += 0.25) {
        const double fd = (m1.log_density(point({x + h})) - m1.log_density(point({x - h}))) / (2.0 * h);
        CHECK(std::abs(m1.score(point({x}))(0) - fd) <= 1e-6);
    }
    const auto m2 = mixture_2d();
    Rng rng(4);
    for (int k = 0; k < 20; ++k) {
        const Vec x = 2.0 * rng.normal_matrix(2, 1).col(0);
        const Vec s = m2.score(x);
        for (int j = 0; j < 2; ++j) {
            Vec xp = x, xm = x;
            xp(j) += h;
            xm(j) -= h;
            CHECK(std::abs(s(j) - (m2.log_density(xp) - m2.log_density(xm)) / (2.0 * h)) <= 1e-6);
        }
    }
}

TEST_CASE("Hessian and score divergence match differences of the score") {
    const auto m = mixture_2d();
    const double h = 1e-5;
    const Vec x = point({0.4, 0.1});
    const Mat hess = m.log_density_hessian(x);
    for (int j = 0; j < 2; ++j) {
        Vec xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        const Vec col = (m.score(xp) - m.score(xm)) / (2.0 * h);
        CHECK((hess.col(j) - col).cwiseAbs().maxCoeff() <= 1e-7);
    }
    CHECK(m.score_divergence(x) == doctest::Approx(hess.trace()).epsilon(1e-12));
}

TEST_CASE("posterior responsibilities") {
    CHECK(GaussianMixture::standard_normal(2).posterior(point({0.3, 1.0}))(0) == doctest::Approx(1.0));
    const Vec r = symmetric(1.0).posterior(point({0.0}));
    CHECK(r(0) == doctest::Approx(0.5));
    CHECK(r(1) == doctest::Approx(0.5));

    const auto m = GaussianMixture::bimodal_1d();
    const double a = 0.4 * normal_pdf(-2.0, -2.0, 1.0);
    const double b = 0.6 * normal_pdf(-2.0, 2.0, 1.0);
    const Vec p = m.posterior(point({-2.0}));
    CHECK(p(0) == doctest::Approx(a / (a + b)).epsilon(1e-13));
    CHECK(p(1) == doctest::Approx(b / (a + b)).epsilon(1e-13));

    Rng rng(2);
    for (int k = 0; k < 50; ++k) {
        const Vec q = mixture_2d().posterior(3.0 * rng.normal_matrix(2, 1).col(0));
        CHECK(std::abs(q.sum() - 1.0) <= 1e-12);
    }
}

TEST_CASE("sample moments") {
    Rng rng(11);
    const Mat z = GaussianMixture::standard_normal(1).sample(rng, 100000);
    CHECK(std::abs(z.mean()) <= 0.02);

    const Mat b = GaussianMixture::bimodal_1d().sample(rng, 100000);
    CHECK(std::abs(b.mean() - 0.4) <= 0.03);

    const GaussianMixture tight({1.0}, {point({3.0, -1.0})}, {1e-8});
    const Mat t = tight.sample(rng, 1000);
    CHECK((t.rowwise() - point({3.0, -1.0}).transpose()).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("analytic moments") {
    const auto m = GaussianMixture::bimodal_1d();
    CHECK(m.mean()(0) == doctest::Approx(0.4));
    // E x^2 = sum w (mu^2 + var) = 5; Var = 5 - 0.16.
    CHECK(m.second_moment() == doctest::Approx(5.0));
    CHECK(m.coordinate_variance()(0) == doctest::Approx(4.84));
}

TEST_CASE("smoothed and pushed mixtures") {
    const auto m = GaussianMixture::bimodal_1d();
    const auto s = m.smoothed(0.5);
    CHECK(s.variances()[1] == doctest::Approx(1.25));
    const auto p = m.linear_push(0.5, 2.0);
    CHECK(p.means()[0](0) == doctest::Approx(-1.0));
    CHECK(p.variances()[0] == doctest::Approx(4.25));
}

TEST_CASE("mixture validation") {
    CHECK_THROWS_AS(GaussianMixture({0.5, 0.6}, {point({0.0}), point({1.0})}, {1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(GaussianMixture({-0.5, 1.5}, {point({0.0}), point({1.0})}, {1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(GaussianMixture({1.0}, {point({0.0})}, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(GaussianMixture({0.5, 0.5}, {point({0.0}), point({1.0, 2.0})}, {1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(GaussianMixture({}, {}, {}), std::invalid_argument);
    CHECK_THROWS_AS(GaussianMixture::bimodal_1d().log_density(point({0.0, 1.0})), std::invalid_argument);
    CHECK_THROWS_AS(GaussianMixture::bimodal_1d().score(point({0.0, 1.0})), std::invalid_argument);
}

TEST_CASE("rng replays bit-exactly and streams differ") {
    Rng a(42), b(42), c(42, 1);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng d(42);
    CHECK(d.next_u64() != c.next_u64());

    Rng s1(7), s2(7);
    const Mat m1 = GaussianMixture::bimodal_1d().sample(s1, 1000);
    const Mat m2 = GaussianMixture::bimodal_1d().sample(s2, 1000);
    CHECK(m1 == m2);
}

TEST_CASE("rng uniform and normal ranges") {
    Rng rng(3);
    double lo = 1.0, hi = 0.0, sum = 0.0, sq = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(lo >= 0.0);
    CHECK(hi < 1.0);
    CHECK(std::abs(sum / 1e5) <= 0.02);
    CHECK(std::abs(sq / 1e5 - 1.0) <= 0.03);
}

TEST_CASE("categorical never picks zero-weight components") {
    Rng rng(9);
    std::vector<int> counts(3, 0);
    for (int i = 0; i < 30000; ++i) ++counts[rng.categorical({0.25, 0.0, 0.75})];
    CHECK(counts[1] == 0);
    CHECK(std::abs(counts[0] / 30000.0 - 0.25) <= 0.015);
}

TEST_CASE("mean estimate") {
    Vec v(4);
    v << 1.0, 2.0, 3.0, 4.0;
    const Estimate e = mean_estimate(v);
    CHECK(e.value == doctest::Approx(2.5));
    CHECK(e.std_error == doctest::Approx(std::sqrt((5.0 / 3.0) / 4.0)));
}
