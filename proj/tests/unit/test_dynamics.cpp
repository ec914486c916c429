#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hamflow/dynamics.hpp"
#include "hamflow/metrics.hpp"

using namespace hamflow;

namespace {

Vec vec(std::initializer_list<double> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

double max_gap(const PhaseState& a, const PhaseState& b) {
    return std::max((a.x - b.x).cwiseAbs().maxCoeff(), (a.v - b.v).cwiseAbs().maxCoeff());
}

/// Largest |H(z_t) - H(z_0)| along a leapfrog path over [0, 1] with n steps.
double energy_drift(const ForceField& f, const PhaseState& s, int n) {
    const double h0 = energy(f, s);
    PhaseState cur = s;
    double worst = 0.0;
    for (int k = 0; k < n; ++k) {
        cur = leapfrog(f, cur, 0.0, 1.0 / n, 1);
        worst = std::max(worst, std::abs(energy(f, cur) - h0));
    }
    return worst;
}

GaussianMixture mixture_2d() {
    return GaussianMixture({0.3, 0.7}, {vec({-1.0, 0.5}), vec({1.5, -0.5})}, {0.5, 1.2});
}

}  // namespace

TEST_CASE("zero flow") {
    const PhaseState s{vec({0.3, -1.0}), vec({2.0, 0.5})};
    CHECK(max_gap(flow_zero(s, 0.0), s) == 0.0);
    const PhaseState e = flow_zero({vec({0.0, 0.0}), vec({1.0, 0.0})}, 3.0);
    CHECK(e.x == vec({3.0, 0.0}));
    CHECK(e.v == vec({1.0, 0.0}));
    CHECK(max_gap(leapfrog(ZeroForce{}, s, 0.0, 2.5, 7), flow_zero(s, 2.5)) <= 1e-15);
}

TEST_CASE("oscillation flow") {
    const double alpha = 1.7;
    const PhaseState s{vec({0.8, -0.3}), vec({-1.1, 0.4})};
    CHECK(max_gap(flow_oscillation(s, 0.0, alpha), s) == 0.0);

    const PhaseState q = flow_oscillation(s, std::numbers::pi / (2.0 * alpha), alpha);
    CHECK((q.x - s.v / alpha).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((q.v + alpha * s.x).cwiseAbs().maxCoeff() <= 1e-15);

    const OscillationForce f{alpha};
    const double h0 = energy(f, s);
    for (double t = 0.1; t < 5.0; t += 0.37) CHECK(std::abs(energy(f, flow_oscillation(s, t, alpha)) - h0) <= 1e-12);

    CHECK(max_gap(flow_oscillation(s, 2.0 * std::numbers::pi, 1.0), s) <= 1e-12);
    CHECK_THROWS_AS(flow_oscillation(s, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("leapfrog with the harmonic force tracks the analytic rotation") {
    const PhaseState s{vec({0.7}), vec({-0.2})};
    const PhaseState lf = leapfrog(OscillationForce{1.3}, s, 0.0, 1.0, 1000);
    CHECK(max_gap(lf, flow_oscillation(s, 1.0, 1.3)) <= 1e-5);
}

TEST_CASE("energy values") {
    CHECK(energy(ZeroForce{}, {vec({4.0}), vec({0.0})}) == 0.0);
    CHECK(energy(OscillationForce{1.0}, {vec({1.0, 0.0}), vec({0.0, 0.0})}) == doctest::Approx(0.5));
    const auto m = GaussianMixture::standard_normal(1);
    CHECK(energy(ScoreForce{m}, {vec({0.0}), vec({1.0})}) == doctest::Approx(0.5 + 0.5 * std::log(2.0 * std::numbers::pi)));
    CHECK_THROWS_AS(energy(LearnedForce{Mlp(MlpSpec{1, 1, {4}, false}), false}, {vec({0.0}), vec({1.0})}),
                    std::domain_error);
}

TEST_CASE("leapfrog energy drift is second order") {
    const ForceField f = ScoreForce{GaussianMixture::standard_normal(1)};
    const PhaseState s{vec({1.2}), vec({-0.7})};
    const double coarse = energy_drift(f, s, 20);
    const double fine = energy_drift(f, s, 40);
    CHECK(std::log2(coarse / fine) >= 1.9);

    const ForceField g = ScoreForce{GaussianMixture::bimodal_1d()};
    const PhaseState u{vec({-0.4}), vec({1.5})};
    CHECK(std::log2(energy_drift(g, u, 40) / energy_drift(g, u, 80)) >= 1.9);
}

TEST_CASE("volume preservation") {
    const PhaseState s1{vec({0.3}), vec({-0.9})};
    CHECK(std::abs(volume_check(ZeroForce{}, s1, 1.3, 4) - 1.0) <= 1e-10);
    const auto rot = [](const PhaseState& p) { return flow_oscillation(p, 0.9, 1.4); };
    CHECK(std::abs(jacobian_determinant(rot, s1, 1e-5) - 1.0) <= 1e-8);
    CHECK(std::abs(volume_check(ScoreForce{GaussianMixture::bimodal_1d()}, s1, 1.0, 5) - 1.0) <= 1e-6);
    const PhaseState s2{vec({0.3, -0.2}), vec({1.0, 0.4})};
    CHECK(std::abs(volume_check(ScoreForce{mixture_2d()}, s2, 1.0, 5) - 1.0) <= 1e-6);
    Rng rng(3);
    const Mlp net(MlpSpec{2, 2, {8}, false}, rng);
    Mlp busy = net;
    busy.set_params(0.5 * rng.normal_matrix(static_cast<Eigen::Index>(net.param_count()), 1).col(0));
    CHECK(std::abs(volume_check(LearnedForce{busy, false}, s2, 1.0, 5) - 1.0) <= 1e-6);
    CHECK_THROWS_AS(volume_check(ZeroForce{}, {Vec::Zero(5), Vec::Zero(5)}, 1.0, 2), std::invalid_argument);
}

TEST_CASE("leapfrog is time reversible") {
    const ForceField f = ScoreForce{mixture_2d()};
    const PhaseState s{vec({0.5, 1.0}), vec({-0.3, 0.8})};
    const PhaseState fwd = leapfrog(f, s, 0.0, 1.0, 10);
    const PhaseState back = leapfrog(f, fwd, 1.0, 0.0, 10);
    CHECK(max_gap(back, s) <= 1e-10);
}

TEST_CASE("divergence guard reports the step") {
    const PhaseState s{vec({1.0}), vec({0.0})};
    try {
        leapfrog(OscillationForce{100.0}, s, 0.0, 5.0, 5);
        FAIL("expected divergence");
    } catch (const DivergedError& e) {
        CHECK(e.step() >= 0);
        CHECK(e.step() < 5);
    }
}

TEST_CASE("time-dependent learned force kicks at the midpoint time") {
    Rng rng(5);
    Mlp net(MlpSpec{1, 1, {4}, true, 2});
    net.set_params(0.5 * rng.normal_matrix(static_cast<Eigen::Index>(net.param_count()), 1).col(0));
    const PhaseState s{vec({0.4}), vec({0.3})};
    const PhaseState out = leapfrog(LearnedForce{net, true}, s, 0.2, 0.6, 1);
    const double h = 0.4, tm = 0.4;
    const double v_half = 0.3 + 0.5 * h * net.forward(vec({0.4}), tm)(0);
    const double x1 = 0.4 + h * v_half;
    const double v1 = v_half + 0.5 * h * net.forward(vec({x1}), tm)(0);
    CHECK(out.x(0) == doctest::Approx(x1).epsilon(1e-14));
    CHECK(out.v(0) == doctest::Approx(v1).epsilon(1e-14));
}

TEST_CASE("taped leapfrog reproduces the plain integrator") {
    Rng rng(6);
    const auto m = mixture_2d();
    const Mat x0 = rng.normal_matrix(6, 2);
    const Mat v0 = rng.normal_matrix(6, 2);
    const Vec t1 = rng.uniform_vector(6, 0.1, 1.0);
    const PhaseBatch plain = leapfrog(ScoreForce{m}, PhaseBatch{x0, v0}, Vec::Zero(6), t1, 5);
    Tape tape;
    const TapedForce f = bind_force(tape, ScoreForce{m});
    const TapedPhase end = leapfrog(tape, f, {tape.leaf(x0), tape.leaf(v0)}, Vec::Zero(6), t1, 5);
    CHECK((plain.x - end.x.value()).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((plain.v - end.v.value()).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("start-state gradient through a score-force trajectory") {
    const auto m = GaussianMixture::bimodal_1d();
    Mat x0(1, 1), v0(1, 1);
    x0 << 0.3;
    v0 << -0.6;
    const Vec t1 = Vec::Constant(1, 0.8);
    const auto endpoint = [&](double x) {
        return leapfrog(ScoreForce{m}, PhaseState{vec({x}), vec({-0.6})}, 0.0, 0.8, 5).x(0);
    };
    Tape tape;
    Var xv = tape.leaf(x0);
    const TapedPhase end = leapfrog(tape, bind_force(tape, ScoreForce{m}), {xv, tape.leaf(v0)}, Vec::Zero(1), t1, 5);
    tape.backward(tape.sum(end.x));
    const double h = 1e-5;
    const double fd = (endpoint(0.3 + h) - endpoint(0.3 - h)) / (2.0 * h);
    CHECK(xv.grad()(0, 0) == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("reflection flow") {
    const Box unit{vec({0.0}), vec({1.0})};
    const PhaseState s{vec({0.5}), vec({1.0})};
    const PhaseState r = flow_reflection(s, 1.0, unit);
    CHECK(r.x(0) == doctest::Approx(0.5));
    CHECK(r.v(0) == -1.0);

    const Box box{vec({-1.0, -2.0}), vec({1.0, 2.0})};
    const PhaseState q{vec({0.1, 0.3}), vec({0.5, -0.2})};
    CHECK(max_gap(flow_reflection(q, 0.5, box), flow_zero(q, 0.5)) <= 1e-15);
    CHECK_THROWS_AS(flow_reflection({vec({1.5, 0.0}), vec({0.0, 0.0})}, 1.0, box), std::invalid_argument);

    // Two full bounces bring the particle back with its original velocity.
    const PhaseState w = flow_reflection({vec({0.25}), vec({-1.0})}, 2.0, unit);
    CHECK(w.x(0) == doctest::Approx(0.25));
    CHECK(w.v(0) == -1.0);
}

TEST_CASE("reflected marginal approaches uniform") {
    Rng rng(10);
    const Box unit{vec({0.0}), vec({1.0})};
    const std::size_t n = 100000;
    PhaseBatch start{0.5 + 0.1 * rng.normal_matrix(n, 1).array(), rng.normal_matrix(n, 1)};
    start.x = start.x.cwiseMax(0.0).cwiseMin(1.0);
    const PhaseBatch end = flow_reflection(start, Vec::Constant(n, 3.0), unit);
    CHECK(ks_uniform(end.x.col(0), 0.0, 1.0) <= 0.02);
    CHECK(end.x.minCoeff() >= 0.0);
    CHECK(end.x.maxCoeff() <= 1.0);
}
