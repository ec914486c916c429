#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "hamflow/adam.hpp"
#include "hamflow/checkpoint.hpp"
#include "hamflow/dynamics.hpp"
#include "hamflow/hgf.hpp"

using namespace hamflow;

namespace {

Mlp random_net(const MlpSpec& spec, std::uint64_t seed, double scale = 0.5) {
    Rng rng(seed);
    Mlp net(spec);
    net.set_params(scale * rng.normal_matrix(static_cast<Eigen::Index>(net.param_count()), 1).col(0));
    return net;
}

/// Worst relative gap between tape directional derivatives and central differences.
double directional_gap(const std::function<double(const Vec&)>& loss, const Vec& params, const Vec& grad, int probes,
                       std::uint64_t seed, double h = 1e-4) {
    Rng rng(seed);
    double worst = 0.0;
    for (int k = 0; k < probes; ++k) {
        Vec dir = rng.normal_matrix(params.size(), 1).col(0);
        dir /= dir.norm();
        const double fd = (loss(params + h * dir) - loss(params - h * dir)) / (2.0 * h);
        const double ad = grad.dot(dir);
        worst = std::max(worst, std::abs(fd - ad) / std::max(std::abs(fd), 1e-8));
    }
    return worst;
}

}  // namespace

TEST_CASE("zero output layer gives the zero map") {
    Rng rng(1);
    const Mlp net(MlpSpec{2, 2, {64, 64}, true}, rng);
    const Mat x = 3.0 * rng.normal_matrix(10, 2);
    CHECK(net.forward(x, 0.7).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parameter count is the sum of (fan_in + 1) * fan_out") {
    const Mlp plain(MlpSpec{2, 2, {64, 64}, false});
    CHECK(plain.param_count() == static_cast<std::size_t>(3 * 64 + 65 * 64 + 65 * 2));
    const Mlp timed(MlpSpec{1, 1, {64, 64}, true, 6});
    // Input features: x, t, and a sin/cos pair per frequency.
    CHECK(timed.feature_dim() == 14);
    CHECK(timed.param_count() == static_cast<std::size_t>(15 * 64 + 65 * 64 + 65));
}

TEST_CASE("single linear layer computes W x") {
    Mlp net(MlpSpec{3, 2, {}, false});
    auto w = net.weight(0);
    w << 1.0, 2.0, 3.0, -1.0, 0.5, 4.0;
    Vec x(3);
    x << 0.5, -1.0, 2.0;
    const Vec y = net.forward(x);
    CHECK(y(0) == doctest::Approx(4.5));
    CHECK(y(1) == doctest::Approx(7.0));
}

TEST_CASE("time features use base-2 frequencies after the raw time") {
    Vec t(1);
    t << 0.3;
    const Mat f = time_features(t, 3);
    CHECK(f(0, 0) == 0.3);
    CHECK(f(0, 1) == doctest::Approx(std::sin(0.3)));
    CHECK(f(0, 2) == doctest::Approx(std::cos(0.3)));
    CHECK(f(0, 5) == doctest::Approx(std::sin(1.2)));
    CHECK(f(0, 6) == doctest::Approx(std::cos(1.2)));
}

TEST_CASE("forward input validation") {
    const Mlp timed(MlpSpec{2, 2, {8}, true});
    const Mlp plain(MlpSpec{2, 2, {8}, false});
    CHECK_THROWS_AS(timed.forward(Mat(Mat::Zero(3, 2)), nullptr), std::invalid_argument);
    CHECK_THROWS_AS(plain.forward(Mat(Mat::Zero(3, 2)), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(plain.forward(Mat(Mat::Zero(3, 1)), nullptr), std::invalid_argument);
}

TEST_CASE("input directional derivative matches finite differences") {
    const Mlp net = random_net(MlpSpec{2, 2, {16, 16}, true}, 3);
    Vec x(2);
    x << 0.3, -0.8;
    Tape tape;
    const MlpVars vars = net.bind(tape);
    Var xv = tape.leaf(Mat(x.transpose()));
    Var out = net.forward(tape, vars, xv, tape.scalar(0.4));
    Rng rng(5);
    const Vec w = rng.normal_matrix(2, 1).col(0);
    tape.backward(tape.sum(tape.row_dot(out, tape.leaf(Mat(w.transpose())))));
    const Vec g = xv.grad().row(0).transpose();
    const auto f = [&](const Vec& p) { return net.forward(p, 0.4).dot(w); };
    CHECK(directional_gap(f, x, g, 10, 6) <= 1e-4);
    CHECK((out.value() - net.forward(Mat(x.transpose()), 0.4)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("gradient of half the squared norm is the input") {
    Tape tape;
    Mat x(2, 3);
    x << 1, -2, 3, 0.5, 0, -1;
    Var xv = tape.leaf(x);
    tape.backward(0.5 * tape.sum(tape.row_squared_norm(xv)));
    CHECK(Mat(xv.grad()) == x);
}

TEST_CASE("every tape op matches finite differences") {
    Rng rng(8);
    const Mat a0 = rng.normal_matrix(3, 2);
    const Mat b0 = rng.normal_matrix(3, 2);
    const Mat c0 = (rng.normal_matrix(3, 1).array().abs() + 0.5).matrix();
    const Mat w0 = rng.normal_matrix(4, 2);
    const Mat r0 = rng.normal_matrix(1, 2);
    auto build = [&](Tape& t, Var a) {
        Var b = t.leaf(b0);
        Var c = t.leaf(c0);
        Var w = t.leaf(w0);
        Var r = t.leaf(r0);
        Var h = t.tanh(t.matmul_t(a, w));                       // 3 x 4
        Var g = t.matmul(h, w);                                 // 3 x 2
        Var m = t.add_row(t.mul(g, b), r) - t.div(a, t.add_scalar(t.square(b), 1.0));
        Var s = t.concat_cols(t.sin(m), t.cos(t.mul_col(a, c)));
        Var k = t.column(s, 3) + t.row_dot(a, b) + t.row_squared_norm(m);
        return t.sum(k) + 0.5 * t.mean(s);
    };
    Tape tape;
    Var a = tape.leaf(a0);
    Var out = build(tape, a);
    tape.backward(out);
    const Mat g = a.grad();
    const auto f = [&](const Vec& p) {
        Tape t;
        return build(t, t.leaf(Eigen::Map<const Mat>(p.data(), 3, 2))).value()(0, 0);
    };
    const Vec p0 = Eigen::Map<const Vec>(a0.data(), 6);
    CHECK(directional_gap(f, p0, Eigen::Map<const Vec>(g.data(), 6), 10, 9) <= 1e-6);
    tape.verify_replay();
}

TEST_CASE("backward rejects non-scalar outputs") {
    Tape tape;
    Var a = tape.leaf(Mat::Ones(2, 2));
    CHECK_THROWS(tape.backward(tape.square(a)));
}

TEST_CASE("replay mismatch is detected") {
    Tape tape;
    Var a = tape.leaf(Mat::Ones(2, 2));
    Var b = tape.square(a);
    tape.verify_replay();
    tape.set_leaf(a, Mat::Constant(2, 2, 2.0));
    CHECK_THROWS_AS(tape.verify_replay(), std::logic_error);
    tape.recompute();
    tape.verify_replay();
    CHECK(b.value()(0, 0) == 4.0);
}

TEST_CASE("velocity loss gradient matches finite differences") {
    const Mlp net = random_net(MlpSpec{1, 1, {16, 16}, true}, 12, 0.4);
    Rng rng(13);
    const auto m = GaussianMixture::bimodal_1d();
    const Vec times = rng.uniform_vector(64, 0.0, 3.0);
    const PhaseBatch pairs = sample_pairs(DiffusionKind{}, m, rng, times);
    const auto loss = [&](const Vec& p) {
        Mlp copy = net;
        copy.set_params(p);
        Tape tape;
        return velocity_loss(tape, copy, copy.bind(tape), pairs, times).value()(0, 0);
    };
    Tape tape;
    const MlpVars vars = net.bind(tape);
    tape.backward(velocity_loss(tape, net, vars, pairs, times));
    CHECK(directional_gap(loss, net.params(), net.gather_grad(vars), 10, 14) <= 1e-3);
}

TEST_CASE("leapfrog endpoint gradient w.r.t. force parameters matches finite differences") {
    const Mlp force = random_net(MlpSpec{2, 2, {16, 16}, false}, 21, 0.3);
    Rng rng(22);
    const Mat x0 = rng.normal_matrix(8, 2);
    const Mat v0 = rng.normal_matrix(8, 2);
    const Vec t1 = rng.uniform_vector(8, 0.2, 1.0);
    const auto run = [&](Tape& tape, const Mlp& net, const MlpVars** params_out, TapedForce& holder) {
        holder = bind_force(tape, LearnedForce{net, false});
        if (params_out) *params_out = &*holder.params;
        const TapedPhase end = leapfrog(tape, holder, {tape.leaf(x0), tape.leaf(v0)}, Vec::Zero(8), t1, 5);
        return tape.sum(tape.row_squared_norm(end.x)) + tape.sum(tape.sin(end.v));
    };
    const auto loss = [&](const Vec& p) {
        Mlp copy = force;
        copy.set_params(p);
        Tape tape;
        TapedForce holder;
        return run(tape, copy, nullptr, holder).value()(0, 0);
    };
    Tape tape;
    TapedForce holder;
    const MlpVars* vars = nullptr;
    Var out = run(tape, force, &vars, holder);
    tape.backward(out);
    CHECK(directional_gap(loss, force.params(), force.gather_grad(*vars), 10, 23) <= 1e-3);
    tape.verify_replay();
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Adam adam(3);
    Vec p(3);
    p << 1.0, -2.0, 0.5;
    const Vec before = p;
    adam.step(p, Vec::Zero(3));
    CHECK(p == before);
    CHECK(adam.steps() == 1);
}

TEST_CASE("adam: constant gradient moves against its sign") {
    Adam adam(2, AdamConfig{0.01});
    Vec p = Vec::Zero(2);
    Vec g(2);
    g << 3.0, -0.1;
    for (int i = 0; i < 100; ++i) adam.step(p, g);
    CHECK(p(0) < 0.0);
    CHECK(p(1) > 0.0);
    // Bias-corrected steps have size lr for a constant gradient.
    CHECK(p(0) == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("adam: quadratic bowl") {
    Adam adam(4, AdamConfig{1e-2});
    Vec p(4);
    p << 1.0, -2.0, 0.5, 3.0;
    Vec scales(4);
    scales << 1.0, 10.0, 0.1, 3.0;
    for (int i = 0; i < 2000; ++i) adam.step(p, 2.0 * scales.cwiseProduct(p));
    CHECK(p.norm() <= 1e-3);
}

TEST_CASE("adam: shape mismatch") {
    Adam adam(3);
    Vec p = Vec::Zero(3);
    CHECK_THROWS_AS(adam.step(p, Vec::Zero(2)), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    const Mlp net = random_net(MlpSpec{2, 2, {8, 8}, true, 4}, 30);
    const auto path = std::filesystem::temp_directory_path() / "hamflow_test_ckpt.json";
    save_checkpoint(path, net, "abc123");
    const Mlp back = load_checkpoint(path);
    CHECK(back.params() == net.params());
    Rng rng(31);
    const Mat x = rng.normal_matrix(5, 2);
    CHECK(back.forward(x, 0.3) == net.forward(x, 0.3));

    std::ifstream in(path);
    nlohmann::json doc = nlohmann::json::parse(in);
    CHECK(doc.at("config_hash") == "abc123");
    doc["layers"][0]["weight"][0] = doc["layers"][0]["weight"][0].get<double>() + 1e-9;
    CHECK_THROWS_AS(mlp_from_json(doc), CheckpointError);
    std::filesystem::remove(path);
}

TEST_CASE("fnv1a reference values") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}
