#include "scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "hamflow/metrics.hpp"

namespace hamflow::cli {

namespace {

Vec vec(std::initializer_list<double> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

GaussianMixture mixture_2d() {
    return GaussianMixture({0.3, 0.7}, {vec({-1.0, 0.5}), vec({1.5, -0.5})}, {0.5, 1.2});
}

Mlp random_net(const MlpSpec& spec, std::uint64_t seed, double scale) {
    Rng rng(seed);
    Mlp net(spec);
    net.set_params(scale * rng.normal_matrix(static_cast<Eigen::Index>(net.param_count()), 1).col(0));
    return net;
}

// Largest |H(z_t) - H(z_0)| along a leapfrog path over [0, 1] with n steps.
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

double directional_gap(const std::function<double(const Vec&)>& loss, const Vec& at, const Vec& grad, int probes,
                       std::uint64_t seed, double h = 1e-4) {
    Rng rng(seed);
    double worst = 0.0;
    for (int k = 0; k < probes; ++k) {
        Vec dir = rng.normal_matrix(at.size(), 1).col(0);
        dir /= dir.norm();
        const double fd = (loss(at + h * dir) - loss(at - h * dir)) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - grad.dot(dir)) / std::max(std::abs(fd), 1e-8));
    }
    return worst;
}

double max_abs(const Mat& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

}  // namespace

GaussianMixture reflect2d_mixture() {
    return GaussianMixture({0.3, 0.3, 0.4}, {vec({-0.5, -0.4}), vec({0.5, -0.4}), vec({0.0, 0.5})},
                           {0.0225, 0.0225, 0.0225});
}

double energy_drift_order() {
    const ForceField normal = ScoreForce{GaussianMixture::standard_normal(1)};
    const ForceField bimodal = ScoreForce{GaussianMixture::bimodal_1d()};
    const ForceField plane = ScoreForce{mixture_2d()};
    const double a = std::log2(energy_drift(normal, {vec({1.2}), vec({-0.7})}, 20) /
                               energy_drift(normal, {vec({1.2}), vec({-0.7})}, 40));
    const double b = std::log2(energy_drift(bimodal, {vec({-0.4}), vec({1.5})}, 40) /
                               energy_drift(bimodal, {vec({-0.4}), vec({1.5})}, 80));
    const PhaseState s{vec({0.3, -0.2}), vec({1.0, 0.4})};
    const double c = std::log2(energy_drift(plane, s, 40) / energy_drift(plane, s, 80));
    return std::min({a, b, c});
}

double worst_volume_error(std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    const auto probe = [&](const ForceField& f, int d) {
        for (int k = 0; k < 3; ++k) {
            const PhaseState s{rng.normal_matrix(d, 1).col(0), rng.normal_matrix(d, 1).col(0)};
            worst = std::max(worst, std::abs(volume_check(f, s, 1.0, 5) - 1.0));
        }
    };
    probe(ScoreForce{GaussianMixture::bimodal_1d()}, 1);
    probe(OscillationForce{1.3}, 1);
    probe(ScoreForce{mixture_2d()}, 2);
    probe(LearnedForce{random_net(MlpSpec{2, 2, {8}, false}, seed + 1, 0.5), false}, 2);
    return worst;
}

double reversibility_error(std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    const std::vector<std::pair<ForceField, int>> cases = {
        {ScoreForce{GaussianMixture::bimodal_1d()}, 1},
        {ScoreForce{mixture_2d()}, 2},
        {LearnedForce{random_net(MlpSpec{2, 2, {8}, true}, seed + 1, 0.5), true}, 2}};
    for (const auto& [f, d] : cases) {
        const PhaseState s{rng.normal_matrix(d, 1).col(0), rng.normal_matrix(d, 1).col(0)};
        const PhaseState back = leapfrog(f, leapfrog(f, s, 0.0, 1.0, 10), 1.0, 0.0, 10);
        worst = std::max({worst, max_abs(back.x - s.x), max_abs(back.v - s.v)});
    }
    return worst;
}

double mlp_gradient_error(std::uint64_t seed) {
    const Mlp net = random_net(MlpSpec{1, 1, {16, 16}, true}, seed, 0.4);
    Rng rng(seed + 1);
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
    return directional_gap(loss, net.params(), net.gather_grad(vars), 10, seed + 2);
}

double trajectory_gradient_error(std::uint64_t seed) {
    const Mlp force = random_net(MlpSpec{2, 2, {16, 16}, false}, seed, 0.3);
    Rng rng(seed + 1);
    const Mat x0 = rng.normal_matrix(8, 2);
    const Mat v0 = rng.normal_matrix(8, 2);
    const Vec t1 = rng.uniform_vector(8, 0.2, 1.0);
    const auto run = [&](Tape& tape, const Mlp& net, Var x) {
        const TapedForce f = bind_force(tape, LearnedForce{net, false});
        const TapedPhase end = leapfrog(tape, f, {x, tape.leaf(v0)}, Vec::Zero(8), t1, 5);
        return tape.sum(tape.row_squared_norm(end.x)) + tape.sum(tape.sin(end.v));
    };
    const auto flat = [](const Mat& m) { return Vec(Eigen::Map<const Vec>(m.data(), m.size())); };
    const auto loss = [&](const Vec& x) {
        Tape tape;
        return run(tape, force, tape.leaf(Eigen::Map<const Mat>(x.data(), 8, 2))).value()(0, 0);
    };
    Tape tape;
    Var x = tape.leaf(x0);
    tape.backward(run(tape, force, x));
    return directional_gap(loss, flat(x0), flat(x.grad()), 10, seed + 2);
}

double hvp_oracle_z(std::size_t n, std::uint64_t seed) {
    const auto m = GaussianMixture::bimodal_1d();
    double worst = 0.0;
    const std::vector<HgfKind> kinds = {DiffusionKind{}, OscillationKind{natural_alpha(m)}};
    for (const auto& kind : kinds) {
        Rng rng(seed);
        const Vec times = Vec::Constant(static_cast<Eigen::Index>(n), 0.4 * horizon(kind));
        const PhaseBatch p = sample_pairs(kind, m, rng, times);
        const Vec pred = analytic_hvp(kind, m, p.x, times).col(0);
        std::vector<Eigen::Index> order(n);
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return p.x(a, 0) < p.x(b, 0); });
        const std::size_t bins = 50, per = n / bins;
        for (std::size_t b = 0; b < bins; ++b) {
            Vec dv(static_cast<Eigen::Index>(per));
            double mean_pred = 0.0;
            for (std::size_t i = 0; i < per; ++i) {
                const Eigen::Index r = order[b * per + i];
                dv(static_cast<Eigen::Index>(i)) = p.v(r, 0);
                mean_pred += pred(r);
            }
            const Estimate e = mean_estimate(dv);
            worst = std::max(worst, std::abs(e.value - mean_pred / static_cast<double>(per)) / e.std_error);
        }
    }
    return worst;
}

double ism_constant_spread(std::size_t n, std::uint64_t seed) {
    const auto m = GaussianMixture::bimodal_1d();
    Rng rng(seed);
    const Mat y = m.sample(rng, n);
    const std::vector<ForceField> forces = {ZeroForce{}, OscillationForce{0.7}, ScoreForce{m},
                                            LearnedForce{random_net(MlpSpec{1, 1, {16, 16}, false}, seed + 1, 0.4), false}};
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& f : forces) {
        const double gap = ism_loss(f, y).value - esm_loss(f, m, y).value;
        lo = std::min(lo, gap);
        hi = std::max(hi, gap);
    }
    return hi - lo;
}

double constant_scale_z(std::size_t n, std::uint64_t seed) {
    const auto m = GaussianMixture::bimodal_1d();
    const double alpha = natural_alpha(m);
    const double d = m.dim();
    const double t_max = horizon(OscillationKind{alpha});
    double worst = 0.0;
    Rng rng(seed);
    for (double t : {0.0, t_max / 4.0, t_max / 2.0}) {
        const ScaleCheck s = constant_scale_check(m, alpha, t, n, rng);
        worst = std::max({worst, std::abs(s.position.value - d / (alpha * alpha)) / s.position.std_error,
                          std::abs(s.velocity.value - d) / s.velocity.std_error,
                          std::abs(s.acceleration.value - alpha * alpha * d) / s.acceleration.std_error});
    }
    return worst;
}

double reflection_ks(std::size_t n, std::uint64_t seed) {
    const auto m = reflect2d_mixture();
    const ReflectionKind kind{reflection_box(m)};
    Rng rng(seed);
    const PhaseBatch start = sample_initial(kind, m, rng, static_cast<Eigen::Index>(n));
    const PhaseBatch end = push_forward(kind, start, Vec::Constant(static_cast<Eigen::Index>(n), 3.0));
    double worst = 0.0;
    for (int k = 0; k < m.dim(); ++k)
        worst = std::max(worst, ks_uniform(end.x.col(k), kind.box.lo(k), kind.box.hi(k)));
    return worst;
}

double edm_endpoint_gap(int steps, std::size_t n, std::uint64_t seed) {
    const auto m = GaussianMixture::bimodal_1d();
    Vec sigmas(steps + 1);
    sigmas.head(steps) = edm_sigmas(steps);
    sigmas(steps) = 0.0;
    Rng rng(seed);
    const Mat x0 = sigmas(0) * rng.normal_matrix(static_cast<Eigen::Index>(n), 1);
    const Mat edm = edm_ode(m, x0, sigmas);
    Vec grid(steps + 1);
    grid.head(steps) = edm_time_grid(sigmas.head(steps));
    grid(steps) = 0.0;
    // x_t = cos(t) (y + tan(t) eps) maps the EDM state at sigma = tan t onto the oscillation state.
    const Mat osc = heun_integrate(analytic_predictor(OscillationKind{1.0}, m), std::cos(grid(0)) * x0, grid);
    return max_abs(edm - osc);
}

HsdCheck closed_form_hsd(double t, const HsdConfig& config) {
    HsdConfig c = config;
    c.time = TimeDistribution::fixed(t);
    HsdCheck out;
    out.t = t;
    out.hsd = hsd_estimate(ZeroForce{}, GaussianMixture::standard_normal(1), c).value;
    out.truth = t * t / (1.0 + t * t);
    return out;
}

double TaylorCheck::ratio_at(double t) const {
    for (const auto& r : rows)
        if (r.t == t) return r.hsd.value / r.taylor;
    throw std::invalid_argument("TaylorCheck: no row at this time");
}

TaylorCheck zero_force_taylor(const std::vector<double>& t_grid, const HsdConfig& config, std::uint64_t seed) {
    return {taylor_check(ZeroForce{}, GaussianMixture::standard_normal(1), t_grid, config, 200000, seed)};
}

HsmRun hsm_run(const GaussianMixture& mixture, const HsmConfig& config, const std::vector<int>& force_hidden,
               const std::vector<int>& velocity_hidden) {
    const int d = mixture.dim();
    Rng init(config.seed, 5);
    Mlp force(MlpSpec{d, d, force_hidden, false}, init);
    Mlp velocity(MlpSpec{d, d, velocity_hidden, true}, init);
    HsmRun out;
    out.result = train_hsm(std::move(force), std::move(velocity), mixture, config);
    Rng eval(config.seed, 77);
    out.final_esm = esm_loss(LearnedForce{out.result.force, false}, mixture, 100000, eval).value;
    return out;
}

CorrelationResult esm_hsd_correlation(const CorrelationSettings& settings, std::uint64_t seed) {
    const auto m = GaussianMixture::bimodal_1d();
    HsmConfig cfg;
    cfg.iterations = settings.interval * (settings.snapshots - 1);
    cfg.diagnostic_interval = settings.interval;
    cfg.n_esm = 1000;
    cfg.seed = seed;
    const HsmRun run = hsm_run(m, cfg, {64, 64}, {64, 64});
    CorrelationResult out;
    out.pairs = esm_hsd_pairs(run.result.snapshots, m, settings.hsd, settings.n_esm, seed + 1);
    Vec esm(static_cast<Eigen::Index>(out.pairs.size())), hsd(esm.size());
    for (std::size_t i = 0; i < out.pairs.size(); ++i) {
        esm(static_cast<Eigen::Index>(i)) = out.pairs[i].esm;
        hsd(static_cast<Eigen::Index>(i)) = out.pairs[i].hsd.value;
    }
    out.r = pearson(esm, hsd);
    return out;
}

SamplingResult compare_to_truth(const Mat& samples, const GaussianMixture& mixture, std::uint64_t seed) {
    Rng a(seed, 101), b(seed, 102);
    const auto n = static_cast<std::size_t>(samples.rows());
    const Mat truth = mixture.sample(a, n);
    const Mat other = mixture.sample(b, n);
    return {energy_distance(samples, truth), energy_distance(other, truth)};
}

SamplingResult exact_sampling(int steps, std::size_t n, std::uint64_t seed) {
    const auto m = GaussianMixture::bimodal_1d();
    const HgfKind kind = OscillationKind{natural_alpha(m)};
    Rng rng(seed);
    const Mat x = heun_sample(analytic_predictor(kind, m), make_schedule(kind, m, steps, 0.0), rng,
                              static_cast<Eigen::Index>(n));
    return compare_to_truth(x, m, seed);
}

SamplingResult trained_sampling(const PredictorSettings& settings, std::uint64_t seed) {
    const auto m = GaussianMixture::bimodal_1d();
    const HgfKind kind = OscillationKind{natural_alpha(m)};
    Rng init(seed, 7);
    TrainConfig train = settings.train;
    train.seed = seed;
    const TrainResult r = train_hvp(kind, m, Mlp(MlpSpec{1, 1, settings.hidden, true}, init), train);
    Rng rng(seed, 8);
    const Mat x = heun_sample(learned_predictor(r.net), make_schedule(kind, m, settings.steps, kLearnedTimeMin), rng,
                              static_cast<Eigen::Index>(settings.n));
    return compare_to_truth(x, m, seed);
}

ReflectionResult reflection_sampling(const PredictorSettings& settings, std::uint64_t seed) {
    const auto m = reflect2d_mixture();
    const ReflectionKind kind{reflection_box(m)};
    Rng init(seed, 7);
    TrainConfig train = settings.train;
    train.seed = seed;
    const TrainResult r = train_hvp(kind, m, Mlp(MlpSpec{2, 2, settings.hidden, true}, init), train);
    Rng rng(seed, 8), data(seed, 9);
    const Mat x = heun_sample(learned_predictor(r.net), make_schedule(kind, m, settings.steps, kLearnedTimeMin), rng,
                              static_cast<Eigen::Index>(settings.n));
    const Mat truth = sample_in_box(m, kind.box, data, settings.n);
    ReflectionResult out;
    out.tv.resize(2);
    for (int k = 0; k < 2; ++k) out.tv(k) = histogram_tv(x.col(k), truth.col(k), kind.box.lo(k), kind.box.hi(k), 40);
    return out;
}

SnrComparison snr_comparison(const SnrConfig& config, std::uint64_t seed) {
    const auto m = GaussianMixture::bimodal_1d();
    const Mlp probe = random_net(MlpSpec{1, 1, {16, 16}, false, 3}, seed, 0.4);
    SnrConfig c = config;
    c.seed = seed;
    const double level = *std::min_element(c.levels.begin(), c.levels.end());
    return {level, median_snr(snr_diagnostic(SnrMethod::Hsm, probe, m, c), level),
            median_snr(snr_diagnostic(SnrMethod::Dsm, probe, m, c), level)};
}

}  // namespace hamflow::cli
