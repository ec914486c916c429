#include "hamflow/hsm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hamflow/adam.hpp"

namespace hamflow {

namespace {

constexpr Eigen::Index kEvalChunk = 50000;

Mat predict(const Mlp& velocity, const Mat& x, const Vec& times) {
    return velocity.time_conditioned() ? velocity.forward(x, &times) : velocity.forward(x, nullptr);
}

Var predict(Tape& tape, const Mlp& velocity, const MlpVars& vars, Var x, const Vec& times) {
    if (velocity.time_conditioned()) return velocity.forward(tape, vars, x, tape.leaf_vector(times));
    return velocity.forward(tape, vars, x);
}

void check_velocity_net(const Mlp& velocity, int dim) {
    if (velocity.input_dim() != dim || velocity.output_dim() != dim)
        throw std::invalid_argument("velocity net dimensions must match the data");
}

/// Running per-parameter mean and variance (Welford).
struct Moments {
    explicit Moments(Eigen::Index n) : mean(Vec::Zero(n)), m2(Vec::Zero(n)) {}
    void add(const Vec& g) {
        ++count;
        const Vec delta = g - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta.cwiseProduct(g - mean);
    }
    Vec std() const { return (m2 / static_cast<double>(std::max(count - 1, 1L))).cwiseSqrt(); }
    Vec mean;
    Vec m2;
    long count = 0;
};

void append_rows(std::vector<SnrRow>& rows, const Moments& mom, SnrMethod method, double level) {
    const Vec sd = mom.std();
    for (Eigen::Index p = 0; p < mom.mean.size(); ++p)
        rows.push_back({static_cast<std::size_t>(p), method, level, mom.mean(p), sd(p)});
}

}  // namespace

HgfKind boltzmann_kind(const ForceField& force, double horizon, int n_steps) {
    if (std::holds_alternative<ZeroForce>(force)) return DiffusionKind{};
    if (const auto* osc = std::get_if<OscillationForce>(&force)) return OscillationKind{osc->alpha};
    return CustomKind{force, horizon, n_steps};
}

HsmTerms hsm_terms(const Mlp& velocity, const ForceField& force, const PhaseBatch& start, const Vec& times,
                   int n_steps) {
    check_velocity_net(velocity, static_cast<int>(start.x.cols()));
    const double reach = times.size() > 0 ? std::max(times.maxCoeff(), 1e-12) : 1.0;
    const PhaseBatch end = push_forward(boltzmann_kind(force, reach, n_steps), start, times);
    const Mat pred = predict(velocity, end.x, times);
    const auto n = static_cast<double>(std::max<Eigen::Index>(times.size(), 1));
    HsmTerms out;
    out.l_hsm = (pred.rowwise().squaredNorm() - 2.0 * pred.cwiseProduct(end.v).rowwise().sum()).sum() / n;
    out.l_v = (pred - end.v).rowwise().squaredNorm().sum() / n;
    out.c = end.v.rowwise().squaredNorm().sum() / n;
    return out;
}

HsmTerms hsm_loss(const Mlp& velocity, const ForceField& force, const GaussianMixture& mixture, double t, int batch,
                  Rng& rng, int n_steps) {
    if (batch < 1) throw std::invalid_argument("hsm_loss: batch must be positive");
    const PhaseBatch start{mixture.sample(rng, static_cast<std::size_t>(batch)), rng.normal_matrix(batch, mixture.dim())};
    return hsm_terms(velocity, force, start, Vec::Constant(batch, t), n_steps);
}

Var hsm_game(Tape& tape, const Mlp& velocity, const MlpVars& vars, Var x_t, Var v_t, const Vec& times) {
    Var pred = predict(tape, velocity, vars, x_t, times);
    return tape.mean(2.0 * tape.row_dot(pred, v_t) - tape.row_squared_norm(pred));
}

HsdResult hsd_estimate(const ForceField& force, const GaussianMixture& mixture, const HsdConfig& config) {
    validate_force(force);
    if (config.n_eval < 2) throw std::invalid_argument("hsd_estimate: n_eval must be at least 2");
    const HgfKind kind = boltzmann_kind(force, std::max(config.time.hi, 1e-12), config.n_steps);
    MlpSpec spec{mixture.dim(), mixture.dim(), config.hidden,
                 config.time.kind != TimeDistribution::Kind::Fixed};
    Rng init(config.seed, 7);
    TrainConfig train;
    train.batch = config.batch;
    train.iterations = config.iterations;
    train.lr = config.lr;
    train.lr_final_fraction = config.lr_final_fraction;
    train.time = config.time;
    train.seed = config.seed;
    train.antithetic = true;
    train.plateau_window = config.plateau_window;
    train.plateau_tol = config.plateau_tol;
    TrainResult trained = train_hvp(kind, mixture, Mlp(spec, init), train);

    Rng rng(config.seed, 3);
    const auto total = static_cast<Eigen::Index>(config.n_eval / 2 * 2);
    Vec pair_values(total / 2);
    for (Eigen::Index done = 0; done < total; done += kEvalChunk) {
        const Eigen::Index n = std::min(kEvalChunk, total - done);
        const Vec times = paired_times(config.time, rng, n);
        const PhaseBatch pairs = sample_pairs(kind, mixture, rng, times, true);
        const Mat pred = predict(trained.net, pairs.x, times);
        const Vec game = 2.0 * pred.cwiseProduct(pairs.v).rowwise().sum() - pred.rowwise().squaredNorm();
        const Eigen::Index half = n / 2;
        pair_values.segment(done / 2, half) = 0.5 * (game.head(half) + game.tail(half));
    }
    return {mean_estimate(pair_values), std::move(trained.net), trained.plateaued};
}

HsmResult train_hsm(Mlp force, Mlp velocity, const GaussianMixture& mixture, const HsmConfig& config,
                    const std::function<void(const HsmRecord&)>& on_record) {
    const int d = mixture.dim();
    if (force.input_dim() != d || force.output_dim() != d) throw std::invalid_argument("train_hsm: force net must map R^d to R^d");
    if (force.time_conditioned()) throw std::invalid_argument("train_hsm: force net must not be time-conditioned");
    check_velocity_net(velocity, d);
    if (config.k_inner < 1) throw std::invalid_argument("train_hsm: k_inner must be at least 1");
    if (!(config.horizon > 0.0)) throw std::invalid_argument("train_hsm: horizon must be positive");
    if (config.batch < 1 || config.iterations < 0 || config.diagnostic_interval < 1)
        throw std::invalid_argument("train_hsm: bad batch, iteration or diagnostic settings");
    const TimeDistribution law = config.time.value_or(TimeDistribution::uniform(0.0, config.horizon));

    Rng rng(config.seed, 11);
    Rng eval_rng(config.seed, 12);
    const Mat esm_x = mixture.sample(eval_rng, config.n_esm);
    Adam adam_theta(static_cast<Eigen::Index>(force.param_count()), AdamConfig{config.lr_theta});
    Adam adam_phi(static_cast<Eigen::Index>(velocity.param_count()), AdamConfig{config.lr_phi});

    HsmResult result{force, velocity, {}, {}, false};
    double best_esm = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int it = 0; it < config.iterations; ++it) {
        const double lr_phi = scheduled_lr(config.lr_phi, config.lr_final_fraction, it, config.iterations);
        const double lr_theta = scheduled_lr(config.lr_theta, config.lr_final_fraction, it, config.iterations);
        const ForceField field = LearnedForce{result.force, false};
        const HgfKind kind = CustomKind{field, config.horizon, config.n_steps};

        for (int k = 0; k < config.k_inner; ++k) {
            const Vec times = law.sample(rng, config.batch);
            const PhaseBatch pairs = sample_pairs(kind, mixture, rng, times);
            Tape tape;
            const MlpVars vars = result.velocity.bind(tape);
            Var loss = velocity_loss(tape, result.velocity, vars, pairs, times);
            if (!std::isfinite(loss.value()(0, 0))) throw DivergedError("train_hsm: non-finite velocity loss", it);
            tape.backward(loss);
            adam_phi.step(result.velocity.params(), result.velocity.gather_grad(vars), lr_phi);
        }

        const Vec times = law.sample(rng, config.batch);
        const PhaseBatch start = sample_initial(kind, mixture, rng, config.batch);
        Tape tape;
        const TapedForce taped = bind_force(tape, field);
        const TapedPhase end = leapfrog(tape, taped, {tape.leaf(start.x), tape.leaf(start.v)},
                                        Vec::Zero(config.batch), times, config.n_steps);
        const MlpVars vvars = result.velocity.bind(tape);
        Var game = hsm_game(tape, result.velocity, vvars, end.x, end.v, times);
        const double game_value = game.value()(0, 0);
        if (!std::isfinite(game_value)) throw DivergedError("train_hsm: non-finite game value", it);
        tape.backward(game);
        adam_theta.step(result.force.params(), result.force.gather_grad(*taped.params), lr_theta);

        if (it % config.diagnostic_interval == 0 || it + 1 == config.iterations) {
            const HsmRecord record{it, esm_loss(LearnedForce{result.force, false}, mixture, esm_x).value, game_value,
                                   -game_value};
            result.records.push_back(record);
            result.snapshots.push_back(result.force);
            if (record.esm < best_esm) {
                best_esm = record.esm;
                since_best = 0;
            } else if (++since_best >= config.patience) {
                result.stalled = true;
            }
            if (on_record) on_record(record);
        }
    }
    return result;
}

Estimate esm_loss(const ForceField& force, const GaussianMixture& mixture, const Mat& x) {
    const Mat residual = mixture.score(x) - evaluate_force(force, x, Vec::Zero(x.rows()));
    return mean_estimate(0.5 * residual.rowwise().squaredNorm());
}

Estimate esm_loss(const ForceField& force, const GaussianMixture& mixture, std::size_t n, Rng& rng) {
    return esm_loss(force, mixture, mixture.sample(rng, n));
}

Var dsm_per_sample(Tape& tape, const Mlp& score, const MlpVars& vars, const Mat& x, const Mat& eps, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("dsm: sigma must be positive");
    Var y = tape.leaf(x + sigma * eps);
    Var f = score.time_conditioned() ? score.forward(tape, vars, y, tape.leaf_vector(Vec::Constant(x.rows(), sigma)))
                                     : score.forward(tape, vars, y);
    return tape.row_squared_norm(f + tape.leaf(eps / sigma));
}

Estimate dsm_loss(const Mlp& score, const GaussianMixture& mixture, double sigma, std::size_t n, Rng& rng) {
    if (!(sigma > 0.0)) throw std::invalid_argument("dsm: sigma must be positive");
    const Mat x = mixture.sample(rng, n);
    const Mat eps = rng.normal_matrix(x.rows(), x.cols());
    const Mat y = x + sigma * eps;
    const Mat f = score.time_conditioned() ? score.forward(y, sigma) : score.forward(y, nullptr);
    return mean_estimate((f + eps / sigma).rowwise().squaredNorm());
}

Estimate ism_loss(const ForceField& force, const Mat& x) {
    const auto d = x.cols();
    if (d > 2) throw std::invalid_argument("ism_loss: divergence is only supported for d <= 2");
    Vec per(x.rows());
    if (std::holds_alternative<ZeroForce>(force)) {
        per.setZero();
    } else if (const auto* osc = std::get_if<OscillationForce>(&force)) {
        const double k = osc->alpha * osc->alpha;
        per = (-k * static_cast<double>(d) + 0.5 * k * k * x.rowwise().squaredNorm().array()).matrix();
    } else if (const auto* sf = std::get_if<ScoreForce>(&force)) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const Vec xi = x.row(i).transpose();
            per(i) = sf->mixture.score_divergence(xi) + 0.5 * sf->mixture.score(xi).squaredNorm();
        }
    } else {
        const auto& learned = std::get<LearnedForce>(force);
        Tape tape;
        const MlpVars vars = learned.net.bind(tape);
        Var xv = tape.leaf(x);
        Var f = learned.time_dependent ? learned.net.forward(tape, vars, xv, tape.leaf_vector(Vec::Zero(x.rows())))
                                       : learned.net.forward(tape, vars, xv);
        per = 0.5 * f.value().rowwise().squaredNorm();
        for (Eigen::Index j = 0; j < d; ++j) {
            tape.backward(tape.sum(tape.column(f, j)));
            per += xv.grad().col(j);
        }
    }
    return mean_estimate(per);
}

Estimate ism_loss(const ForceField& force, const GaussianMixture& mixture, std::size_t n, Rng& rng) {
    if (mixture.dim() > 2) throw std::invalid_argument("ism_loss: divergence is only supported for d <= 2");
    return ism_loss(force, mixture.sample(rng, n));
}

DsmEquivalence diffusion_dsm_equivalence(const Mlp& velocity, const GaussianMixture& mixture, int batch, Rng& rng,
                                         double t_min, double t_max) {
    check_velocity_net(velocity, mixture.dim());
    if (!velocity.time_conditioned()) throw std::invalid_argument("dsm equivalence: velocity net must be time-conditioned");
    if (!(t_min > 0.0) || !(t_max >= t_min)) throw std::invalid_argument("dsm equivalence: bad time range");
    const Mat x = mixture.sample(rng, static_cast<std::size_t>(batch));
    const Mat eps = rng.normal_matrix(batch, mixture.dim());
    const Vec times = rng.uniform_vector(batch, t_min, t_max);
    const PhaseBatch pairs = flow_zero(PhaseBatch{x, eps}, times);

    Tape hgf;
    const MlpVars hv = velocity.bind(hgf);
    Var per_v = hgf.row_squared_norm(predict(hgf, velocity, hv, hgf.leaf(pairs.x), times) - hgf.leaf(pairs.v));
    hgf.backward(hgf.mean(per_v));
    const Vec grad_v = velocity.gather_grad(hv);

    // Score net F(y, t) = -V(y, t) / t, noise level sigma = t, loss weighted by t^2.
    Tape dsm;
    const MlpVars dv = velocity.bind(dsm);
    const Vec inv_t = times.cwiseInverse();
    Var score = dsm.mul_col(predict(dsm, velocity, dv, dsm.leaf(pairs.x), times), dsm.leaf_vector(-inv_t));
    Var per_dsm = dsm.row_squared_norm(score + dsm.leaf(inv_t.asDiagonal() * eps));
    Var weighted = dsm.mul_col(per_dsm, dsm.leaf_vector(times.cwiseAbs2()));
    dsm.backward(dsm.mean(weighted));
    const Vec grad_d = velocity.gather_grad(dv);

    return {(per_v.value() - weighted.value()).cwiseAbs().maxCoeff(), (grad_v - grad_d).cwiseAbs().maxCoeff()};
}

std::vector<TaylorRow> taylor_check(const ForceField& force, const GaussianMixture& mixture,
                                    const std::vector<double>& t_grid, HsdConfig config, std::size_t n_esm,
                                    std::uint64_t seed) {
    Rng esm_rng(seed, 21);
    const double esm = esm_loss(force, mixture, n_esm, esm_rng).value;
    std::vector<TaylorRow> rows;
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        const double t = t_grid[i];
        if (!(t >= 0.0)) throw std::invalid_argument("taylor_check: times must be non-negative");
        config.time = TimeDistribution::fixed(t);
        config.seed = seed + i;
        rows.push_back({t, hsd_estimate(force, mixture, config).value, 2.0 * t * t * esm});
    }
    return rows;
}

std::vector<CorrelationPair> esm_hsd_pairs(const std::vector<Mlp>& forces, const GaussianMixture& mixture,
                                           HsdConfig config, std::size_t n_esm, std::uint64_t seed) {
    Rng esm_rng(seed, 41);
    const Mat x = mixture.sample(esm_rng, n_esm);
    std::vector<CorrelationPair> out;
    for (std::size_t i = 0; i < forces.size(); ++i) {
        const ForceField f = LearnedForce{forces[i], false};
        config.seed = seed + i;
        out.push_back({esm_loss(f, mixture, x).value, hsd_estimate(f, mixture, config).value});
    }
    return out;
}

std::string to_string(SnrMethod method) { return method == SnrMethod::Hsm ? "hsm" : "dsm"; }

std::vector<SnrRow> snr_diagnostic(SnrMethod method, const Mlp& probe, const GaussianMixture& mixture,
                                   const SnrConfig& config) {
    if (probe.time_conditioned()) throw std::invalid_argument("snr: probe net must not be time-conditioned");
    if (config.n_batches < 2 || config.batch < 1) throw std::invalid_argument("snr: need at least two batches");
    std::vector<SnrRow> rows;
    const auto n_params = static_cast<Eigen::Index>(probe.param_count());
    for (std::size_t li = 0; li < config.levels.size(); ++li) {
        const double level = config.levels[li];
        Rng rng(config.seed, 31 + li);
        Moments mom(n_params);
        if (method == SnrMethod::Dsm) {
            for (int b = 0; b < config.n_batches; ++b) {
                const Mat x = mixture.sample(rng, static_cast<std::size_t>(config.batch));
                const Mat eps = rng.normal_matrix(config.batch, mixture.dim());
                Tape tape;
                const MlpVars vars = probe.bind(tape);
                tape.backward(tape.mean(dsm_per_sample(tape, probe, vars, x, eps, level)));
                mom.add(probe.gather_grad(vars));
            }
        } else {
            const ForceField field = LearnedForce{probe, false};
            HsdConfig vcfg = config.velocity;
            vcfg.time = TimeDistribution::fixed(level);
            vcfg.n_steps = config.n_steps;
            vcfg.seed = config.seed + li;
            const Mlp velocity = hsd_estimate(field, mixture, vcfg).velocity;
            const Vec times = Vec::Constant(config.batch, level);
            for (int b = 0; b < config.n_batches; ++b) {
                const PhaseBatch start{mixture.sample(rng, static_cast<std::size_t>(config.batch)),
                                       rng.normal_matrix(config.batch, mixture.dim())};
                Tape tape;
                const TapedForce taped = bind_force(tape, field);
                const TapedPhase end = leapfrog(tape, taped, {tape.leaf(start.x), tape.leaf(start.v)},
                                                Vec::Zero(config.batch), times, config.n_steps);
                const MlpVars vvars = velocity.bind(tape);
                tape.backward(-hsm_game(tape, velocity, vvars, end.x, end.v, times));
                mom.add(probe.gather_grad(*taped.params));
            }
        }
        append_rows(rows, mom, method, level);
    }
    return rows;
}

double median_snr(const std::vector<SnrRow>& rows, double level) {
    std::vector<double> snr;
    for (const auto& r : rows) {
        if (r.level != level) continue;
        snr.push_back(r.std > 0.0 ? std::abs(r.mean) / r.std : std::numeric_limits<double>::infinity());
    }
    if (snr.empty()) throw std::invalid_argument("median_snr: no rows at this level");
    auto mid = snr.begin() + static_cast<std::ptrdiff_t>(snr.size() / 2);
    std::nth_element(snr.begin(), mid, snr.end());
    if (snr.size() % 2 == 1) return *mid;
    const double upper = *mid;
    return 0.5 * (upper + *std::max_element(snr.begin(), mid));
}

}  // namespace hamflow
