#include "hamflow/hgf.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "hamflow/adam.hpp"

namespace hamflow {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

constexpr std::size_t kMaxRejectionRounds = 10000;

void check_box(const Box& box, int dim) {
    if (box.dim() != dim || box.hi.size() != dim) throw std::invalid_argument("reflection: box dimension mismatch");
    if (!((box.hi.array() > box.lo.array()).all())) throw std::invalid_argument("reflection: empty box");
}

bool plateau_reached(const std::vector<double>& losses, int window, double tol) {
    const auto w = static_cast<std::size_t>(window);
    if (w == 0 || losses.size() < 2 * w) return false;
    double recent = 0.0;
    double before = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
        recent += losses[losses.size() - 1 - i];
        before += losses[losses.size() - 1 - w - i];
    }
    return std::abs(recent - before) < tol * std::abs(before);
}

}  // namespace

void validate_kind(const HgfKind& kind) {
    std::visit(overloaded{
                   [](const DiffusionKind&) {},
                   [](const FlowMatchingKind&) {},
                   [](const OscillationKind& k) {
                       if (!(k.alpha > 0.0) || !std::isfinite(k.alpha))
                           throw std::invalid_argument("oscillation: alpha must be positive");
                   },
                   [](const ReflectionKind& k) { check_box(k.box, k.box.dim()); },
                   [](const CustomKind& k) {
                       validate_force(k.force);
                       if (!(k.horizon > 0.0)) throw std::invalid_argument("custom: horizon must be positive");
                       if (k.n_steps < 1) throw std::invalid_argument("custom: n_steps must be at least 1");
                   },
               },
               kind);
}

double horizon(const HgfKind& kind) {
    return std::visit(overloaded{
                          [](const DiffusionKind&) { return 3.0; },
                          [](const FlowMatchingKind&) { return 1.0; },
                          [](const OscillationKind& k) { return std::numbers::pi / (2.0 * k.alpha); },
                          [](const ReflectionKind&) { return 3.0; },
                          [](const CustomKind& k) { return k.horizon; },
                      },
                      kind);
}

std::string kind_name(const HgfKind& kind) {
    return std::visit(overloaded{
                          [](const DiffusionKind&) { return std::string("diffusion"); },
                          [](const FlowMatchingKind&) { return std::string("flow_matching"); },
                          [](const OscillationKind&) { return std::string("oscillation"); },
                          [](const ReflectionKind&) { return std::string("reflection"); },
                          [](const CustomKind&) { return std::string("custom"); },
                      },
                      kind);
}

double natural_alpha(const GaussianMixture& mixture) {
    return std::sqrt(static_cast<double>(mixture.dim()) / mixture.second_moment());
}

Box reflection_box(const GaussianMixture& mixture) {
    const int d = mixture.dim();
    Vec lo = Vec::Constant(d, std::numeric_limits<double>::infinity());
    Vec hi = Vec::Constant(d, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < mixture.size(); ++i) {
        const double reach = 4.0 * std::sqrt(mixture.variances()[i]);
        lo = lo.cwiseMin((mixture.means()[i].array() - reach).matrix());
        hi = hi.cwiseMax((mixture.means()[i].array() + reach).matrix());
    }
    const Vec pad = 0.025 * (hi - lo);
    return {lo - pad, hi + pad};
}

Mat sample_in_box(const GaussianMixture& mixture, const Box& box, Rng& rng, std::size_t n) {
    check_box(box, mixture.dim());
    Mat out(static_cast<Eigen::Index>(n), mixture.dim());
    Eigen::Index filled = 0;
    for (std::size_t round = 0; filled < out.rows(); ++round) {
        if (round == kMaxRejectionRounds) throw std::runtime_error("sample_in_box: acceptance rate too low");
        const Mat draw = mixture.sample(rng, static_cast<std::size_t>(out.rows() - filled) + 16);
        for (Eigen::Index i = 0; i < draw.rows() && filled < out.rows(); ++i) {
            if (box.contains(draw.row(i).transpose())) out.row(filled++) = draw.row(i);
        }
    }
    return out;
}

std::optional<LinearFlow> linear_flow(const HgfKind& kind, double t) {
    return std::visit(overloaded{
                          [t](const DiffusionKind&) -> std::optional<LinearFlow> { return LinearFlow{1.0, t, 0.0, 1.0}; },
                          [t](const FlowMatchingKind&) -> std::optional<LinearFlow> {
                              return LinearFlow{1.0 - t, t, -1.0, 1.0};
                          },
                          [t](const OscillationKind& k) -> std::optional<LinearFlow> {
                              const double c = std::cos(k.alpha * t);
                              const double s = std::sin(k.alpha * t);
                              return LinearFlow{c, s / k.alpha, -k.alpha * s, c};
                          },
                          [](const ReflectionKind&) -> std::optional<LinearFlow> { return std::nullopt; },
                          [](const CustomKind&) -> std::optional<LinearFlow> { return std::nullopt; },
                      },
                      kind);
}

Vec paired_times(const TimeDistribution& law, Rng& rng, Eigen::Index n) {
    const Eigen::Index fresh = (n + 1) / 2;
    const Vec head = law.sample(rng, fresh);
    Vec out(n);
    out << head, head.head(n - fresh);
    return out;
}

Vec TimeDistribution::sample(Rng& rng, Eigen::Index n) const {
    if (kind == Kind::Fixed) return Vec::Constant(n, lo);
    if (!(hi > lo)) throw std::invalid_argument("time distribution: empty interval");
    return rng.uniform_vector(n, lo, hi);
}

PhaseBatch sample_initial(const HgfKind& kind, const GaussianMixture& mixture, Rng& rng, Eigen::Index n,
                          bool antithetic) {
    validate_kind(kind);
    if (n < 0) throw std::invalid_argument("sample_initial: negative batch size");
    const Eigen::Index fresh = antithetic ? (n + 1) / 2 : n;
    Mat x;
    if (const auto* refl = std::get_if<ReflectionKind>(&kind))
        x = sample_in_box(mixture, refl->box, rng, static_cast<std::size_t>(fresh));
    else
        x = mixture.sample(rng, static_cast<std::size_t>(fresh));
    Mat eps = rng.normal_matrix(fresh, mixture.dim());
    if (antithetic) {
        const Eigen::Index mirrored = n - fresh;
        Mat xx(n, x.cols());
        Mat ee(n, x.cols());
        xx << x, x.topRows(mirrored);
        ee << eps, -eps.topRows(mirrored);
        x = std::move(xx);
        eps = std::move(ee);
    }
    if (std::holds_alternative<FlowMatchingKind>(kind)) return {x, eps - x};
    return {std::move(x), std::move(eps)};
}

PhaseBatch push_forward(const HgfKind& kind, const PhaseBatch& start, const Vec& times) {
    if (times.size() != start.x.rows()) throw std::invalid_argument("push_forward: one time per row");
    return std::visit(overloaded{
                          [&](const DiffusionKind&) { return flow_zero(start, times); },
                          [&](const FlowMatchingKind&) { return flow_zero(start, times); },
                          [&](const OscillationKind& k) { return flow_oscillation(start, times, k.alpha); },
                          [&](const ReflectionKind& k) { return flow_reflection(start, times, k.box); },
                          [&](const CustomKind& k) {
                              return leapfrog(k.force, start, Vec::Zero(times.size()), times, k.n_steps);
                          },
                      },
                      kind);
}

PhaseBatch sample_pairs(const HgfKind& kind, const GaussianMixture& mixture, Rng& rng, const Vec& times,
                        bool antithetic) {
    return push_forward(kind, sample_initial(kind, mixture, rng, times.size(), antithetic), times);
}

double scheduled_lr(double lr, double final_fraction, int iteration, int iterations) {
    if (iterations <= 1) return lr;
    const double progress = static_cast<double>(iteration) / static_cast<double>(iterations - 1);
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    return lr * (final_fraction + (1.0 - final_fraction) * cosine);
}

Var velocity_loss(Tape& tape, const Mlp& net, const MlpVars& vars, const PhaseBatch& pairs, const Vec& times) {
    Var x = tape.leaf(pairs.x);
    Var target = tape.leaf(pairs.v);
    Var pred = net.time_conditioned() ? net.forward(tape, vars, x, tape.leaf_vector(times)) : net.forward(tape, vars, x);
    return tape.mean(tape.row_squared_norm(pred - target));
}

TrainResult train_hvp(const HgfKind& kind, const GaussianMixture& mixture, Mlp net, const TrainConfig& config,
                      const std::function<void(int, double)>& on_iteration) {
    validate_kind(kind);
    if (config.batch < 1 || config.iterations < 0) throw std::invalid_argument("train_hvp: bad batch or iteration count");
    if (!(config.lr > 0.0)) throw std::invalid_argument("train_hvp: lr must be positive");
    if (net.input_dim() != mixture.dim() || net.output_dim() != mixture.dim())
        throw std::invalid_argument("train_hvp: net dimensions must match the data");
    const TimeDistribution times_law = config.time.value_or(TimeDistribution::uniform(0.0, horizon(kind)));
    Rng rng(config.seed, 1);
    Adam adam(static_cast<Eigen::Index>(net.param_count()), AdamConfig{config.lr});
    TrainResult result{net, {}};
    result.losses.reserve(static_cast<std::size_t>(config.iterations));
    for (int it = 0; it < config.iterations; ++it) {
        const Vec times = config.antithetic ? paired_times(times_law, rng, config.batch) : times_law.sample(rng, config.batch);
        const PhaseBatch pairs = sample_pairs(kind, mixture, rng, times, config.antithetic);
        Tape tape;
        const MlpVars vars = result.net.bind(tape);
        Var loss = velocity_loss(tape, result.net, vars, pairs, times);
        const double value = loss.value()(0, 0);
        if (!std::isfinite(value)) throw DivergedError("train_hvp: non-finite loss", it);
        tape.backward(loss);
        adam.step(result.net.params(), result.net.gather_grad(vars),
                  scheduled_lr(config.lr, config.lr_final_fraction, it, config.iterations));
        result.losses.push_back(value);
        if (on_iteration) on_iteration(it, value);
    }
    if (config.plateau_window > 0)
        result.plateaued = plateau_reached(result.losses, config.plateau_window, config.plateau_tol);
    return result;
}

Mat analytic_hvp(const HgfKind& kind, const GaussianMixture& mixture, const Mat& x, const Vec& times) {
    if (x.cols() != mixture.dim()) throw std::invalid_argument("analytic_hvp: dimension mismatch");
    if (times.size() != x.rows()) throw std::invalid_argument("analytic_hvp: one time per row");
    Mat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        out.row(r) = analytic_hvp(kind, mixture, Vec(x.row(r).transpose()), times(r)).transpose();
    return out;
}

Vec analytic_hvp(const HgfKind& kind, const GaussianMixture& mixture, const Vec& x, double t) {
    const auto flow = linear_flow(kind, t);
    if (!flow) throw std::invalid_argument("analytic_hvp: no closed form for " + kind_name(kind));
    const auto [a, b, c, d] = *flow;
    const Vec weights = mixture.linear_push(a, b).posterior(x);
    Vec out = Vec::Zero(x.size());
    for (std::size_t i = 0; i < mixture.size(); ++i) {
        const double var = mixture.variances()[i];
        const Vec& mu = mixture.means()[i];
        const double gain = (a * c * var + b * d) / (a * a * var + b * b);
        out += weights(static_cast<Eigen::Index>(i)) * (c * mu + gain * (x - a * mu));
    }
    return out;
}

TapeField mlp_field(const Mlp& net) {
    return [net](Tape& tape, Var x, Var t) {
        const MlpVars vars = net.bind(tape);
        return net.time_conditioned() ? net.forward(tape, vars, x, t) : net.forward(tape, vars, x);
    };
}

Vec fm_force_lift(const TapeField& field, const Vec& x, double t) {
    Tape tape;
    Var xv = tape.leaf(Mat(x.transpose()));
    Var tv = tape.scalar(t);
    Var a = field(tape, xv, tv);
    if (a.rows() != 1 || a.cols() != x.size()) throw std::invalid_argument("fm_force_lift: field must map R^d to R^d");
    const auto d = x.size();
    Mat jac(d, d);
    Vec dt(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        Var component = tape.sum(tape.column(a, i));
        tape.backward(component);
        jac.row(i) = xv.grad().row(0);
        dt(i) = tv.grad()(0, 0);
    }
    return jac * a.value().row(0).transpose() + dt;
}

ScaleCheck constant_scale_check(const GaussianMixture& mixture, double alpha, double t, std::size_t n, Rng& rng) {
    if (n < 2) throw std::invalid_argument("constant_scale_check: need at least two samples");
    const auto rows = static_cast<Eigen::Index>(n);
    const PhaseBatch start{mixture.sample(rng, n), rng.normal_matrix(rows, mixture.dim())};
    const PhaseBatch s = flow_oscillation(start, Vec::Constant(rows, t), alpha);
    const Vec pos = s.x.rowwise().squaredNorm();
    return {mean_estimate(pos), mean_estimate(s.v.rowwise().squaredNorm()),
            mean_estimate(std::pow(alpha, 4) * pos)};
}

}  // namespace hamflow
