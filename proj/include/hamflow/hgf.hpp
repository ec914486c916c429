#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hamflow/dynamics.hpp"

namespace hamflow {

/// Zero force, x ~ pi, v ~ N(0, I). Horizon 3.
struct DiffusionKind {};
/// Zero force with the coupled start v = eps - x. Horizon 1.
struct FlowMatchingKind {};
/// Harmonic force -alpha^2 x. Horizon pi / (2 alpha).
struct OscillationKind {
    double alpha = 1.0;
};
/// Free flight with wall reflections; data restricted to the box. Horizon 3.
struct ReflectionKind {
    Box box;
};
/// Arbitrary force field integrated by leapfrog.
struct CustomKind {
    ForceField force;
    double horizon = 1.0;
    int n_steps = 5;
};

using HgfKind = std::variant<DiffusionKind, FlowMatchingKind, OscillationKind, ReflectionKind, CustomKind>;

void validate_kind(const HgfKind& kind);
double horizon(const HgfKind& kind);
std::string kind_name(const HgfKind& kind);

/// alpha = sqrt(d / E||x||^2), which keeps the oscillation flow's scales constant in time.
double natural_alpha(const GaussianMixture& mixture);
/// Per-coordinate hull of mean +- 4 sd over all components, widened by 5% in total.
Box reflection_box(const GaussianMixture& mixture);
/// Rejection sampling of the mixture restricted to `box`.
Mat sample_in_box(const GaussianMixture& mixture, const Box& box, Rng& rng, std::size_t n);

/// Coefficients of a linear flow: x_t = a x + b v, v_t = c x + d v.
struct LinearFlow {
    double a, b, c, d;
};
/// Defined for diffusion, flow matching (with v read as the noise eps) and oscillation.
std::optional<LinearFlow> linear_flow(const HgfKind& kind, double t);

/// Law of training times.
struct TimeDistribution {
    enum class Kind { Uniform, Fixed };
    Kind kind = Kind::Uniform;
    double lo = 0.0;
    double hi = 1.0;

    static TimeDistribution uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
    static TimeDistribution fixed(double t) { return {Kind::Fixed, t, t}; }
    Vec sample(Rng& rng, Eigen::Index n) const;
};

/// Times laid out to match antithetic batches: row i and row i + ceil(n/2) share a time.
Vec paired_times(const TimeDistribution& law, Rng& rng, Eigen::Index n);

/// Draws (x, v) ~ Pi at time zero. With `antithetic`, the second half of the
/// batch reuses the first half's positions with negated Gaussian noise.
PhaseBatch sample_initial(const HgfKind& kind, const GaussianMixture& mixture, Rng& rng, Eigen::Index n,
                          bool antithetic = false);
/// Pushes start states through the kind's flow, one time per row.
PhaseBatch push_forward(const HgfKind& kind, const PhaseBatch& start, const Vec& times);
/// (x_t, v_t) pairs; the training target is v_t.
PhaseBatch sample_pairs(const HgfKind& kind, const GaussianMixture& mixture, Rng& rng, const Vec& times,
                        bool antithetic = false);

struct TrainConfig {
    int batch = 512;
    int iterations = 2000;
    double lr = 1e-3;
    /// Cosine decay from lr to lr * lr_final_fraction over the run.
    double lr_final_fraction = 1.0;
    std::optional<TimeDistribution> time;  // defaults to Uniform[0, horizon)
    std::uint64_t seed = 0;
    bool antithetic = false;
    /// The run counts as converged when the mean losses of its last two
    /// windows of this many steps differ by less than plateau_tol (relative).
    /// 0 disables the check.
    int plateau_window = 0;
    double plateau_tol = 1e-3;
};

double scheduled_lr(double lr, double final_fraction, int iteration, int iterations);

struct TrainResult {
    Mlp net;
    std::vector<double> losses;
    bool plateaued = false;  // convergence flag, see TrainConfig::plateau_window
};

/// Monte-Carlo velocity-prediction loss mean ||V(x_t, t) - v_t||^2 on a tape.
Var velocity_loss(Tape& tape, const Mlp& net, const MlpVars& vars, const PhaseBatch& pairs, const Vec& times);

/// Minimizes the velocity-prediction loss with Adam. Throws DivergedError on a
/// non-finite loss.
TrainResult train_hvp(const HgfKind& kind, const GaussianMixture& mixture, Mlp net, const TrainConfig& config,
                      const std::function<void(int, double)>& on_iteration = {});

/// Exact E[v_t | x_t = x] for linear-flow kinds, by per-component Gaussian
/// conditioning mixed with posterior weights.
Mat analytic_hvp(const HgfKind& kind, const GaussianMixture& mixture, const Mat& x, const Vec& times);
Vec analytic_hvp(const HgfKind& kind, const GaussianMixture& mixture, const Vec& x, double t);

/// Vector field recorded on a tape: (tape, x as 1 x d, t as 1 x 1) -> 1 x d.
using TapeField = std::function<Var(Tape&, Var, Var)>;
TapeField mlp_field(const Mlp& net);

/// F = D_x A(x, t) A(x, t) + dA/dt (x, t): the force whose second-order flow
/// reproduces the first-order flow of A.
Vec fm_force_lift(const TapeField& field, const Vec& x, double t);

struct ScaleCheck {
    Estimate position;      // E ||x_t||^2
    Estimate velocity;      // E ||v_t||^2
    Estimate acceleration;  // E ||d^2 x_t / dt^2||^2
};

/// Monte-Carlo scales of the oscillation flow at time t under pi (x) N(0, I).
ScaleCheck constant_scale_check(const GaussianMixture& mixture, double alpha, double t, std::size_t n, Rng& rng);

}  // namespace hamflow
