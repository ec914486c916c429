#pragma once

#include <functional>

#include "hamflow/hgf.hpp"

namespace hamflow {

/// Learned predictors are not trusted below this time.
inline constexpr double kLearnedTimeMin = 1e-3;

/// Distribution of x_T that backward integration starts from.
struct Terminal {
    enum class Kind { Gaussian, Uniform };
    Kind kind = Kind::Gaussian;
    Vec mean;      // Gaussian: per-coordinate mean
    Vec variance;  // Gaussian: per-coordinate variance
    Box box;       // Uniform
};

/// Oscillation: exact N(0, I / alpha^2). Flow matching: N(0, I) at t = 1.
/// Reflection: uniform on the box. Diffusion: Gaussian with the exact first
/// two moments of x + T v.
Terminal terminal_for(const HgfKind& kind, const GaussianMixture& mixture);
Mat terminal_sample(const Terminal& terminal, Rng& rng, Eigen::Index n);

struct Schedule {
    HgfKind kind;
    Vec grid;  // strictly decreasing, grid(0) = T
    Terminal terminal;
};

/// EDM noise levels sigma_max^(1/rho) ... sigma_min^(1/rho) raised to rho, n >= 2 values.
Vec edm_sigmas(int n, double sigma_min = 0.002, double sigma_max = 80.0, double rho = 7.0);
/// arctan(sigma) / alpha for each sigma > 0.
Vec edm_time_grid(const Vec& sigmas, double alpha = 1.0);

/// Default grid with n_steps intervals from T down to t_end: arctan-mapped EDM
/// spacing for oscillation, EDM spacing in sigma = t for diffusion, uniform otherwise.
Vec default_grid(const HgfKind& kind, int n_steps, double t_end);
Schedule make_schedule(const HgfKind& kind, const GaussianMixture& mixture, int n_steps, double t_end);

/// Velocity predictor with the smallest time it may be queried at.
struct Predictor {
    std::function<Mat(const Mat&, double)> velocity;
    double support_min = 0.0;
};
Predictor analytic_predictor(const HgfKind& kind, const GaussianMixture& mixture);
Predictor learned_predictor(const Mlp& net);

/// Heun steps along `grid` (any direction). A step whose end time lies below
/// the predictor's support falls back to Euler. Throws DivergedError on
/// non-finite state.
Mat heun_integrate(const Predictor& predictor, Mat x, const Vec& grid);
Mat heun_sample(const Predictor& predictor, const Schedule& schedule, Rng& rng, Eigen::Index n);

/// dx/dsigma = -sigma * grad log pi_sigma(x), integrated with Heun over `sigmas`.
Mat edm_ode(const GaussianMixture& mixture, const Mat& x, const Vec& sigmas);

}  // namespace hamflow
