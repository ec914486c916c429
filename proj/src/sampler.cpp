#include "hamflow/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace hamflow {

namespace {

Vec polynomial_spacing(int n, double hi, double lo, double rho) {
    Vec out(n);
    const double a = std::pow(hi, 1.0 / rho);
    const double b = std::pow(lo, 1.0 / rho);
    for (int i = 0; i < n; ++i) out(i) = std::pow(a + (b - a) * i / static_cast<double>(n - 1), rho);
    return out;
}

}  // namespace

Terminal terminal_for(const HgfKind& kind, const GaussianMixture& mixture) {
    validate_kind(kind);
    const int d = mixture.dim();
    if (std::holds_alternative<DiffusionKind>(kind)) {
        const double t = horizon(kind);
        return {Terminal::Kind::Gaussian, mixture.mean(), (mixture.coordinate_variance().array() + t * t).matrix(), {}};
    }
    if (std::holds_alternative<FlowMatchingKind>(kind)) return {Terminal::Kind::Gaussian, Vec::Zero(d), Vec::Ones(d), {}};
    if (const auto* osc = std::get_if<OscillationKind>(&kind))
        return {Terminal::Kind::Gaussian, Vec::Zero(d), Vec::Constant(d, 1.0 / (osc->alpha * osc->alpha)), {}};
    if (const auto* refl = std::get_if<ReflectionKind>(&kind)) return {Terminal::Kind::Uniform, {}, {}, refl->box};
    throw std::invalid_argument("terminal: no known terminal distribution for " + kind_name(kind));
}

Mat terminal_sample(const Terminal& terminal, Rng& rng, Eigen::Index n) {
    if (terminal.kind == Terminal::Kind::Uniform) {
        const Box& box = terminal.box;
        Mat out(n, box.dim());
        for (Eigen::Index i = 0; i < n; ++i)
            for (int j = 0; j < box.dim(); ++j) out(i, j) = rng.uniform(box.lo(j), box.hi(j));
        return out;
    }
    Mat out = rng.normal_matrix(n, terminal.mean.size()) * terminal.variance.cwiseSqrt().asDiagonal();
    out.rowwise() += terminal.mean.transpose();
    return out;
}

Vec edm_sigmas(int n, double sigma_min, double sigma_max, double rho) {
    if (n < 2) throw std::invalid_argument("edm_sigmas: need at least two levels");
    if (!(sigma_min > 0.0) || !(sigma_max > sigma_min) || !(rho > 0.0))
        throw std::invalid_argument("edm_sigmas: need 0 < sigma_min < sigma_max and rho > 0");
    return polynomial_spacing(n, sigma_max, sigma_min, rho);
}

Vec edm_time_grid(const Vec& sigmas, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("edm_time_grid: alpha must be positive");
    if (sigmas.size() > 0 && !(sigmas.minCoeff() > 0.0))
        throw std::invalid_argument("edm_time_grid: noise levels must be positive");
    return (sigmas.array().atan() / alpha).matrix();
}

Vec default_grid(const HgfKind& kind, int n_steps, double t_end) {
    if (n_steps < 1) throw std::invalid_argument("grid: n_steps must be at least 1");
    const double t_max = horizon(kind);
    if (!(t_end >= 0.0) || !(t_end < t_max)) throw std::invalid_argument("grid: end time must lie in [0, T)");
    Vec grid(n_steps + 1);
    grid(0) = t_max;
    grid(n_steps) = t_end;
    // With t_end = 0 the last interval runs from the smallest EDM level to zero.
    const int levels = t_end > 0.0 ? n_steps : n_steps - 1;
    if (const auto* osc = std::get_if<OscillationKind>(&kind)) {
        if (levels >= 2) {
            const double sigma_min = t_end > 0.0 ? std::tan(osc->alpha * t_end) : 0.002;
            grid.segment(1, levels) = edm_time_grid(edm_sigmas(levels, sigma_min, 80.0), osc->alpha);
        } else if (n_steps == 2 && levels == 1) {
            grid(1) = std::atan(1.0) / osc->alpha;
        }
    } else if (std::holds_alternative<DiffusionKind>(kind)) {
        if (levels >= 2)
            grid.segment(0, levels + 1) = polynomial_spacing(levels + 1, t_max, t_end > 0.0 ? t_end : 0.002, 7.0);
        else if (n_steps == 2 && levels == 1)
            grid(1) = 0.5 * t_max;
    } else {
        for (int i = 1; i < n_steps; ++i) grid(i) = t_max + (t_end - t_max) * i / static_cast<double>(n_steps);
    }
    grid(0) = t_max;
    grid(n_steps) = t_end;
    for (int i = 0; i < n_steps; ++i)
        if (!(grid(i) > grid(i + 1))) throw std::invalid_argument("grid: time grid is not strictly decreasing");
    return grid;
}

Schedule make_schedule(const HgfKind& kind, const GaussianMixture& mixture, int n_steps, double t_end) {
    return {kind, default_grid(kind, n_steps, t_end), terminal_for(kind, mixture)};
}

Predictor analytic_predictor(const HgfKind& kind, const GaussianMixture& mixture) {
    if (!linear_flow(kind, 0.0)) throw std::invalid_argument("analytic predictor: no closed form for " + kind_name(kind));
    return {[kind, mixture](const Mat& x, double t) {
                return analytic_hvp(kind, mixture, x, Vec::Constant(x.rows(), t));
            },
            0.0};
}

Predictor learned_predictor(const Mlp& net) {
    if (!net.time_conditioned()) throw std::invalid_argument("learned predictor: net must be time-conditioned");
    if (net.input_dim() != net.output_dim()) throw std::invalid_argument("learned predictor: net must map R^d to R^d");
    return {[net](const Mat& x, double t) { return net.forward(x, t); }, kLearnedTimeMin};
}

Mat heun_integrate(const Predictor& predictor, Mat x, const Vec& grid) {
    for (Eigen::Index i = 0; i + 1 < grid.size(); ++i) {
        const double t0 = grid(i);
        const double t1 = grid(i + 1);
        const double h = t1 - t0;
        const Mat d0 = predictor.velocity(x, t0);
        Mat euler = x + h * d0;
        if (t1 < predictor.support_min) {
            x = std::move(euler);
        } else {
            x += 0.5 * h * (d0 + predictor.velocity(euler, t1));
        }
        if (!x.allFinite()) throw DivergedError("heun: non-finite state", static_cast<long>(i));
    }
    return x;
}

Mat heun_sample(const Predictor& predictor, const Schedule& schedule, Rng& rng, Eigen::Index n) {
    const Vec& g = schedule.grid;
    if (g.size() < 2) throw std::invalid_argument("heun_sample: grid needs at least two times");
    for (Eigen::Index i = 0; i + 1 < g.size(); ++i)
        if (!(g(i) > g(i + 1))) throw std::invalid_argument("heun_sample: grid must be strictly decreasing");
    return heun_integrate(predictor, terminal_sample(schedule.terminal, rng, n), g);
}

Mat edm_ode(const GaussianMixture& mixture, const Mat& x, const Vec& sigmas) {
    const Predictor drift{[&mixture](const Mat& y, double sigma) { return Mat(-sigma * mixture.smoothed(sigma).score(y)); },
                          0.0};
    return heun_integrate(drift, x, sigmas);
}

}  // namespace hamflow
