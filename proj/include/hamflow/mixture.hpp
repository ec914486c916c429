#pragma once

#include <vector>

#include "hamflow/rng.hpp"
#include "hamflow/types.hpp"

namespace hamflow {

/// Isotropic Gaussian mixture: sum_i w_i N(mu_i, s_i^2 I_d).
///
/// Every density quantity is computed through log-sum-exp, so tail points far
/// from all components still produce finite scores and posteriors.
class GaussianMixture {
public:
    GaussianMixture(std::vector<double> weights, std::vector<Vec> means, std::vector<double> variances);

    static GaussianMixture standard_normal(int dim);
    /// 0.4 N(-2, 1) + 0.6 N(2, 1), the one-dimensional bimodal fixture.
    static GaussianMixture bimodal_1d();

    int dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return weights_.size(); }
    const std::vector<double>& weights() const noexcept { return weights_; }
    const std::vector<Vec>& means() const noexcept { return means_; }
    const std::vector<double>& variances() const noexcept { return variances_; }

    double log_density(const Vec& x) const;
    Vec score(const Vec& x) const;
    Vec posterior(const Vec& x) const;
    /// Hessian of log density, used for vector-Jacobian products of the score.
    Mat log_density_hessian(const Vec& x) const;
    /// Trace of the Hessian of log density (divergence of the score).
    double score_divergence(const Vec& x) const;

    Vec log_density(const Mat& points) const;
    Mat score(const Mat& points) const;

    Mat sample(Rng& rng, std::size_t n) const;

    Vec mean() const;
    /// E ||x||^2.
    double second_moment() const;
    /// Per-coordinate variance of the mixture.
    Vec coordinate_variance() const;

    /// Law of x + sigma * eps with eps ~ N(0, I).
    GaussianMixture smoothed(double sigma) const;
    /// Law of a * x + b * eps with eps ~ N(0, I) independent of x.
    GaussianMixture linear_push(double a, double b) const;

private:
    void check_point(const Vec& x) const;
    Vec component_log_terms(const Vec& x) const;

    int dim_;
    std::vector<double> weights_;
    std::vector<Vec> means_;
    std::vector<double> variances_;
    std::vector<double> log_weights_;
};

}  // namespace hamflow
