#include "hamflow/mixture.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace hamflow {

namespace {

double log_sum_exp(const Vec& terms) {
    const double top = terms.maxCoeff();
    if (!std::isfinite(top)) return top;
    return top + std::log((terms.array() - top).exp().sum());
}

}  // namespace

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<Vec> means,
                                 std::vector<double> variances)
    : dim_(0), weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)) {
    if (weights_.empty()) throw std::invalid_argument("mixture: at least one component required");
    if (means_.size() != weights_.size() || variances_.size() != weights_.size())
        throw std::invalid_argument("mixture: weights, means and variances must have equal length");
    dim_ = static_cast<int>(means_.front().size());
    if (dim_ < 1) throw std::invalid_argument("mixture: dimension must be positive");
    double total = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        if (!(weights_[i] >= 0.0)) throw std::invalid_argument("mixture: weights must be non-negative");
        if (!(variances_[i] > 0.0) || !std::isfinite(variances_[i]))
            throw std::invalid_argument("mixture: variances must be positive and finite");
        if (means_[i].size() != dim_) throw std::invalid_argument("mixture: all means must share one dimension");
        if (!means_[i].allFinite()) throw std::invalid_argument("mixture: means must be finite");
        total += weights_[i];
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("mixture: weights must sum to 1");
    log_weights_.reserve(weights_.size());
    for (double w : weights_) log_weights_.push_back(std::log(w));
}

GaussianMixture GaussianMixture::standard_normal(int dim) {
    return GaussianMixture({1.0}, {Vec::Zero(dim)}, {1.0});
}

GaussianMixture GaussianMixture::bimodal_1d() {
    return GaussianMixture({0.4, 0.6}, {Vec::Constant(1, -2.0), Vec::Constant(1, 2.0)}, {1.0, 1.0});
}

void GaussianMixture::check_point(const Vec& x) const {
    if (x.size() != dim_)
        throw std::invalid_argument("mixture: point has dimension " + std::to_string(x.size()) + ", expected " +
                                    std::to_string(dim_));
}

Vec GaussianMixture::component_log_terms(const Vec& x) const {
    Vec terms(static_cast<Eigen::Index>(size()));
    const double log2pi = std::log(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < size(); ++i) {
        const double var = variances_[i];
        terms(static_cast<Eigen::Index>(i)) = log_weights_[i] - 0.5 * (x - means_[i]).squaredNorm() / var -
                                              0.5 * dim_ * (log2pi + std::log(var));
    }
    return terms;
}

double GaussianMixture::log_density(const Vec& x) const {
    check_point(x);
    return log_sum_exp(component_log_terms(x));
}

Vec GaussianMixture::posterior(const Vec& x) const {
    check_point(x);
    const Vec terms = component_log_terms(x);
    const double norm = log_sum_exp(terms);
    return (terms.array() - norm).exp().matrix();
}

Vec GaussianMixture::score(const Vec& x) const {
    const Vec r = posterior(x);
    Vec s = Vec::Zero(dim_);
    for (std::size_t i = 0; i < size(); ++i)
        s += r(static_cast<Eigen::Index>(i)) * (means_[i] - x) / variances_[i];
    return s;
}

Mat GaussianMixture::log_density_hessian(const Vec& x) const {
    const Vec r = posterior(x);
    Mat h = Mat::Zero(dim_, dim_);
    Vec s = Vec::Zero(dim_);
    for (std::size_t i = 0; i < size(); ++i) {
        const double ri = r(static_cast<Eigen::Index>(i));
        const Vec g = (means_[i] - x) / variances_[i];
        s += ri * g;
        h += ri * (g * g.transpose());
        h.diagonal().array() -= ri / variances_[i];
    }
    return h - s * s.transpose();
}

double GaussianMixture::score_divergence(const Vec& x) const {
    const Vec r = posterior(x);
    Vec s = Vec::Zero(dim_);
    double trace = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
        const double ri = r(static_cast<Eigen::Index>(i));
        const Vec g = (means_[i] - x) / variances_[i];
        s += ri * g;
        trace += ri * (g.squaredNorm() - dim_ / variances_[i]);
    }
    return trace - s.squaredNorm();
}

Vec GaussianMixture::log_density(const Mat& points) const {
    Vec out(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i) out(i) = log_density(Vec(points.row(i).transpose()));
    return out;
}

Mat GaussianMixture::score(const Mat& points) const {
    if (points.cols() != dim_) throw std::invalid_argument("mixture: batch has wrong dimension");
    Mat out(points.rows(), dim_);
    for (Eigen::Index i = 0; i < points.rows(); ++i) out.row(i) = score(Vec(points.row(i).transpose())).transpose();
    return out;
}

Mat GaussianMixture::sample(Rng& rng, std::size_t n) const {
    Mat out(static_cast<Eigen::Index>(n), dim_);
    for (Eigen::Index row = 0; row < out.rows(); ++row) {
        const std::size_t k = rng.categorical(weights_);
        const double sd = std::sqrt(variances_[k]);
        for (int j = 0; j < dim_; ++j) out(row, j) = means_[k](j) + sd * rng.normal();
    }
    return out;
}

Vec GaussianMixture::mean() const {
    Vec m = Vec::Zero(dim_);
    for (std::size_t i = 0; i < size(); ++i) m += weights_[i] * means_[i];
    return m;
}

double GaussianMixture::second_moment() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < size(); ++i) acc += weights_[i] * (means_[i].squaredNorm() + dim_ * variances_[i]);
    return acc;
}

Vec GaussianMixture::coordinate_variance() const {
    const Vec m = mean();
    Vec second = Vec::Zero(dim_);
    for (std::size_t i = 0; i < size(); ++i)
        second += weights_[i] * (means_[i].array().square() + variances_[i]).matrix();
    return (second.array() - m.array().square()).matrix();
}

GaussianMixture GaussianMixture::smoothed(double sigma) const {
    return linear_push(1.0, sigma);
}

GaussianMixture GaussianMixture::linear_push(double a, double b) const {
    std::vector<Vec> means;
    std::vector<double> variances;
    for (std::size_t i = 0; i < size(); ++i) {
        means.push_back(a * means_[i]);
        variances.push_back(a * a * variances_[i] + b * b);
    }
    return GaussianMixture(weights_, std::move(means), std::move(variances));
}

}  // namespace hamflow
