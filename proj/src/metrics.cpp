#include "hamflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace hamflow {

namespace {

std::vector<double> sorted(const Eigen::Ref<const Vec>& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    std::sort(out.begin(), out.end());
    return out;
}

/// Sum over ordered pairs of |x_i - x_j| for sorted x.
double self_pair_sum(const std::vector<double>& x) {
    const auto n = static_cast<double>(x.size());
    double total = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) total += x[j] * (2.0 * static_cast<double>(j) - n + 1.0);
    return 2.0 * total;
}

/// Sum over all (i, j) of |x_i - y_j| for sorted x and y.
double cross_pair_sum(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> prefix(y.size() + 1, 0.0);
    for (std::size_t j = 0; j < y.size(); ++j) prefix[j + 1] = prefix[j] + y[j];
    const double total_y = prefix.back();
    const auto m = static_cast<double>(y.size());
    double total = 0.0;
    std::size_t k = 0;
    for (double xi : x) {
        while (k < y.size() && y[k] < xi) ++k;
        const auto below = static_cast<double>(k);
        total += xi * below - prefix[k] + (total_y - prefix[k]) - xi * (m - below);
    }
    return total;
}

Mat thin(const Mat& a, std::size_t max_points) {
    const auto n = static_cast<std::size_t>(a.rows());
    if (n <= max_points) return a;
    Mat out(static_cast<Eigen::Index>(max_points), a.cols());
    for (std::size_t i = 0; i < max_points; ++i) out.row(static_cast<Eigen::Index>(i)) = a.row(static_cast<Eigen::Index>(i * n / max_points));
    return out;
}

double mean_pair_distance(const Mat& a, const Mat& b) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) total += (b.rowwise() - a.row(i)).rowwise().norm().sum();
    return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

double quantile(const std::vector<double>& s, double p) {
    const double pos = p * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace

double energy_distance(const Mat& a, const Mat& b, std::size_t max_points) {
    if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("energy_distance: empty sample");
    if (a.cols() != b.cols()) throw std::invalid_argument("energy_distance: dimension mismatch");
    if (a.cols() == 1) {
        const auto xa = sorted(a.col(0));
        const auto xb = sorted(b.col(0));
        const auto na = static_cast<double>(xa.size());
        const auto nb = static_cast<double>(xb.size());
        return 2.0 * cross_pair_sum(xa, xb) / (na * nb) - self_pair_sum(xa) / (na * na) - self_pair_sum(xb) / (nb * nb);
    }
    const Mat ta = thin(a, max_points);
    const Mat tb = thin(b, max_points);
    return 2.0 * mean_pair_distance(ta, tb) - mean_pair_distance(ta, ta) - mean_pair_distance(tb, tb);
}

double sliced_w2(const Mat& a, const Mat& b, int n_projections, Rng& rng) {
    if (a.cols() != b.cols()) throw std::invalid_argument("sliced_w2: dimension mismatch");
    if (a.rows() < 2 || b.rows() < 2 || n_projections < 1) throw std::invalid_argument("sliced_w2: need data and projections");
    const auto n = static_cast<std::size_t>(std::min(a.rows(), b.rows()));
    double total = 0.0;
    for (int p = 0; p < n_projections; ++p) {
        Vec dir = rng.normal_matrix(a.cols(), 1).col(0);
        dir /= dir.norm();
        const auto pa = sorted(a * dir);
        const auto pb = sorted(b * dir);
        double w2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
            const double diff = quantile(pa, q) - quantile(pb, q);
            w2 += diff * diff;
        }
        total += w2 / static_cast<double>(n);
    }
    return std::sqrt(total / n_projections);
}

double ks_uniform(Vec samples, double lo, double hi) {
    if (samples.size() == 0 || !(hi > lo)) throw std::invalid_argument("ks_uniform: need samples and lo < hi");
    std::sort(samples.data(), samples.data() + samples.size());
    const auto n = static_cast<double>(samples.size());
    double d = 0.0;
    for (Eigen::Index i = 0; i < samples.size(); ++i) {
        const double f = std::clamp((samples(i) - lo) / (hi - lo), 0.0, 1.0);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

double histogram_tv(const Vec& a, const Vec& b, double lo, double hi, int bins) {
    if (bins < 1 || !(hi > lo) || a.size() == 0 || b.size() == 0) throw std::invalid_argument("histogram_tv: bad arguments");
    const auto hist = [&](const Vec& v) {
        Vec h = Vec::Zero(bins);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const int k = std::clamp(static_cast<int>(std::floor((v(i) - lo) / (hi - lo) * bins)), 0, bins - 1);
            h(k) += 1.0;
        }
        return Vec(h / static_cast<double>(v.size()));
    };
    return 0.5 * (hist(a) - hist(b)).cwiseAbs().sum();
}

double pearson(const Vec& a, const Vec& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: need two equal-length samples");
    const Vec da = a.array() - a.mean();
    const Vec db = b.array() - b.mean();
    const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
    if (!(denom > 0.0)) throw std::invalid_argument("pearson: constant input");
    return da.dot(db) / denom;
}

std::vector<MomentRow> moment_table(const Mat& samples, const GaussianMixture& mixture) {
    if (samples.cols() != mixture.dim() || samples.rows() < 2) throw std::invalid_argument("moment_table: bad sample");
    const Vec mean = samples.colwise().mean().transpose();
    const Vec var = ((samples.rowwise() - mean.transpose()).colwise().squaredNorm() / static_cast<double>(samples.rows() - 1)).transpose();
    const Vec true_mean = mixture.mean();
    const Vec true_var = mixture.coordinate_variance();
    std::vector<MomentRow> rows;
    for (int j = 0; j < mixture.dim(); ++j) rows.push_back({j, mean(j), true_mean(j), var(j), true_var(j)});
    return rows;
}

}  // namespace hamflow
