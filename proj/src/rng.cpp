#include "hamflow/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace hamflow {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

Estimate mean_estimate(const Eigen::Ref<const Vec>& values) {
    const auto n = values.size();
    if (n == 0) throw std::invalid_argument("mean_estimate: empty sample");
    const double mean = values.mean();
    if (n == 1) return {mean, 0.0};
    const double var = (values.array() - mean).square().sum() / static_cast<double>(n - 1);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), key_(mix64(seed + kGolden) ^ mix64(~stream * kGolden)) {}

std::uint64_t Rng::next_u64() {
    return mix64(key_ + (counter_++) * kGolden);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::size_t Rng::categorical(const std::vector<double>& weights) {
    if (weights.empty()) throw std::invalid_argument("categorical: no weights");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    const double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return i;
    }
    // u landed on the rounding gap at the top end.
    for (std::size_t i = weights.size(); i-- > 0;)
        if (weights[i] > 0.0) return i;
    return weights.size() - 1;
}

Mat Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Mat out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal();
    return out;
}

Vec Rng::uniform_vector(Eigen::Index n, double lo, double hi) {
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = uniform(lo, hi);
    return out;
}

Rng Rng::split(std::uint64_t stream) const {
    return Rng(mix64(key_ ^ mix64(counter_ + kGolden)), stream + 1);
}

}  // namespace hamflow
