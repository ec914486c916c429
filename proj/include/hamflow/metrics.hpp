#pragma once

#include <cstddef>

#include "hamflow/mixture.hpp"
#include "hamflow/rng.hpp"

namespace hamflow {

/// Energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| as a V-statistic over all
/// pairs. Exact in O(n log n) for d = 1; for d > 1 each set is thinned to at
/// most `max_points` rows (deterministically, evenly strided).
double energy_distance(const Mat& a, const Mat& b, std::size_t max_points = 4000);

/// Root mean over random unit directions of the squared 1D Wasserstein-2
/// distance between the projections (quantile matching).
double sliced_w2(const Mat& a, const Mat& b, int n_projections, Rng& rng);

/// Kolmogorov-Smirnov distance of a sample to Uniform[lo, hi].
double ks_uniform(Vec samples, double lo, double hi);

/// Total variation between normalized histograms on [lo, hi] with `bins` cells.
/// Values outside the range are clamped into the edge cells.
double histogram_tv(const Vec& a, const Vec& b, double lo, double hi, int bins);

/// Sample Pearson correlation; throws if either input is constant.
double pearson(const Vec& a, const Vec& b);

struct MomentRow {
    int dim = 0;
    double sample_mean = 0.0;
    double true_mean = 0.0;
    double sample_variance = 0.0;
    double true_variance = 0.0;
};
std::vector<MomentRow> moment_table(const Mat& samples, const GaussianMixture& mixture);

}  // namespace hamflow
