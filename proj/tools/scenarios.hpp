#pragma once

#include <cstdint>
#include <vector>

#include "hamflow/hsm.hpp"
#include "hamflow/sampler.hpp"

// Reusable experiment runs behind `validate` and the acceptance binary. Each
// returns raw measurements; callers own the pass thresholds.
namespace hamflow::cli {

/// 0.3 N((-0.5,-0.4)) + 0.3 N((0.5,-0.4)) + 0.4 N((0,0.5)), variance 0.0225.
GaussianMixture reflect2d_mixture();

/// Smallest observed leapfrog energy-drift order under step halving, over
/// score forces of the 1D bimodal and a 2D mixture.
double energy_drift_order();
/// Largest |det D phi - 1| of the leapfrog map over 1D, 2D and learned-force probes.
double worst_volume_error(std::uint64_t seed);
/// Largest |phi^-1(phi(z)) - z| after integrating forward then backward.
double reversibility_error(std::uint64_t seed);
/// Largest relative gap between tape and central-difference parameter gradients.
double mlp_gradient_error(std::uint64_t seed);
/// Same for the start-state gradient through a taped leapfrog trajectory.
double trajectory_gradient_error(std::uint64_t seed);

/// Largest |bin mean - analytic| / standard error over 50 equal-mass bins.
double hvp_oracle_z(std::size_t n, std::uint64_t seed);
/// Spread (max - min) of ISM - ESM over four forces on the bimodal.
double ism_constant_spread(std::size_t n, std::uint64_t seed);
/// Largest deviation from d / alpha^2, d and alpha^2 d in standard errors,
/// over t in {0, T/4, T/2} on the bimodal with natural alpha.
double constant_scale_z(std::size_t n, std::uint64_t seed);
/// Worst per-dimension KS distance to uniform of the reflected reflect2d marginal at t = 3.
double reflection_ks(std::size_t n, std::uint64_t seed);
/// Max endpoint gap between the EDM ODE and the arctan-mapped oscillation ODE.
double edm_endpoint_gap(int steps, std::size_t n, std::uint64_t seed);

struct HsdCheck {
    double t = 0.0;
    Estimate hsd;
    double truth = 0.0;  // t^2 / (1 + t^2)
    double relative_error() const { return std::abs(hsd.value / truth - 1.0); }
};
/// Zero force on N(0,1) at lambda = delta_t.
HsdCheck closed_form_hsd(double t, const HsdConfig& config);

struct TaylorCheck {
    std::vector<TaylorRow> rows;
    double ratio_at(double t) const;
};
/// Zero force on N(0,1); L_esm = 1/2 exactly, so the Taylor column is t^2.
TaylorCheck zero_force_taylor(const std::vector<double>& t_grid, const HsdConfig& config, std::uint64_t seed);

struct HsmRun {
    double final_esm = 0.0;
    HsmResult result;
};
HsmRun hsm_run(const GaussianMixture& mixture, const HsmConfig& config, const std::vector<int>& force_hidden,
               const std::vector<int>& velocity_hidden);

struct CorrelationSettings {
    int snapshots = 11;
    int interval = 30;      // HSM iterations between snapshots
    HsdConfig hsd;          // per-snapshot estimator
    std::size_t n_esm = 20000;
};
struct CorrelationResult {
    std::vector<CorrelationPair> pairs;
    double r = 0.0;
};
/// Snapshots of an early HSM run on the bimodal; Pearson r of (ESM, HSD).
CorrelationResult esm_hsd_correlation(const CorrelationSettings& settings, std::uint64_t seed);

struct SamplingResult {
    double distance = 0.0;  // energy distance to a fresh true sample
    double baseline = 0.0;  // between two fresh true samples
    double ratio() const { return distance / baseline; }
};
SamplingResult compare_to_truth(const Mat& samples, const GaussianMixture& mixture, std::uint64_t seed);
/// Analytic HVP, oscillation with natural alpha on the bimodal.
SamplingResult exact_sampling(int steps, std::size_t n, std::uint64_t seed);

struct PredictorSettings {
    TrainConfig train;
    std::vector<int> hidden = {64, 64};
    int steps = 64;
    std::size_t n = 100000;
};
/// Trained predictor for the oscillation HGF on the bimodal.
SamplingResult trained_sampling(const PredictorSettings& settings, std::uint64_t seed);

struct ReflectionResult {
    Vec tv;  // per-dimension histogram total variation, 40 bins on the box
    double worst() const { return tv.maxCoeff(); }
};
/// Trained predictor for the reflection HGF on reflect2d.
ReflectionResult reflection_sampling(const PredictorSettings& settings, std::uint64_t seed);

struct SnrComparison {
    double level = 0.0;
    double hsm = 0.0;
    double dsm = 0.0;
};
/// Median gradient SNR of both methods at the smallest of `config.levels`.
SnrComparison snr_comparison(const SnrConfig& config, std::uint64_t seed);

}  // namespace hamflow::cli
