#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hamflow/hgf.hpp"

namespace hamflow {

/// Loss terms on one set of draws. l_hsm = l_v - c exactly.
struct HsmTerms {
    double l_hsm = 0.0;  // mean ||V||^2 - 2 V . v_t
    double l_v = 0.0;    // mean ||V - v_t||^2
    double c = 0.0;      // mean ||v_t||^2
};

/// Phase-space flow of `force` started from pi (x) N(0, I): exact for the
/// zero and harmonic forces, leapfrog over [0, horizon] otherwise.
HgfKind boltzmann_kind(const ForceField& force, double horizon, int n_steps);

/// Terms at the end points of trajectories started at `start` and run to `times`.
HsmTerms hsm_terms(const Mlp& velocity, const ForceField& force, const PhaseBatch& start, const Vec& times,
                   int n_steps);
/// Monte-Carlo L_hsm at a fixed time over `batch` fresh draws from pi (x) N(0, I).
HsmTerms hsm_loss(const Mlp& velocity, const ForceField& force, const GaussianMixture& mixture, double t, int batch,
                  Rng& rng, int n_steps = 5);

/// mean(2 V . v_t - ||V||^2) = -L_hsm on a tape.
Var hsm_game(Tape& tape, const Mlp& velocity, const MlpVars& vars, Var x_t, Var v_t, const Vec& times);

struct HsdConfig {
    TimeDistribution time = TimeDistribution::uniform(0.0, 1.0);
    int n_steps = 5;
    int iterations = 2000;
    int batch = 512;
    double lr = 1e-3;
    double lr_final_fraction = 0.05;
    int plateau_window = 100;
    double plateau_tol = 1e-3;
    std::size_t n_eval = 200000;
    std::vector<int> hidden = {64, 64};
    std::uint64_t seed = 0;
};

struct HsdResult {
    Estimate value;
    Mlp velocity;
    bool converged = false;
};

/// Trains a fresh velocity net against the fixed force and returns
/// -min L_hsm averaged over t ~ lambda, with antithetic (v, -v) pairs.
HsdResult hsd_estimate(const ForceField& force, const GaussianMixture& mixture, const HsdConfig& config);

struct HsmConfig {
    double horizon = 1.0;
    std::optional<TimeDistribution> time;  // defaults to Uniform[0, horizon)
    int n_steps = 5;
    int k_inner = 5;
    double lr_theta = 1e-3;
    double lr_phi = 2e-3;
    double lr_final_fraction = 1.0;
    int batch = 512;
    int iterations = 2000;
    int diagnostic_interval = 50;
    std::size_t n_esm = 4096;
    /// Diagnostic records without a new best ESM before the run is flagged as stalled.
    int patience = 20;
    std::uint64_t seed = 0;
};

struct HsmRecord {
    int iteration = 0;
    double esm = 0.0;
    double hsd_proxy = 0.0;  // game value on the latest theta batch
    double l_hsm = 0.0;
};

struct HsmResult {
    Mlp force;
    Mlp velocity;
    std::vector<HsmRecord> records;
    std::vector<Mlp> snapshots;  // force net at every diagnostic record
    bool stalled = false;
};

/// Alternating min-max: k_inner Adam steps on phi minimizing L_v, then one
/// step on theta minimizing the game value through the taped leapfrog.
HsmResult train_hsm(Mlp force, Mlp velocity, const GaussianMixture& mixture, const HsmConfig& config,
                    const std::function<void(const HsmRecord&)>& on_record = {});

/// 1/2 E ||grad log pi - F||^2 with the exact score.
Estimate esm_loss(const ForceField& force, const GaussianMixture& mixture, std::size_t n, Rng& rng);
Estimate esm_loss(const ForceField& force, const GaussianMixture& mixture, const Mat& x);

/// E ||F(x + sigma eps) + eps / sigma||^2.
Estimate dsm_loss(const Mlp& score, const GaussianMixture& mixture, double sigma, std::size_t n, Rng& rng);
/// Per-sample terms ||F(y) + eps / sigma||^2 on a tape, y = x + sigma eps.
Var dsm_per_sample(Tape& tape, const Mlp& score, const MlpVars& vars, const Mat& x, const Mat& eps, double sigma);

/// E[div F + 1/2 ||F||^2]; d <= 2.
Estimate ism_loss(const ForceField& force, const GaussianMixture& mixture, std::size_t n, Rng& rng);
Estimate ism_loss(const ForceField& force, const Mat& x);

/// Diffusion velocity loss vs DSM with F = -V / t on shared draws.
struct DsmEquivalence {
    double max_loss_gap = 0.0;      // max over samples of |L_v - t^2 L_dsm|
    double max_gradient_gap = 0.0;  // max over parameters, batch-mean losses
};
DsmEquivalence diffusion_dsm_equivalence(const Mlp& velocity, const GaussianMixture& mixture, int batch, Rng& rng,
                                         double t_min = 0.05, double t_max = 3.0);

struct TaylorRow {
    double t = 0.0;
    Estimate hsd;
    double taylor = 0.0;  // 2 t^2 L_esm
};
std::vector<TaylorRow> taylor_check(const ForceField& force, const GaussianMixture& mixture,
                                    const std::vector<double>& t_grid, HsdConfig config, std::size_t n_esm,
                                    std::uint64_t seed);

struct CorrelationPair {
    double esm = 0.0;
    Estimate hsd;
};
/// Oracle ESM and HSD for each force net, one fresh velocity net per force.
std::vector<CorrelationPair> esm_hsd_pairs(const std::vector<Mlp>& forces, const GaussianMixture& mixture,
                                           HsdConfig config, std::size_t n_esm, std::uint64_t seed);

enum class SnrMethod { Hsm, Dsm };
std::string to_string(SnrMethod method);

struct SnrRow {
    std::size_t param_id = 0;
    SnrMethod method = SnrMethod::Hsm;
    double level = 0.0;
    double mean = 0.0;
    double std = 0.0;
};

struct SnrConfig {
    std::vector<double> levels = {0.01, 0.1, 1.0};
    int n_batches = 50;
    int batch = 64;
    int n_steps = 5;
    HsdConfig velocity;  // trains the frozen V for HSM at each level
    std::uint64_t seed = 0;
};

/// Per-parameter mean and std of minibatch gradients of the probe net. DSM
/// treats the probe as a score net at noise sigma; HSM treats it as the force
/// with a velocity net trained at lambda = delta_t.
std::vector<SnrRow> snr_diagnostic(SnrMethod method, const Mlp& probe, const GaussianMixture& mixture,
                                   const SnrConfig& config);
/// Median of |mean| / std over the rows at `level`.
double median_snr(const std::vector<SnrRow>& rows, double level);

}  // namespace hamflow
