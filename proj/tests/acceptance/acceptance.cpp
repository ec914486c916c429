// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "scenarios.hpp"

using namespace hamflow;
using namespace hamflow::cli;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kHsdRelative = 0.10;
constexpr double kHsdSecondsPerT = 120.0;
constexpr double kTaylorGap = 0.02;
constexpr double kPearsonMin = 0.8;
constexpr double kCorrelationSeconds = 1800.0;
constexpr double kEsmBimodal = 0.1;
constexpr double kEsmNormal = 0.02;
constexpr double kDsmGap = 1e-12;
constexpr double kExactRatio = 1.5;
constexpr double kTrainedRatio = 3.0;
constexpr double kDriftOrder = 1.9;
constexpr double kVolume = 1e-6;
constexpr double kEdmGap = 1e-3;
constexpr double kScaleZ = 3.0;
constexpr double kKsUniform = 0.02;
constexpr double kHistogramTv = 0.15;
constexpr double kFastSeconds = 120.0;
constexpr double kFullSeconds = 3600.0;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

struct Outcome {
    bool passed = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, const std::function<Outcome()>& body) {
    const auto start = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.passed) ++failures;
    std::printf("%s %2d %s: %s (%.1fs)\n", o.passed ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), since(start));
    std::fflush(stdout);
}

Mlp time_net(int dim, std::uint64_t seed) {
    Rng rng(seed);
    Mlp net(MlpSpec{dim, dim, {32, 32}, true}, rng);
    net.set_params(0.4 * rng.normal_matrix(static_cast<Eigen::Index>(net.param_count()), 1).col(0));
    return net;
}

int run_validate(const std::string& level, const fs::path& out) {
    const std::string cmd = std::string(HAMFLOW_BIN) + " validate " + level + " --out " + out.string() + " > " +
                            (out / "log.txt").string() + " 2>&1";
    fs::create_directories(out);
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

int main() {
    criterion(1, "closed-form HSD, F = 0 on N(0,1)", [] {
        Outcome o{true, ""};
        for (double t : {0.1, 0.5, 1.0}) {
            HsdConfig cfg;
            cfg.n_eval = 2000000;
            cfg.seed = 101;
            const auto start = Clock::now();
            const HsdCheck c = closed_form_hsd(t, cfg);
            const double secs = since(start);
            o.passed = o.passed && c.relative_error() <= kHsdRelative && secs < kHsdSecondsPerT;
            o.detail += "t=" + fmt(t) + " hsd " + fmt(c.hsd.value) + " vs " + fmt(c.truth) + " rel " +
                        fmt(c.relative_error()) + " in " + fmt(secs) + "s; ";
        }
        return o;
    });

    criterion(2, "Taylor law at t = 0.1", [] {
        HsdConfig cfg;
        cfg.n_eval = 2000000;
        cfg.iterations = 4000;
        const TaylorCheck tc = zero_force_taylor({0.1}, cfg, 102);
        const double ratio = tc.ratio_at(0.1);
        return Outcome{std::abs(ratio - 1.0) <= kTaylorGap,
                       "HSD / (2 t^2 L_esm) = " + fmt(ratio) + " (closed form " + fmt(1.0 / 1.01) + ")"};
    });

    criterion(3, "HSD / ESM correlation over HSM snapshots", [] {
        const auto start = Clock::now();
        CorrelationSettings cs;
        cs.hsd.iterations = 1000;
        const CorrelationResult r = esm_hsd_correlation(cs, 103);
        const double secs = since(start);
        return Outcome{r.pairs.size() >= 10 && r.r >= kPearsonMin && secs <= kCorrelationSeconds,
                       "Pearson r = " + fmt(r.r) + " over " + std::to_string(r.pairs.size()) + " snapshots, ESM " +
                           fmt(r.pairs.front().esm) + " -> " + fmt(r.pairs.back().esm)};
    });

    criterion(4, "HSM learns the score", [] {
        HsmConfig bi;
        bi.iterations = 3000;
        bi.diagnostic_interval = 250;
        bi.seed = 104;
        const double esm_bi = hsm_run(GaussianMixture::bimodal_1d(), bi, {64, 64}, {64, 64}).final_esm;
        HsmConfig g;
        g.iterations = 1000;
        g.diagnostic_interval = 100;
        g.seed = 105;
        const double esm_g = hsm_run(GaussianMixture::standard_normal(1), g, {64, 64}, {64, 64}).final_esm;
        return Outcome{esm_bi <= kEsmBimodal && esm_g <= kEsmNormal,
                       "ESM bimodal " + fmt(esm_bi) + ", N(0,1) " + fmt(esm_g)};
    });

    criterion(5, "diffusion velocity loss equals DSM", [] {
        double worst = 0.0;
        Rng rng(106);
        for (const auto& m : {GaussianMixture::bimodal_1d(), reflect2d_mixture()}) {
            const DsmEquivalence e = diffusion_dsm_equivalence(time_net(m.dim(), 107), m, 512, rng);
            worst = std::max({worst, e.max_loss_gap, e.max_gradient_gap});
        }
        return Outcome{worst <= kDsmGap, "max loss / gradient gap " + fmt(worst)};
    });

    criterion(6, "oscillation HGF sampling", [] {
        const SamplingResult exact = exact_sampling(64, 100000, 108);
        PredictorSettings ps;
        ps.train.iterations = 20000;
        ps.train.lr_final_fraction = 0.01;
        ps.train.antithetic = true;
        const SamplingResult trained = trained_sampling(ps, 109);
        return Outcome{exact.ratio() <= kExactRatio && trained.ratio() <= kTrainedRatio,
                       "exact " + fmt(exact.ratio()) + "x baseline " + fmt(exact.baseline) + ", trained " +
                           fmt(trained.ratio()) + "x"};
    });

    criterion(7, "integrator invariants", [] {
        const double order = energy_drift_order();
        const double vol = worst_volume_error(110);
        return Outcome{order >= kDriftOrder && vol <= kVolume,
                       "drift order " + fmt(order) + ", max |det - 1| " + fmt(vol)};
    });

    criterion(8, "EDM equivalence, 256 steps", [] {
        const double gap = edm_endpoint_gap(256, 2000, 111);
        return Outcome{gap <= kEdmGap, "max endpoint gap " + fmt(gap)};
    });

    criterion(9, "constant scale with natural alpha", [] {
        const double z = constant_scale_z(100000, 112);
        return Outcome{z <= kScaleZ, "worst deviation " + fmt(z) + " standard errors"};
    });

    criterion(10, "SNR direction at the smallest level", [] {
        Outcome o{true, ""};
        for (std::uint64_t seed : {113, 114, 115}) {
            SnrConfig cfg;
            cfg.velocity.iterations = 1000;
            const SnrComparison s = snr_comparison(cfg, seed);
            o.passed = o.passed && s.hsm > s.dsm;
            o.detail += "seed " + std::to_string(seed) + " level " + fmt(s.level) + ": hsm " + fmt(s.hsm) + " dsm " +
                        fmt(s.dsm) + "; ";
        }
        return o;
    });

    criterion(11, "reflection HGF", [] {
        const double ks = reflection_ks(100000, 116);
        PredictorSettings ps;
        ps.train.iterations = 20000;
        ps.train.lr_final_fraction = 0.01;
        ps.train.antithetic = true;
        ps.hidden = {128, 128};
        ps.steps = 200;
        ps.n = 20000;
        const ReflectionResult r = reflection_sampling(ps, 117);
        return Outcome{ks <= kKsUniform && r.worst() <= kHistogramTv,
                       "KS " + fmt(ks) + ", histogram TV " + fmt(r.tv(0)) + " / " + fmt(r.tv(1))};
    });

    criterion(12, "validate fast and full", [] {
        const fs::path dir = fs::temp_directory_path() / "hamflow-acceptance";
        fs::remove_all(dir);
        auto start = Clock::now();
        const int fast_rc = run_validate("fast", dir / "fast");
        const double fast_s = since(start);
        start = Clock::now();
        const int full_rc = run_validate("full", dir / "full");
        const double full_s = since(start);
        return Outcome{fast_rc == 0 && fast_s < kFastSeconds && full_rc == 0 && full_s < kFullSeconds,
                       "fast exit " + std::to_string(fast_rc) + " in " + fmt(fast_s) + "s, full exit " +
                           std::to_string(full_rc) + " in " + fmt(full_s) + "s (logs in " + dir.string() + ")"};
    });

    std::printf("%d of 12 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
