#include "validate.hpp"

#include <chrono>
#include <fstream>
#include <stdexcept>

#include "hamflow/checkpoint.hpp"
#include "scenarios.hpp"

namespace hamflow::cli {

namespace {

using Clock = std::chrono::steady_clock;

class Runner {
public:
    Runner(ValidationReport& report, const std::function<void(const CheckResult&)>& on_check)
        : report_(report), on_check_(on_check) {}

    // `measure` returns the checked value; exceptions count as failures.
    void at_most(const std::string& name, double threshold, const std::function<double()>& measure) {
        run(name, "<=", threshold, measure);
    }
    void at_least(const std::string& name, double threshold, const std::function<double()>& measure) {
        run(name, ">=", threshold, measure);
    }
    void set_detail(std::string detail) { detail_ = std::move(detail); }

private:
    void run(const std::string& name, const std::string& cmp, double threshold, const std::function<double()>& measure) {
        CheckResult r{name, false, 0.0, cmp, threshold, 0.0, ""};
        detail_.clear();
        const auto start = Clock::now();
        try {
            r.value = measure();
            r.passed = cmp == "<=" ? r.value <= threshold : r.value >= threshold;
            r.detail = detail_;
        } catch (const std::exception& e) {
            r.value = std::nan("");
            r.detail = e.what();
        }
        r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
        report_.checks.push_back(r);
        if (on_check_) on_check_(r);
    }

    ValidationReport& report_;
    const std::function<void(const CheckResult&)>& on_check_;
    std::string detail_;
};

Mlp probe_net(std::uint64_t seed) {
    Rng rng(seed);
    Mlp net(MlpSpec{2, 2, {16, 16}, true}, rng);
    net.set_params(0.4 * rng.normal_matrix(static_cast<Eigen::Index>(net.param_count()), 1).col(0));
    return net;
}

std::filesystem::path scratch_dir(std::uint64_t seed) {
    auto dir = std::filesystem::temp_directory_path() / ("hamflow-validate-" + std::to_string(seed) + "-" +
                                                         std::to_string(Clock::now().time_since_epoch().count()));
    std::filesystem::create_directories(dir);
    return dir;
}

// Save, load and compare forward passes bit for bit. Returns the max gap.
double checkpoint_round_trip(const std::filesystem::path& dir, std::uint64_t seed) {
    const Mlp net = probe_net(seed);
    const auto path = dir / "roundtrip.json";
    save_checkpoint(path, net, "validate");
    const Mlp back = load_checkpoint(path);
    Rng rng(seed + 1);
    const Mat x = rng.normal_matrix(64, 2);
    const Vec t = rng.uniform_vector(64, 0.0, 1.0);
    if (back.params() != net.params()) return 1.0;
    return (back.forward(x, &t) - net.forward(x, &t)).cwiseAbs().maxCoeff();
}

// Number of corruptions that load without an integrity error (should be 0).
double undetected_corruptions(const std::filesystem::path& dir, std::uint64_t seed) {
    const Mlp net = probe_net(seed);
    const nlohmann::json good = mlp_to_json(net, "validate");
    std::vector<std::string> variants;
    {
        auto doc = good;
        doc["layers"][0]["weight"][0] = doc["layers"][0]["weight"][0].get<double>() + 1e-9;
        variants.push_back(doc.dump());
    }
    {
        auto doc = good;
        doc["param_digest"] = "0000000000000000";
        variants.push_back(doc.dump());
    }
    {
        auto doc = good;
        doc["layers"][1]["bias"].erase(0);
        variants.push_back(doc.dump());
    }
    const std::string text = good.dump();
    variants.push_back(text.substr(0, text.size() / 2));
    int undetected = 0;
    for (std::size_t i = 0; i < variants.size(); ++i) {
        const auto path = dir / ("corrupt" + std::to_string(i) + ".json");
        std::ofstream(path) << variants[i];
        try {
            load_checkpoint(path);
            ++undetected;
        } catch (const CheckpointError&) {
        }
    }
    return undetected;
}

void fast_checks(Runner& run, std::uint64_t seed) {
    run.at_least("leapfrog energy drift order", 1.9, [] { return energy_drift_order(); });
    run.at_most("leapfrog volume |det - 1|", 1e-6, [&] { return worst_volume_error(seed + 1); });
    run.at_most("leapfrog time reversal", 1e-10, [&] { return reversibility_error(seed + 2); });
    run.at_most("velocity loss gradient vs finite differences", 1e-3, [&] { return mlp_gradient_error(seed + 3); });
    run.at_most("trajectory gradient vs finite differences", 1e-3,
                [&] { return trajectory_gradient_error(seed + 4); });
    run.at_most("analytic HVP vs binned Monte Carlo (z)", 4.5, [&] { return hvp_oracle_z(1000000, seed + 5); });
    run.at_most("HSD closed form at t = 0.5 (relative error)", 0.1, [&] {
        HsdConfig cfg;
        cfg.seed = seed + 6;
        const HsdCheck c = closed_form_hsd(0.5, cfg);
        run.set_detail("hsd " + std::to_string(c.hsd.value) + " truth " + std::to_string(c.truth));
        return c.relative_error();
    });
    run.at_most("Taylor ratio at t = 0.1, |ratio - 1|", 0.02, [&] {
        HsdConfig cfg;
        cfg.n_eval = 2000000;
        const TaylorCheck tc = zero_force_taylor({0.1}, cfg, seed + 7);
        run.set_detail("ratio " + std::to_string(tc.ratio_at(0.1)));
        return std::abs(tc.ratio_at(0.1) - 1.0);
    });
    run.at_most("diffusion loss vs DSM on shared draws", 1e-12, [&] {
        Rng rng(seed + 8);
        const auto e = diffusion_dsm_equivalence(probe_net(seed + 9), reflect2d_mixture(), 256, rng);
        return std::max(e.max_loss_gap, e.max_gradient_gap);
    });
    run.at_most("ISM - ESM constant spread", 0.02, [&] { return ism_constant_spread(200000, seed + 10); });
    run.at_most("EDM endpoint equivalence (256 steps)", 1e-3, [&] { return edm_endpoint_gap(256, 1000, seed + 11); });
    run.at_most("constant scale (standard errors)", 3.0, [&] { return constant_scale_z(100000, seed + 12); });
    run.at_most("reflected marginal KS to uniform at t = 3", 0.02, [&] { return reflection_ks(100000, seed + 13); });
    run.at_most("exact-predictor sampling / baseline", 1.5, [&] {
        const SamplingResult s = exact_sampling(64, 100000, seed + 14);
        run.set_detail("distance " + std::to_string(s.distance) + " baseline " + std::to_string(s.baseline));
        return s.ratio();
    });
}

void full_checks(Runner& run, std::uint64_t seed) {
    for (double t : {0.1, 0.5, 1.0}) {
        run.at_most("HSD closed form at t = " + std::to_string(t).substr(0, 3) + " (n = 2e6)", 0.1, [&] {
            HsdConfig cfg;
            cfg.n_eval = 2000000;
            cfg.seed = seed + 20;
            return closed_form_hsd(t, cfg).relative_error();
        });
    }
    run.at_most("HSM on N(0,1): oracle ESM", 0.02, [&] {
        HsmConfig cfg;
        cfg.iterations = 1000;
        cfg.diagnostic_interval = 100;
        cfg.seed = seed + 21;
        return hsm_run(GaussianMixture::standard_normal(1), cfg, {64, 64}, {64, 64}).final_esm;
    });
    run.at_most("HSM on the bimodal: oracle ESM", 0.1, [&] {
        HsmConfig cfg;
        cfg.iterations = 3000;
        cfg.diagnostic_interval = 250;
        cfg.seed = seed + 22;
        return hsm_run(GaussianMixture::bimodal_1d(), cfg, {64, 64}, {64, 64}).final_esm;
    });
    run.at_least("ESM / HSD Pearson r over 11 snapshots", 0.8, [&] {
        CorrelationSettings cs;
        cs.hsd.iterations = 1000;
        const CorrelationResult r = esm_hsd_correlation(cs, seed + 23);
        return r.r;
    });
    run.at_least("HSM / DSM median SNR at level 0.01", 1.0, [&] {
        SnrConfig cfg;
        cfg.velocity.iterations = 1000;
        const SnrComparison s = snr_comparison(cfg, seed + 24);
        run.set_detail("hsm " + std::to_string(s.hsm) + " dsm " + std::to_string(s.dsm));
        return s.hsm / s.dsm;
    });
    run.at_most("exact-predictor sampling / baseline (second seed)", 1.5,
                [&] { return exact_sampling(64, 100000, seed + 25).ratio(); });
    run.at_most("trained-predictor sampling / baseline", 3.0, [&] {
        PredictorSettings ps;
        ps.train.iterations = 20000;
        ps.train.lr_final_fraction = 0.01;
        ps.train.antithetic = true;
        const SamplingResult s = trained_sampling(ps, seed + 26);
        run.set_detail("distance " + std::to_string(s.distance) + " baseline " + std::to_string(s.baseline));
        return s.ratio();
    });
    run.at_most("reflection backward sampling histogram TV", 0.15, [&] {
        PredictorSettings ps;
        ps.train.iterations = 20000;
        ps.train.lr_final_fraction = 0.01;
        ps.train.antithetic = true;
        ps.hidden = {128, 128};
        ps.steps = 200;
        ps.n = 20000;
        const ReflectionResult r = reflection_sampling(ps, seed + 27);
        run.set_detail("tv " + std::to_string(r.tv(0)) + " " + std::to_string(r.tv(1)));
        return r.worst();
    });
}

}  // namespace

std::string to_string(Level level) { return level == Level::Fast ? "fast" : "full"; }

Level parse_level(const std::string& text) {
    if (text == "fast") return Level::Fast;
    if (text == "full") return Level::Full;
    throw std::invalid_argument("unknown validation level '" + text + "' (expected fast or full)");
}

bool ValidationReport::passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

nlohmann::json ValidationReport::to_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json j = {{"name", c.name},           {"passed", c.passed},   {"comparison", c.comparison},
                            {"threshold", c.threshold}, {"seconds", c.seconds}, {"detail", c.detail}};
        j["value"] = std::isfinite(c.value) ? nlohmann::json(c.value) : nlohmann::json(nullptr);
        list.push_back(j);
    }
    return {{"level", to_string(level)}, {"seed", seed}, {"passed", passed()}, {"seconds", seconds}, {"checks", list}};
}

ValidationReport run_validation(Level level, const std::vector<std::filesystem::path>& checkpoints, std::uint64_t seed,
                                const std::function<void(const CheckResult&)>& on_check) {
    ValidationReport report;
    report.level = level;
    report.seed = seed;
    const auto start = Clock::now();
    Runner run(report, on_check);

    const auto dir = scratch_dir(seed);
    run.at_most("checkpoint round trip max gap", 0.0, [&] { return checkpoint_round_trip(dir, seed); });
    run.at_most("undetected checkpoint corruptions", 0.0, [&] { return undetected_corruptions(dir, seed); });
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    for (const auto& path : checkpoints) {
        run.at_most("checkpoint integrity: " + path.string(), 0.0, [&] {
            load_checkpoint(path);
            return 0.0;
        });
    }

    fast_checks(run, seed);
    if (level == Level::Full) full_checks(run, seed);
    report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return report;
}

}  // namespace hamflow::cli
