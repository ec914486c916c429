#include "commands.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <Eigen/Core>

#include "config.hpp"
#include "csv.hpp"
#include "hamflow/checkpoint.hpp"
#include "hamflow/metrics.hpp"
#include "scenarios.hpp"

namespace hamflow::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Threads are validated up front so a bad value fails before any work.
int apply_threads() {
    const int n = requested_threads();
    Eigen::setNbThreads(n);
    return n;
}

ExperimentConfig prepare(const fs::path& path, const RunOptions& options) {
    ExperimentConfig cfg = load_config(path);
    if (options.seed) cfg.set_seed(*options.seed);
    if (options.out) cfg.out = *options.out;
    return cfg;
}

fs::path output_dir(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out);
    return cfg.out;
}

json metadata(const std::string& command, const ExperimentConfig& cfg, int threads) {
    return {{"command", command},
            {"created", utc_now()},
            {"config", cfg.resolved()},
            {"config_hash", cfg.hash()},
            {"threads_requested", threads},
            {"threads_effective", Eigen::nbThreads()}};
}

int checked_iterations(const std::optional<int>& flag, int fallback) {
    if (!flag) return fallback;
    if (*flag < 0) throw ConfigError("--iterations must be >= 0");
    return *flag;
}

}  // namespace

int requested_threads() {
    const char* raw = std::getenv("HAMFLOW_THREADS");
    if (!raw || !*raw) return 1;
    char* end = nullptr;
    const long n = std::strtol(raw, &end, 10);
    if (*end != '\0' || n < 1 || n > 1024)
        throw ConfigError(std::string("HAMFLOW_THREADS must be a positive integer, got '") + raw + "'");
    return static_cast<int>(n);
}

int cmd_train_hvp(const fs::path& config, const RunOptions& options) {
    const int threads = apply_threads();
    ExperimentConfig cfg = prepare(config, options);
    cfg.train.iterations = checked_iterations(options.iterations, cfg.train.iterations);
    const fs::path dir = output_dir(cfg);

    Rng init(cfg.seed, 1);
    const TrainResult r = train_hvp(cfg.kind, cfg.mixture, Mlp(cfg.net, init), cfg.train);
    save_checkpoint(dir / "hvp.json", r.net, cfg.hash());
    CsvWriter csv(dir / "hvp_loss.csv", {"iteration", "loss"});
    for (std::size_t i = 0; i < r.losses.size(); ++i) csv.row(std::vector<double>{static_cast<double>(i), r.losses[i]});
    csv.close();

    json meta = metadata("train-hvp", cfg, threads);
    meta["plateaued"] = r.plateaued;
    meta["final_loss"] = r.losses.empty() ? json(nullptr) : json(r.losses.back());
    meta["param_digest"] = param_digest(r.net.params());
    write_json(dir / "hvp_metadata.json", meta);
    std::cout << "train-hvp: " << r.losses.size() << " iterations";
    if (!r.losses.empty()) std::cout << ", final loss " << format_double(r.losses.back());
    std::cout << "\nwrote " << (dir / "hvp.json").string() << '\n';
    return kExitOk;
}

int cmd_train_hsm(const fs::path& config, const RunOptions& options) {
    const int threads = apply_threads();
    ExperimentConfig cfg = prepare(config, options);
    HsmConfig hc = cfg.hsm.config;
    hc.iterations = checked_iterations(options.iterations, hc.iterations);
    const fs::path dir = output_dir(cfg);

    const int d = cfg.mixture.dim();
    Rng init(cfg.seed, 2);
    Mlp force(MlpSpec{d, d, cfg.hsm.force_hidden, false, cfg.net.fourier_features}, init);
    Mlp velocity(MlpSpec{d, d, cfg.hsm.velocity_hidden, true, cfg.net.fourier_features}, init);
    const HsmResult r = train_hsm(std::move(force), std::move(velocity), cfg.mixture, hc);

    save_checkpoint(dir / "force.json", r.force, cfg.hash());
    save_checkpoint(dir / "velocity.json", r.velocity, cfg.hash());
    CsvWriter csv(dir / "hsm_diagnostics.csv", {"iteration", "esm", "hsd_proxy", "l_hsm"});
    for (const auto& rec : r.records)
        csv.row(std::vector<double>{static_cast<double>(rec.iteration), rec.esm, rec.hsd_proxy, rec.l_hsm});
    csv.close();

    json meta = metadata("train-hsm", cfg, threads);
    meta["stalled"] = r.stalled;
    meta["final_esm"] = r.records.empty() ? json(nullptr) : json(r.records.back().esm);
    write_json(dir / "hsm_metadata.json", meta);
    if (r.stalled) std::cerr << "warning: ESM stopped improving for " << hc.patience << " diagnostic records\n";
    std::cout << "train-hsm: " << hc.iterations << " iterations";
    if (!r.records.empty()) std::cout << ", final ESM " << format_double(r.records.back().esm);
    std::cout << "\nwrote " << (dir / "force.json").string() << '\n';
    return kExitOk;
}

int cmd_sample(const fs::path& config, const SampleOptions& options) {
    const int threads = apply_threads();
    ExperimentConfig cfg = prepare(config, options.run);
    const int steps = options.steps.value_or(cfg.sample.steps);
    const std::size_t n = options.n.value_or(cfg.sample.n);
    if (steps < 1) throw ConfigError("--steps must be >= 1");
    if (n < 1) throw ConfigError("--n must be >= 1");
    const fs::path dir = output_dir(cfg);

    json source;
    Predictor predictor;
    double t_end = 0.0;
    if (options.oracle) {
        if (!linear_flow(cfg.kind, 0.0)) throw ConfigError("--oracle: no analytic predictor for " + kind_name(cfg.kind));
        predictor = analytic_predictor(cfg.kind, cfg.mixture);
        source = {{"predictor", "analytic"}};
    } else {
        const fs::path path = options.checkpoint ? *options.checkpoint
                              : cfg.sample.checkpoint ? *cfg.sample.checkpoint
                                                      : dir / "hvp.json";
        if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string() + " (use --oracle or --checkpoint)");
        std::ifstream in(path);
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::exception& e) {
            throw CheckpointError("checkpoint " + path.string() + ": integrity failure: " + e.what());
        }
        const Mlp net = mlp_from_json(doc);
        if (!net.time_conditioned() || net.input_dim() != cfg.mixture.dim() || net.output_dim() != cfg.mixture.dim())
            throw ConfigError("checkpoint " + path.string() + " is not a velocity predictor for this mixture");
        predictor = learned_predictor(net);
        t_end = kLearnedTimeMin;
        source = {{"predictor", "learned"},
                  {"checkpoint", path.string()},
                  {"param_digest", doc.at("param_digest")},
                  {"checkpoint_config_hash", doc.at("config_hash")}};
    }
    const Schedule schedule = make_schedule(cfg.kind, cfg.mixture, steps, t_end);
    Rng rng(cfg.seed, 3);
    const Mat x = heun_sample(predictor, schedule, rng, static_cast<Eigen::Index>(n));
    write_matrix_csv(dir / "samples.csv", x);

    json meta = metadata("sample", cfg, threads);
    meta["source"] = source;
    meta["steps"] = steps;
    meta["n"] = n;
    meta["grid"] = std::vector<double>(schedule.grid.data(), schedule.grid.data() + schedule.grid.size());
    meta["terminal"] = schedule.terminal.kind == Terminal::Kind::Gaussian ? "gaussian" : "uniform";
    write_json(dir / "sample_metadata.json", meta);
    std::cout << "sample: " << n << " rows, " << steps << " Heun steps\nwrote " << (dir / "samples.csv").string()
              << '\n';
    return kExitOk;
}

int cmd_eval(const fs::path& samples, const fs::path& config, const RunOptions& options) {
    apply_threads();
    ExperimentConfig cfg = prepare(config, options);
    const CsvTable table = read_numeric_csv(samples);
    if (table.values.cols() != cfg.mixture.dim())
        throw ConfigError(samples.string() + " has " + std::to_string(table.values.cols()) + " columns, mixture has dimension " +
                          std::to_string(cfg.mixture.dim()));
    if (table.values.rows() < 2) throw ConfigError(samples.string() + " needs at least two rows");
    const fs::path dir = output_dir(cfg);

    const SamplingResult s = compare_to_truth(table.values, cfg.mixture, cfg.seed);
    Rng proj(cfg.seed, 4), t1(cfg.seed, 5), t2(cfg.seed, 6);
    const auto n = static_cast<std::size_t>(table.values.rows());
    const Mat truth = cfg.mixture.sample(t1, n);
    const Mat other = cfg.mixture.sample(t2, n);
    Rng proj_base(cfg.seed, 4);
    json moments = json::array();
    for (const auto& m : moment_table(table.values, cfg.mixture))
        moments.push_back({{"dim", m.dim},
                           {"sample_mean", m.sample_mean},
                           {"true_mean", m.true_mean},
                           {"sample_variance", m.sample_variance},
                           {"true_variance", m.true_variance}});
    const json metrics = {{"samples", samples.string()},
                          {"n", n},
                          {"dim", cfg.mixture.dim()},
                          {"seed", cfg.seed},
                          {"config_hash", cfg.hash()},
                          {"energy_distance", s.distance},
                          {"baseline", s.baseline},
                          {"ratio", s.ratio()},
                          {"sliced_w2", sliced_w2(table.values, truth, 64, proj)},
                          {"sliced_w2_baseline", sliced_w2(other, truth, 64, proj_base)},
                          {"moments", moments}};
    write_json(dir / "metrics.json", metrics);
    std::cout << "eval: energy distance " << format_double(s.distance) << ", baseline " << format_double(s.baseline)
              << " (ratio " << format_double(s.ratio()) << ")\nwrote " << (dir / "metrics.json").string() << '\n';
    return kExitOk;
}

int cmd_validate(const ValidateOptions& options) {
    const int threads = apply_threads();
    const fs::path dir = options.out.value_or(fs::path("runs") / ("validate-" + to_string(options.level)));
    fs::create_directories(dir);
    const ValidationReport report = run_validation(options.level, options.checkpoints, options.seed, [](const CheckResult& c) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << format_double(c.value) << ' ' << c.comparison << ' '
                  << format_double(c.threshold) << " (" << std::fixed << std::setprecision(1) << c.seconds << "s)"
                  << std::defaultfloat;
        if (!c.detail.empty()) std::cout << " [" << c.detail << ']';
        std::cout << std::endl;
    });
    json doc = report.to_json();
    doc["created"] = utc_now();
    doc["threads_requested"] = threads;
    write_json(dir / "validate.json", doc);
    std::cout << (report.passed() ? "validate " : "validate FAILED ") << to_string(options.level) << " in " << std::fixed
              << std::setprecision(1) << report.seconds << "s\nwrote " << (dir / "validate.json").string() << '\n';
    return report.passed() ? kExitOk : kExitValidation;
}

}  // namespace hamflow::cli
