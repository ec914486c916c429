#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "hamflow/checkpoint.hpp"
#include "toml.hpp"

namespace {

using namespace hamflow::cli;

void add_run_options(CLI::App* cmd, RunOptions& o, bool training) {
    cmd->add_option("--seed", o.seed, "Override the config seed");
    cmd->add_option("--out", o.out, "Output directory (default from the config)");
    if (training) cmd->add_option("--iterations", o.iterations, "Override the iteration count");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hamflow: Hamiltonian velocity predictors, score matching and generative flows"};
    app.require_subcommand(1);

    std::filesystem::path config, samples;
    RunOptions hvp, hsm, eval;
    SampleOptions sample;
    ValidateOptions validate;
    std::string level = "fast";

    auto* c_hvp = app.add_subcommand("train-hvp", "Train a velocity predictor for a fixed force field");
    c_hvp->add_option("config", config, "Experiment config (.toml or .json)")->required();
    add_run_options(c_hvp, hvp, true);

    auto* c_hsm = app.add_subcommand("train-hsm", "Min-max Hamiltonian score matching");
    c_hsm->add_option("config", config, "Experiment config (.toml or .json)")->required();
    add_run_options(c_hsm, hsm, true);

    auto* c_sample = app.add_subcommand("sample", "Backward Heun sampling of the velocity-predictor ODE");
    c_sample->add_option("config", config, "Experiment config (.toml or .json)")->required();
    add_run_options(c_sample, sample.run, false);
    c_sample->add_flag("--oracle", sample.oracle, "Use the analytic predictor instead of a checkpoint");
    c_sample->add_option("--checkpoint", sample.checkpoint, "Velocity predictor checkpoint");
    c_sample->add_option("--steps", sample.steps, "Heun steps");
    c_sample->add_option("--n", sample.n, "Number of samples");

    auto* c_eval = app.add_subcommand("eval", "Sample-quality metrics against the config's mixture");
    c_eval->add_option("samples", samples, "Samples CSV")->required();
    c_eval->add_option("config", config, "Experiment config (.toml or .json)")->required();
    add_run_options(c_eval, eval, false);

    auto* c_val = app.add_subcommand("validate", "Run the invariant suite");
    c_val->add_option("level", level, "fast or full")->check(CLI::IsMember({"fast", "full"}));
    c_val->add_option("--checkpoint", validate.checkpoints, "Checkpoint files to verify");
    c_val->add_option("--seed", validate.seed, "Seed for every check");
    c_val->add_option("--out", validate.out, "Report directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*c_hvp) return cmd_train_hvp(config, hvp);
        if (*c_hsm) return cmd_train_hsm(config, hsm);
        if (*c_sample) return cmd_sample(config, sample);
        if (*c_eval) return cmd_eval(samples, config, eval);
        validate.level = parse_level(level);
        return cmd_validate(validate);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const TomlError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const hamflow::DivergedError& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return kExitDiverged;
    } catch (const hamflow::CheckpointError& e) {
        std::cerr << "integrity failure: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
