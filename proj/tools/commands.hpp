#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "validate.hpp"

namespace hamflow::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;
inline constexpr int kExitValidation = 4;

/// HAMFLOW_THREADS, default 1. Non-numeric or non-positive values are config errors.
int requested_threads();

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
    std::optional<int> iterations;  // training commands only
};

struct SampleOptions {
    RunOptions run;
    bool oracle = false;
    std::optional<std::filesystem::path> checkpoint;
    std::optional<int> steps;
    std::optional<std::size_t> n;
};

struct ValidateOptions {
    Level level = Level::Fast;
    std::vector<std::filesystem::path> checkpoints;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> out;
};

/// hvp.json, hvp_loss.csv, hvp_metadata.json.
int cmd_train_hvp(const std::filesystem::path& config, const RunOptions& options);
/// force.json, velocity.json, hsm_diagnostics.csv, hsm_metadata.json.
int cmd_train_hsm(const std::filesystem::path& config, const RunOptions& options);
/// samples.csv, sample_metadata.json. Without --oracle the predictor comes from
/// --checkpoint, then the config's sample.checkpoint, then <out>/hvp.json.
int cmd_sample(const std::filesystem::path& config, const SampleOptions& options);
/// metrics.json next to the config's output directory (or --out).
int cmd_eval(const std::filesystem::path& samples, const std::filesystem::path& config, const RunOptions& options);
/// validate.json; exit 4 when any check fails.
int cmd_validate(const ValidateOptions& options);

}  // namespace hamflow::cli
