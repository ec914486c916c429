#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "hamflow/hsm.hpp"
#include "hamflow/sampler.hpp"

namespace hamflow::cli {

/// Any problem with a config file or flag value; maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SampleSettings {
    int steps = 64;
    std::size_t n = 10000;
    std::optional<std::filesystem::path> checkpoint;  // resolved against the config's directory
};

struct HsmSettings {
    HsmConfig config;
    std::vector<int> force_hidden = {64, 64};
    std::vector<int> velocity_hidden = {64, 64};
};

struct ExperimentConfig {
    std::string name;
    GaussianMixture mixture = GaussianMixture::standard_normal(1);
    HgfKind kind = DiffusionKind{};
    bool alpha_auto = false;
    MlpSpec net;  // dimensions filled from the mixture, always time-conditioned
    TrainConfig train;
    HsmSettings hsm;
    SampleSettings sample;
    std::uint64_t seed = 0;
    std::filesystem::path out;

    /// Every setting after defaults and alpha resolution.
    nlohmann::json resolved() const;
    /// Digest of `resolved()`, stamped into checkpoints.
    std::string hash() const;
    /// Pushes the top-level seed into the training sections.
    void set_seed(std::uint64_t value);
};

/// Reads `.toml` or `.json`. Unknown keys are rejected.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                                  const std::string& name);

GaussianMixture mixture_from_json(const nlohmann::json& doc);
nlohmann::json mixture_to_json(const GaussianMixture& mixture);

}  // namespace hamflow::cli
