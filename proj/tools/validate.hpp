#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace hamflow::cli {

enum class Level { Fast, Full };
std::string to_string(Level level);
/// "fast" or "full"; anything else throws std::invalid_argument.
Level parse_level(const std::string& text);

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;
    std::string comparison;  // "<=" or ">="
    double threshold = 0.0;
    double seconds = 0.0;
    std::string detail;
};

struct ValidationReport {
    Level level = Level::Fast;
    std::uint64_t seed = 0;
    std::vector<CheckResult> checks;
    double seconds = 0.0;

    bool passed() const;
    nlohmann::json to_json() const;
};

/// Runs the invariant suite. Fast covers integrators, gradients, oracles and
/// checkpoint integrity in well under two minutes; full adds the trained
/// studies. Every path in `checkpoints` must load with a valid digest.
ValidationReport run_validation(Level level, const std::vector<std::filesystem::path>& checkpoints, std::uint64_t seed,
                                const std::function<void(const CheckResult&)>& on_check = {});

}  // namespace hamflow::cli
