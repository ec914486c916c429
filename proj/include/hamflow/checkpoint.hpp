#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "hamflow/mlp.hpp"

namespace hamflow {

/// Thrown when a checkpoint is malformed or its parameter digest does not match.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
/// Digest of the exact bit patterns of a parameter vector.
std::string param_digest(const Vec& params);

nlohmann::json mlp_to_json(const Mlp& net, const std::string& config_hash);
/// Validates structure and digest; throws CheckpointError on any mismatch.
Mlp mlp_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const Mlp& net, const std::string& config_hash);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace hamflow
