#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace hamflow::cli {

class TomlError : public std::runtime_error {
public:
    TomlError(const std::string& what, int line) : std::runtime_error("line " + std::to_string(line) + ": " + what) {}
};

/// Parses the TOML subset used by experiment configs into JSON: tables and
/// dotted headers, bare/quoted/dotted keys, basic and literal strings,
/// integers, floats, booleans, multi-line arrays and inline tables.
/// Dates, multi-line strings and arrays of tables are rejected.
nlohmann::json parse_toml(std::string_view text);

}  // namespace hamflow::cli
