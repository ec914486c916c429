#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hamflow/types.hpp"

namespace hamflow::cli {

/// Shortest decimal that reads back to the same double.
std::string format_double(double value);

/// RFC-4180 writer: CRLF line endings, fields quoted only when needed.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& fields);
    void row(const std::vector<double>& values);
    /// Flushes and reports write errors.
    void close();

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
    std::size_t columns_;
};

struct CsvTable {
    std::vector<std::string> header;
    Mat values;
};
/// Reads an all-numeric table with a header row (CRLF or LF).
CsvTable read_numeric_csv(const std::filesystem::path& path);

void write_matrix_csv(const std::filesystem::path& path, const Mat& rows, const std::string& prefix = "x");

}  // namespace hamflow::cli
