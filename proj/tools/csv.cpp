#include "csv.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "config.hpp"

namespace hamflow::cli {

namespace {

std::string quoted(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::vector<std::string> split_line(const std::string& line, const std::filesystem::path& path, std::size_t number) {
    std::vector<std::string> fields(1);
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_quotes) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                in_quotes = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back() += c;
        }
    }
    if (in_quotes) throw ConfigError(path.string() + ":" + std::to_string(number) + ": unterminated quote");
    return fields;
}

}  // namespace

std::string format_double(double value) {
    std::array<char, 32> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf.data(), end);
}

struct CsvWriter::Impl {
    std::ofstream out;
    std::filesystem::path path;
};

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : impl_(std::make_shared<Impl>()), columns_(header.size()) {
    impl_->path = path;
    impl_->out.open(path, std::ios::binary);
    if (!impl_->out) throw std::runtime_error("cannot write " + path.string());
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw std::logic_error("CsvWriter: row width differs from header");
    for (std::size_t i = 0; i < fields.size(); ++i) impl_->out << (i ? "," : "") << quoted(fields[i]);
    impl_->out << "\r\n";
}

void CsvWriter::row(const std::vector<double>& values) {
    std::vector<std::string> fields;
    fields.reserve(values.size());
    for (double v : values) fields.push_back(format_double(v));
    row(fields);
}

void CsvWriter::close() {
    impl_->out.flush();
    if (!impl_->out) throw std::runtime_error("write failed: " + impl_->path.string());
    impl_->out.close();
}

CsvTable read_numeric_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    CsvTable table;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_line(line, path, number);
        if (table.header.empty()) {
            table.header = std::move(fields);
            continue;
        }
        if (fields.size() != table.header.size())
            throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected " +
                              std::to_string(table.header.size()) + " fields");
        std::vector<double> values;
        for (const auto& f : fields) {
            double v = 0.0;
            const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc{} || p != f.data() + f.size())
                throw ConfigError(path.string() + ":" + std::to_string(number) + ": not a number: '" + f + "'");
            values.push_back(v);
        }
        rows.push_back(std::move(values));
    }
    if (table.header.empty()) throw ConfigError(path.string() + ": empty file");
    table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return table;
}

void write_matrix_csv(const std::filesystem::path& path, const Mat& rows, const std::string& prefix) {
    std::vector<std::string> header;
    for (Eigen::Index c = 0; c < rows.cols(); ++c) header.push_back(prefix + std::to_string(c));
    CsvWriter out(path, header);
    std::vector<double> values(static_cast<std::size_t>(rows.cols()));
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        for (Eigen::Index c = 0; c < rows.cols(); ++c) values[static_cast<std::size_t>(c)] = rows(r, c);
        out.row(values);
    }
    out.close();
}

}  // namespace hamflow::cli
