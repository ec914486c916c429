#include "toml.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

namespace hamflow::cli {

namespace {

using json = nlohmann::json;

bool is_bare(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }

class Parser {
public:
    explicit Parser(std::string_view text) : s_(text) {}

    json run() {
        json root = json::object();
        json* table = &root;
        while (true) {
            skip_blank_lines();
            if (done()) break;
            if (peek() == '[') {
                ++pos_;
                if (peek() == '[') fail("arrays of tables are not supported");
                const auto path = key_path();
                expect(']');
                end_of_line();
                table = &root;
                for (const auto& k : path) {
                    json& next = (*table)[k];
                    if (next.is_null()) next = json::object();
                    if (!next.is_object()) fail("'" + k + "' is not a table");
                    table = &next;
                }
                if (defined_tables_.count(joined(path))) fail("table [" + joined(path) + "] defined twice");
                defined_tables_.insert(joined(path));
            } else {
                assignment(*table);
                end_of_line();
            }
        }
        return root;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
    int line_ = 1;
    std::set<std::string> defined_tables_;

    [[noreturn]] void fail(const std::string& what) const { throw TomlError(what, line_); }
    bool done() const { return pos_ >= s_.size(); }
    char peek() const { return done() ? '\0' : s_[pos_]; }

    static std::string joined(const std::vector<std::string>& path) {
        std::string out;
        for (const auto& p : path) out += (out.empty() ? "" : ".") + p;
        return out;
    }

    void skip_space() {
        while (!done() && (peek() == ' ' || peek() == '\t')) ++pos_;
    }
    void skip_comment() {
        if (peek() == '#')
            while (!done() && peek() != '\n') ++pos_;
    }
    void newline() {
        if (peek() == '\r') ++pos_;
        if (peek() != '\n') fail("expected end of line");
        ++pos_;
        ++line_;
    }
    void skip_blank_lines() {
        while (true) {
            skip_space();
            skip_comment();
            if (done()) return;
            if (peek() != '\n' && peek() != '\r') return;
            newline();
        }
    }
    // Whitespace, comments and newlines inside arrays.
    void skip_array_space() {
        while (true) {
            skip_space();
            skip_comment();
            if (peek() == '\n' || peek() == '\r')
                newline();
            else
                return;
        }
    }
    void end_of_line() {
        skip_space();
        skip_comment();
        if (!done()) newline();
    }
    void expect(char c) {
        skip_space();
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    std::string key() {
        skip_space();
        if (peek() == '"') return basic_string();
        if (peek() == '\'') return literal_string();
        const std::size_t start = pos_;
        while (!done() && is_bare(peek())) ++pos_;
        if (start == pos_) fail("expected a key");
        return std::string(s_.substr(start, pos_ - start));
    }
    std::vector<std::string> key_path() {
        std::vector<std::string> path{key()};
        skip_space();
        while (peek() == '.') {
            ++pos_;
            path.push_back(key());
            skip_space();
        }
        return path;
    }

    void assignment(json& table) {
        const auto path = key_path();
        expect('=');
        skip_space();
        json* target = &table;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) {
            json& next = (*target)[path[i]];
            if (next.is_null()) next = json::object();
            if (!next.is_object()) fail("'" + path[i] + "' is not a table");
            target = &next;
        }
        if (target->contains(path.back())) fail("duplicate key '" + path.back() + "'");
        (*target)[path.back()] = value();
    }

    json value() {
        skip_space();
        const char c = peek();
        if (c == '"') {
            if (s_.substr(pos_, 3) == "\"\"\"") fail("multi-line strings are not supported");
            return basic_string();
        }
        if (c == '\'') return literal_string();
        if (c == '[') return array();
        if (c == '{') return inline_table();
        if (s_.substr(pos_, 4) == "true" && !is_bare(s_.size() > pos_ + 4 ? s_[pos_ + 4] : ' ')) {
            pos_ += 4;
            return true;
        }
        if (s_.substr(pos_, 5) == "false" && !is_bare(s_.size() > pos_ + 5 ? s_[pos_ + 5] : ' ')) {
            pos_ += 5;
            return false;
        }
        return number();
    }

    std::string basic_string() {
        ++pos_;
        std::string out;
        while (true) {
            if (done() || peek() == '\n') fail("unterminated string");
            const char c = s_[pos_++];
            if (c == '"') return out;
            if (c != '\\') {
                out += c;
                continue;
            }
            if (done()) fail("unterminated string");
            switch (s_[pos_++]) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                default: fail("unsupported escape sequence");
            }
        }
    }
    std::string literal_string() {
        ++pos_;
        const std::size_t start = pos_;
        while (!done() && peek() != '\'' && peek() != '\n') ++pos_;
        if (peek() != '\'') fail("unterminated string");
        return std::string(s_.substr(start, pos_++ - start));
    }

    json array() {
        ++pos_;
        json out = json::array();
        while (true) {
            skip_array_space();
            if (peek() == ']') {
                ++pos_;
                return out;
            }
            out.push_back(value());
            skip_array_space();
            if (peek() == ',') {
                ++pos_;
            } else if (peek() != ']') {
                fail("expected ',' or ']' in array");
            }
        }
    }

    json inline_table() {
        ++pos_;
        json out = json::object();
        skip_space();
        if (peek() == '}') {
            ++pos_;
            return out;
        }
        while (true) {
            assignment(out);
            skip_space();
            if (peek() == '}') {
                ++pos_;
                return out;
            }
            expect(',');
        }
    }

    json number() {
        const std::size_t start = pos_;
        while (!done() && (is_bare(peek()) || peek() == '.' || peek() == '+')) ++pos_;
        std::string token(s_.substr(start, pos_ - start));
        if (token.empty()) fail("expected a value");
        std::string body;
        for (std::size_t i = 0; i < token.size(); ++i) {
            if (token[i] != '_') {
                body += token[i];
                continue;
            }
            const bool between = i > 0 && i + 1 < token.size() && std::isdigit(static_cast<unsigned char>(token[i - 1])) &&
                                 std::isdigit(static_cast<unsigned char>(token[i + 1]));
            if (!between) fail("misplaced '_' in number '" + token + "'");
        }
        const char sign = body[0] == '-' || body[0] == '+' ? body[0] : '\0';
        const std::string mag = sign ? body.substr(1) : body;
        if (mag == "inf") return sign == '-' ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
        if (mag == "nan") return std::numeric_limits<double>::quiet_NaN();
        const bool is_float = mag.find_first_of(".eE") != std::string::npos;
        const char* first = body.data() + (sign == '+' ? 1 : 0);
        const char* last = body.data() + body.size();
        if (mag.size() > 1 && mag[0] == '0' && std::isdigit(static_cast<unsigned char>(mag[1])))
            fail("leading zeros are not allowed in '" + token + "'");
        if (is_float) {
            double v = 0.0;
            const auto [p, ec] = std::from_chars(first, last, v);
            if (ec != std::errc{} || p != last) fail("invalid number '" + token + "'");
            return v;
        }
        std::int64_t v = 0;
        const auto [p, ec] = std::from_chars(first, last, v);
        if (ec != std::errc{} || p != last) fail("invalid value '" + token + "'");
        return v;
    }
};

}  // namespace

json parse_toml(std::string_view text) { return Parser(text).run(); }

}  // namespace hamflow::cli
