#include "shuttlesim/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "shuttlesim/errors.hpp"

namespace shuttlesim {

std::string format_g17(double v) {
    char buf[48];
    const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(len));
}

std::size_t Table::col_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    fail(Errc::mismatched_axes, "table has no column '" + name + "'");
}

std::string table_to_csv(const Table& t) {
    std::string out;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
        if (i) out += ',';
        out += t.columns[i];
    }
    out += '\n';
    for (const auto& row : t.rows) {
        require(row.size() == t.columns.size(), Errc::mismatched_axes,
                "csv row width != header width");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_g17(row[i]);
        }
        out += '\n';
    }
    return out;
}

namespace {
double parse_double(std::string_view sv) {
    double v = 0.0;
    const auto res = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    require(res.ec == std::errc(), Errc::io_error,
            "csv: cannot parse number '" + std::string(sv) + "'");
    return v;
}

std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}
} // namespace

Table table_from_csv(const std::string& text) {
    Table t;
    std::size_t pos = 0;
    bool header_done = false;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string_view line(text.data() + pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = nl + 1;
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (!header_done) {
            for (auto c : cells) t.columns.emplace_back(c);
            header_done = true;
        } else {
            require(cells.size() == t.columns.size(), Errc::io_error, "csv: ragged row");
            std::vector<double> row;
            row.reserve(cells.size());
            for (auto c : cells) row.push_back(parse_double(c));
            t.rows.push_back(std::move(row));
        }
    }
    require(header_done, Errc::io_error, "csv: empty file");
    return t;
}

void write_text_file(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    require(f.good(), Errc::io_error, "cannot open for write: " + p.string());
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    require(f.good(), Errc::io_error, "write failed: " + p.string());
}

std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    require(f.good(), Errc::io_error, "cannot open: " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_header_csv(const std::filesystem::path& p, const nlohmann::json& header,
                      const Table& body) {
    std::string out = header.dump();
    out += '\n';
    out += table_to_csv(body);
    write_text_file(p, out);
}

std::pair<nlohmann::json, Table> read_header_csv(const std::filesystem::path& p) {
    const std::string text = read_text_file(p);
    const std::size_t nl = text.find('\n');
    require(nl != std::string::npos, Errc::io_error, "header+csv file truncated: " + p.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::io_error, "bad json header in " + p.string() + ": " + e.what());
    }
    return {header, table_from_csv(text.substr(nl + 1))};
}

uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string checksum_hex(const std::string& bytes) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

std::string checksum_file(const std::filesystem::path& p) {
    return checksum_hex(read_text_file(p));
}

} // namespace shuttlesim
