#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace shuttlesim {

// Numeric serialization rules: 17 significant digits (lossless double round
// trip), '.' decimal separator, '\n' line endings. All persisted artifacts are
// either pure CSV or a single-line JSON header followed by a CSV body.

std::string format_g17(double v);

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add_row(std::initializer_list<double> vals) { rows.emplace_back(vals); }
    std::size_t col_index(const std::string& name) const;
};

std::string table_to_csv(const Table& t);
Table table_from_csv(const std::string& text);

void write_text_file(const std::filesystem::path& p, const std::string& text);
std::string read_text_file(const std::filesystem::path& p);

// JSON header line + CSV body in one file.
void write_header_csv(const std::filesystem::path& p, const nlohmann::json& header,
                      const Table& body);
std::pair<nlohmann::json, Table> read_header_csv(const std::filesystem::path& p);

// FNV-1a 64-bit checksum, hex-encoded. Integrity marker for result bundles.
uint64_t fnv1a64(const std::string& bytes);
std::string checksum_hex(const std::string& bytes);
std::string checksum_file(const std::filesystem::path& p);

} // namespace shuttlesim
