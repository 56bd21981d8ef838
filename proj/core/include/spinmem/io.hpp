#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinmem/spin_system.hpp"

namespace spinmem {

// Plot-grade CSV number: 9 significant digits.
std::string csv_number(double v);

// One CSV file: header line plus rows of csv_number-formatted values.
void write_csv(const std::filesystem::path& path, const std::string& header,
               const std::vector<std::vector<double>>& rows);

// JSON written with stable formatting (2-space indent, '\n' at EOF); doubles
// carry full round-trip precision.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

// Complex matrix as nested arrays of [re, im] pairs.
nlohmann::json matrix_to_json(const Matrix& m);

// FNV-1a of the canonical dump; stable across runs for identical configs.
std::string content_hash(const std::string& text);

}  // namespace spinmem
