#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ermica/matrix.hpp"

namespace ermica {

/// Shortest round-trippable text is not required; every value is written
/// with 17 significant digits.
std::string format_double(double v);

/// Headerless comma-separated rows.
void write_csv(const Matrix& m, const std::filesystem::path& path);
Matrix read_csv(const std::filesystem::path& path);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

/// Serialises with 17 significant digits for floating-point values.
std::string dump_json(const nlohmann::json& j);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace ermica
