#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dichotomy/types.hpp"

namespace dichotomy::io {

/// 17 significant digits, round-trips exactly; infinities as "inf"/"-inf".
std::string fmt(double v);

std::string matrix_to_csv(const Mat& m);
Mat matrix_from_csv(std::string_view text);
std::string matrix_to_json(const Mat& m);
Mat matrix_from_json(std::string_view text);

/// Writes a CSV with a header row; each row is a vector of doubles.
std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows);

std::string sha256_hex(std::string_view data);
void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace dichotomy::io
