#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ttus {

/// Shortest 17-significant-digit rendering; round-trips every finite double.
std::string fmt_g17(double value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Splits one CSV line on commas (no quoting; none of the artifact formats
/// need it).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace ttus
