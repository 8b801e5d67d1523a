#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cscope {

/// Shortest decimal that round-trips the double exactly.
std::string format_real(double x);

/// printf("%.17g"): the fixed-width exact representation used in CSV files.
std::string format_real17(double x);

/// Parse a full token as a double; throws ConfigError naming `what` on failure.
double parse_real(std::string_view token, std::string_view what);
long long parse_int(std::string_view token, std::string_view what);

std::vector<std::string> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

} // namespace cscope
