#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace convect_uq::io {

/// `%.17g` formatting; round-trips every finite double.
std::string fmt17(double value);

double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::vector<std::string> split(std::string_view line, char sep);
std::string trim(std::string_view text);

std::string read_file(const std::string& path);
/// Writes via a temporary file and rename so readers never see partial content.
void write_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data);

}  // namespace convect_uq::io
