#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ventus {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
// Fixed 17-significant-digit form.
std::string format_double17(double v);

// Strict parse: the whole field must be consumed. Throws ValidationError.
double parse_double(std::string_view text);
long long parse_integer(std::string_view text);

std::vector<std::string> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary file in the same directory, then renames.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace ventus
