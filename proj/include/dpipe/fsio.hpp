#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace dpipe {

/// Reads a whole file into a string; throws std::runtime_error on failure.
std::string read_file(const std::filesystem::path& path);

/// Writes bytes to a temporary file in the target directory and renames it
/// into place, so failures never leave partial outputs.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Shortest decimal string that round-trips the double exactly.
std::string format_double(double v);

} // namespace dpipe
