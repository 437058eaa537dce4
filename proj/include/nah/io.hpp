#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace nah::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace nah::io
