#pragma once
// Shared output helpers: numeric formatting, CSV rows and content hashes.

#include <filesystem>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace bld {

/// Numbers in report files carry 9 significant digits.
std::string fmt_num(double v);

/// Writes one comma-separated row terminated by '\n'.
void write_row(std::ostream& out, std::initializer_list<std::string_view> cells);
void write_row(std::ostream& out, const std::vector<std::string>& cells);

/// Hex SHA-256 of a byte string / of a file's contents.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

} // namespace bld
