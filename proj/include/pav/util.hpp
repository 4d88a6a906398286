#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace pav {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// 64-bit seed from the SHA-256 of the parts joined by '\x1f'. Stable across platforms.
std::uint64_t derive_seed(std::initializer_list<std::string_view> parts);

/// Writes to a sibling temp file and renames over `path`, creating parent directories.
void atomic_write(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// One entry per non-blank line, CR stripped. Throws std::runtime_error when unreadable.
std::vector<std::string> read_prompt_lines(const std::filesystem::path& path);

std::string trim(std::string_view s);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace pav
