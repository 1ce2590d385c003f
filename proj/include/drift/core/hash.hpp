#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace drift {

std::string sha1_hex(std::span<const std::uint8_t> bytes);
std::string sha1_hex(std::string_view text);

/// SHA-1 of a file, read in chunks.
std::string sha1_file(const std::filesystem::path& path);

/// Object id git would assign to the file contents ("blob <size>\0" + data).
std::string git_blob_hash(const std::filesystem::path& path);

/// Stable 64-bit hash for seeding (FNV-1a).
std::uint64_t stable_hash(std::string_view text);

} // namespace drift
