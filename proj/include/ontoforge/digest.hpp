#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace ontoforge {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// SHA-256 of a file's bytes; throws DataError when unreadable.
std::string file_sha256_hex(const std::filesystem::path& path);

}  // namespace ontoforge
