#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ontoforge {

std::string read_file(const std::filesystem::path& path);

/// Splits on '\n', dropping a trailing '\r' from each line. A final
/// newline does not produce an empty trailing line.
std::vector<std::string> split_lines(std::string_view text);

/// Writes through a sibling temp file and renames, so readers never see a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

std::string_view trim(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

/// Compact single-line JSON; invalid UTF-8 is replaced, never thrown on.
std::string dump_line(const nlohmann::ordered_json& j);
/// Two-space indented JSON followed by a newline.
std::string dump_pretty(const nlohmann::ordered_json& j);

/// Parses every non-blank line of a JSONL file. Errors carry file:line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

}  // namespace ontoforge
