#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace kcp {

/// Throws kNotFound when the file cannot be opened.
std::string read_file(const std::string& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::string& path, const std::string& contents);

std::vector<nlohmann::json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& rows);

/// Parses JSON, mapping failures to kParseError with the file name.
nlohmann::json parse_json(const std::string& text, const std::string& origin);

}  // namespace kcp
