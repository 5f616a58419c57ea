#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace polydoc::util {

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

void append_line(const std::filesystem::path& path, std::string_view line);

std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
std::optional<std::string> base64_decode(std::string_view text);

std::string_view trim(std::string_view s);

/// Parses one JSON object per non-blank line. Throws nlohmann::json::exception on bad lines.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

/// Canonical, stable serialization (sorted keys, no whitespace).
std::string canonical_json(const nlohmann::json& value);

} // namespace polydoc::util
