// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace retro::io {

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// `key = value` lines; blank lines and lines starting with '#' are skipped,
/// surrounding whitespace is trimmed. Throws Format on a line without '='.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

}  // namespace retro::io
