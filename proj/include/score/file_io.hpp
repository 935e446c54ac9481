#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace score {

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling file and rename, so readers never observe
/// a partially written file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Skips the write when the file already holds exactly `content`.
/// Returns true when the file was (re)written.
bool write_if_changed(const std::filesystem::path& path, std::string_view content);

}  // namespace score
