#pragma once

#include <filesystem>
#include <string>

namespace arnn {

// Lowercase hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

}  // namespace arnn
