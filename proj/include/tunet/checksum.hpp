#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>

namespace tunet {

// IEEE CRC-32 (zlib polynomial).
std::uint32_t crc32_of(std::string_view bytes);
std::uint32_t crc32_update(std::uint32_t crc, std::string_view bytes);

// CRC-32 of a file's bytes, continuing from `crc`; throws IoError if the
// file cannot be read.
std::uint32_t file_crc32(const std::filesystem::path& path, std::uint32_t crc = 0);

}  // namespace tunet
