#include "tunet/checksum.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <vector>

#include "tunet/errors.hpp"

namespace tunet {

std::uint32_t crc32_update(std::uint32_t crc, std::string_view bytes) {
  uLong value = crc;
  const auto* data = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    value = ::crc32(value, data, chunk);
    data += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(value);
}

std::uint32_t crc32_of(std::string_view bytes) { return crc32_update(0, bytes); }

std::uint32_t file_crc32(const std::filesystem::path& path, std::uint32_t crc) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    crc = crc32_update(crc, std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return crc;
}

}  // namespace tunet
