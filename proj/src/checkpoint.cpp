#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>

#include "tunet/checksum.hpp"
#include "tunet/model.hpp"

namespace tunet {
namespace {

template <typename U>
void put_le(std::string& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

template <typename U>
U get_le(const char* p) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  return bits;
}

std::string join_reals(const std::vector<double>& values) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out.push_back(',');
    auto res = std::to_chars(buf, buf + sizeof(buf), values[i]);
    out.append(buf, res.ptr);
  }
  return out;
}

std::vector<double> split_reals(const std::string& text) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos <= text.size() && !text.empty()) {
    const std::size_t end = std::min(text.find(',', pos), text.size());
    double v = 0.0;
    auto res = std::from_chars(text.data() + pos, text.data() + end, v);
    if (res.ec != std::errc{} || res.ptr != text.data() + end) {
      throw DataError("checkpoint: malformed real '" + text.substr(pos, end - pos) + "'");
    }
    values.push_back(v);
    pos = end + 1;
  }
  return values;
}

std::size_t parse_count(const std::string& key, const std::string& text) {
  std::size_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw DataError("checkpoint: field " + key + " has non-integer value '" + text + "'");
  }
  return v;
}

std::string shape_text(const std::vector<std::size_t>& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out.push_back(',');
    out += std::to_string(shape[i]);
  }
  return out;
}

struct ManifestEntry {
  std::string name;
  std::vector<std::size_t> shape;
};

void compare_manifest(const std::vector<ManifestEntry>& stored, const TUnetConfig& config, const char* what) {
  const auto plan = layer_plan(config);
  std::vector<ManifestEntry> expected;
  for (const auto& layer : plan) {
    expected.push_back({layer.name + ".weight", layer.weight_shape()});
    expected.push_back({layer.name + ".bias", {layer.out_channels}});
  }
  if (stored.size() != expected.size()) {
    throw ShapeError(std::string("checkpoint: ") + what + " expects " + std::to_string(expected.size()) +
                     " arrays, file has " + std::to_string(stored.size()));
  }
  for (std::size_t i = 0; i < stored.size(); ++i) {
    if (stored[i].name != expected[i].name || stored[i].shape != expected[i].shape) {
      throw ShapeError(std::string("checkpoint: ") + what + " expects " + expected[i].name + " [" +
                       shape_text(expected[i].shape) + "], file has " + stored[i].name + " [" +
                       shape_text(stored[i].shape) + "]");
    }
  }
}

struct ParsedCheckpoint {
  TUnetConfig config;
  InputNormalization normalization;
  std::string dtype;
  std::vector<ManifestEntry> manifest;
  std::size_t payload_offset = 0;
};

ParsedCheckpoint parse_header(const std::string& bytes) {
  ParsedCheckpoint parsed;
  std::size_t pos = kCheckpointMagic.size();
  std::map<std::string, std::string> fields;
  bool ended = false;
  while (pos < bytes.size()) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) break;
    const std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    if (line == "end") {
      ended = true;
      break;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint: malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "param") {
      const std::size_t sp = value.find(' ');
      if (sp == std::string::npos) throw DataError("checkpoint: malformed manifest line '" + line + "'");
      ManifestEntry entry{value.substr(0, sp), {}};
      std::istringstream dims(value.substr(sp + 1));
      for (std::string d; std::getline(dims, d, ',');) entry.shape.push_back(parse_count(entry.name, d));
      parsed.manifest.push_back(std::move(entry));
      continue;
    }
    if (key == "version") {
      if (value != std::to_string(kCheckpointVersion)) {
        throw VersionError("checkpoint: version " + value + " is not supported (expected " +
                           std::to_string(kCheckpointVersion) + ")");
      }
    }
    fields[key] = value;
  }
  if (!ended) throw DataError("checkpoint: header is truncated");
  if (!fields.contains("version")) throw VersionError("checkpoint: missing version field");

  auto need = [&](const std::string& key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw DataError("checkpoint: missing header field " + key);
    return it->second;
  };
  auto& c = parsed.config;
  c.input_channels = parse_count("input_channels", need("input_channels"));
  c.series_length = parse_count("series_length", need("series_length"));
  c.num_classes = parse_count("num_classes", need("num_classes"));
  c.depth = parse_count("depth", need("depth"));
  c.base_channels = parse_count("base_channels", need("base_channels"));
  c.conv_kernel = parse_count("conv_kernel", need("conv_kernel"));
  c.seed = parse_count("seed", need("seed"));
  parsed.dtype = need("dtype");
  if (parsed.dtype != "f32" && parsed.dtype != "f64") throw DataError("checkpoint: unknown dtype " + parsed.dtype);
  if (fields.contains("norm_mean")) {
    parsed.normalization.mean = split_reals(fields["norm_mean"]);
    parsed.normalization.stddev = split_reals(need("norm_std"));
    if (parsed.normalization.mean.size() != parsed.normalization.stddev.size()) {
      throw DataError("checkpoint: normalization mean/std lengths differ");
    }
  }
  parsed.payload_offset = pos;
  return parsed;
}

template <typename T>
Checkpoint<T> load_impl(const std::filesystem::path& path, const TUnetConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kCheckpointMagic.size() + 4 || bytes.compare(0, kCheckpointMagic.size(), kCheckpointMagic) != 0) {
    throw DataError("checkpoint: " + path.string() + " is not a TUNET1 checkpoint");
  }
  const std::size_t body_size = bytes.size() - 4;
  const std::uint32_t stored_crc = get_le<std::uint32_t>(bytes.data() + body_size);
  if (crc32_of(std::string_view(bytes).substr(0, body_size)) != stored_crc) {
    throw ChecksumError("checkpoint: CRC mismatch in " + path.string());
  }
  ParsedCheckpoint parsed = parse_header(bytes.substr(0, body_size));

  try {
    parsed.config.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: recorded config is invalid: ") + e.what());
  }
  compare_manifest(parsed.manifest, parsed.config, "recorded config");
  if (expected != nullptr) compare_manifest(parsed.manifest, *expected, "requested config");

  const std::size_t width = parsed.dtype == "f32" ? 4 : 8;
  Checkpoint<T> ck;
  ck.config = parsed.config;
  ck.normalization = parsed.normalization;
  std::size_t pos = parsed.payload_offset;
  for (const auto& entry : parsed.manifest) {
    auto& p = ck.params.add(entry.name, entry.shape);
    if (pos + p.values.size() * width > body_size) throw DataError("checkpoint: payload is truncated");
    for (auto& v : p.values) {
      if (width == 4) {
        v = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + pos)));
      } else {
        v = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(bytes.data() + pos)));
      }
      pos += width;
    }
  }
  if (pos != body_size) throw DataError("checkpoint: trailing bytes after payload");
  return ck;
}

}  // namespace

template <typename T>
void save_checkpoint(const ParamStore<T>& params, const TUnetConfig& config, const std::filesystem::path& path,
                     const InputNormalization& norm) {
  check_params_match(params, config);
  std::ostringstream header;
  header << kCheckpointMagic;
  header << "version=" << kCheckpointVersion << '\n';
  header << "dtype=" << (sizeof(T) == 4 ? "f32" : "f64") << '\n';
  header << "input_channels=" << config.input_channels << '\n';
  header << "series_length=" << config.series_length << '\n';
  header << "num_classes=" << config.num_classes << '\n';
  header << "depth=" << config.depth << '\n';
  header << "base_channels=" << config.base_channels << '\n';
  header << "conv_kernel=" << config.conv_kernel << '\n';
  header << "seed=" << config.seed << '\n';
  if (!norm.empty()) {
    header << "norm_mean=" << join_reals(norm.mean) << '\n';
    header << "norm_std=" << join_reals(norm.stddev) << '\n';
  }
  for (const auto& p : params.entries()) header << "param=" << p.name << ' ' << shape_text(p.shape) << '\n';
  header << "end\n";

  std::string bytes = header.str();
  bytes.reserve(bytes.size() + params.total_values() * sizeof(T) + 4);
  for (const auto& p : params.entries()) {
    for (const T v : p.values) {
      if constexpr (sizeof(T) == 4) {
        put_le(bytes, std::bit_cast<std::uint32_t>(v));
      } else {
        put_le(bytes, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  put_le(bytes, crc32_of(bytes));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("checkpoint: write failed for " + path.string());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return load_impl<T>(path, nullptr);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path, const TUnetConfig& expected) {
  return load_impl<T>(path, &expected);
}

template void save_checkpoint(const ParamStore<float>&, const TUnetConfig&, const std::filesystem::path&,
                              const InputNormalization&);
template void save_checkpoint(const ParamStore<double>&, const TUnetConfig&, const std::filesystem::path&,
                              const InputNormalization&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&, const TUnetConfig&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&, const TUnetConfig&);

}  // namespace tunet
