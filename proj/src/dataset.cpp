#include "tunet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tunet/errors.hpp"
#include "tunet/rng.hpp"

namespace tunet {

std::string to_string(SplitRole role) { return role == SplitRole::train ? "train" : "test"; }

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    fields.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return fields;
}

std::vector<std::string> read_lines(const std::filesystem::path& path, const std::string& who) {
  std::ifstream in(path);
  if (!in) throw IoError(who + ": cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (trim(line).empty()) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

template <typename V>
V parse_number(std::string_view text, const std::string& who) {
  V v{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw DataError(who + ": cannot parse number '" + std::string(text) + "'");
  }
  return v;
}

void append_real(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

void validate_series(const CsiSeries& s, const LoadOptions& options) {
  const std::string who = "series " + s.series_id;
  if (s.carriers != options.carriers) {
    throw DataError(who + ": has " + std::to_string(s.carriers) + " carriers, expected " +
                    std::to_string(options.carriers));
  }
  if (s.length == 0) throw DataError(who + ": is empty");
  if (s.values.size() != s.length * s.carriers) throw DataError(who + ": value count does not match its shape");
  if (s.labels.size() != s.length) {
    throw DataError(who + ": has " + std::to_string(s.labels.size()) + " labels for " + std::to_string(s.length) +
                    " samples");
  }
  for (const double v : s.values) {
    if (!std::isfinite(v)) throw DataError(who + ": contains a non-finite value");
  }
  for (const int y : s.labels) {
    if (y < 0 || y > options.max_label) {
      throw DataError(who + ": label " + std::to_string(y) + " outside [0, " + std::to_string(options.max_label) +
                      "]");
    }
  }
}

CsiSeries read_series(const std::string& series_id, const std::filesystem::path& data_path,
                      const std::filesystem::path& label_path, const LoadOptions& options) {
  const std::string who = "series " + series_id;
  CsiSeries s;
  s.series_id = series_id;
  s.carriers = options.carriers;
  const auto rows = read_lines(data_path, who);
  s.length = rows.size();
  s.values.reserve(rows.size() * options.carriers);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const auto fields = split_commas(rows[t]);
    if (fields.size() != options.carriers) {
      throw DataError(who + ": row " + std::to_string(t) + " of " + data_path.filename().string() + " has " +
                      std::to_string(fields.size()) + " columns, expected " + std::to_string(options.carriers));
    }
    for (const auto f : fields) s.values.push_back(parse_number<double>(f, who));
  }
  if (label_path.empty()) {
    s.labels.assign(s.length, 0);
  } else {
    for (const auto& line : read_lines(label_path, who)) s.labels.push_back(parse_number<int>(trim(line), who));
  }
  validate_series(s, options);
  return s;
}

Dataset load_dataset(const std::filesystem::path& manifest, const LoadOptions& options) {
  const auto base = manifest.parent_path();
  Dataset data;
  data.train.role = SplitRole::train;
  data.test.role = SplitRole::test;
  std::size_t common_length = 0;
  for (const auto& line : read_lines(manifest, "manifest")) {
    const auto fields = split_commas(line);
    if (fields.size() != 4) throw DataError("manifest: expected 4 fields in line '" + line + "'");
    const std::string id(fields[0]);
    CsiSeries s = read_series(id, base / std::string(fields[2]), base / std::string(fields[3]), options);
    if (common_length == 0) common_length = s.length;
    if (s.length != common_length) {
      throw DataError("series " + id + ": has " + std::to_string(s.length) + " samples, others have " +
                      std::to_string(common_length));
    }
    if (fields[1] == "train") {
      data.train.series.push_back(std::move(s));
    } else if (fields[1] == "test") {
      data.test.series.push_back(std::move(s));
    } else {
      throw DataError("series " + id + ": unknown role '" + std::string(fields[1]) + "'");
    }
  }
  if (data.train.series.empty()) throw DataError("manifest " + manifest.string() + " lists no train series");
  data.train.stats = fit_stats(data.train);
  data.test.stats = data.train.stats;
  return data;
}

std::filesystem::path write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "series", ec);
  if (ec) throw IoError("cannot create " + (dir / "series").string() + ": " + ec.message());
  const auto manifest_path = dir / "manifest.csv";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot write " + manifest_path.string());
  for (const DatasetSplit* split : {&data.train, &data.test}) {
    for (const auto& s : split->series) {
      const std::string data_rel = "series/" + s.series_id + ".csv";
      const std::string label_rel = "series/" + s.series_id + ".labels";
      std::string body;
      for (std::size_t t = 0; t < s.length; ++t) {
        for (std::size_t c = 0; c < s.carriers; ++c) {
          if (c > 0) body.push_back(',');
          append_real(body, s.at(t, c));
        }
        body.push_back('\n');
      }
      std::ofstream(dir / data_rel) << body;
      std::string labels;
      for (const int y : s.labels) labels += std::to_string(y) + "\n";
      std::ofstream(dir / label_rel) << labels;
      manifest << s.series_id << ',' << to_string(split->role) << ',' << data_rel << ',' << label_rel << '\n';
    }
  }
  if (!manifest) throw IoError("write failed for " + manifest_path.string());
  return manifest_path;
}

NormalizationStats fit_stats(const DatasetSplit& split) {
  if (split.series.empty()) throw DataError("cannot fit normalization on an empty split");
  const std::size_t carriers = split.series.front().carriers;
  NormalizationStats stats{std::vector<double>(carriers, 0.0), std::vector<double>(carriers, 0.0)};
  std::size_t count = 0;
  for (const auto& s : split.series) {
    for (std::size_t t = 0; t < s.length; ++t) {
      for (std::size_t c = 0; c < carriers; ++c) stats.mean[c] += s.at(t, c);
    }
    count += s.length;
  }
  for (auto& m : stats.mean) m /= static_cast<double>(count);
  for (const auto& s : split.series) {
    for (std::size_t t = 0; t < s.length; ++t) {
      for (std::size_t c = 0; c < carriers; ++c) {
        const double d = s.at(t, c) - stats.mean[c];
        stats.stddev[c] += d * d;
      }
    }
  }
  for (auto& v : stats.stddev) v = std::max(std::sqrt(v / static_cast<double>(count)), kStdFloor);
  return stats;
}

CsiSeries normalize(const CsiSeries& series, const NormalizationStats& stats) {
  if (stats.mean.size() != series.carriers || stats.stddev.size() != series.carriers) {
    throw DataError("series " + series.series_id + ": normalization statistics cover " +
                    std::to_string(stats.mean.size()) + " carriers, series has " + std::to_string(series.carriers));
  }
  CsiSeries out = series;
  for (std::size_t t = 0; t < out.length; ++t) {
    for (std::size_t c = 0; c < out.carriers; ++c) {
      out.at(t, c) = (out.at(t, c) - stats.mean[c]) / std::max(stats.stddev[c], kStdFloor);
    }
  }
  return out;
}

DatasetSplit normalize(const DatasetSplit& split) {
  if (split.stats.empty()) throw DataError("normalize: split has no fitted statistics");
  DatasetSplit out;
  out.role = split.role;
  out.stats = split.stats;
  out.series.reserve(split.series.size());
  for (const auto& s : split.series) out.series.push_back(normalize(s, split.stats));
  return out;
}

std::vector<int> to_detection_labels(std::span<const int> labels) {
  std::vector<int> out(labels.size());
  std::transform(labels.begin(), labels.end(), out.begin(), [](int y) { return y >= 1 ? 1 : 0; });
  return out;
}

DatasetSplit with_detection_labels(const DatasetSplit& split) {
  DatasetSplit out = split;
  for (auto& s : out.series) s.labels = to_detection_labels(s.labels);
  return out;
}

namespace {

double carrier_weight(int cls, std::size_t carrier, std::size_t carriers) {
  return 0.6 + 0.4 * std::cos(2.0 * std::numbers::pi * cls * static_cast<double>(carrier) /
                              static_cast<double>(carriers));
}

double burst_frequency(int cls) { return static_cast<double>(cls) / 24.0; }

struct GeneratedSeries {
  CsiSeries series;
  std::vector<double> baseline;  // noise-free background, same layout as values
  std::size_t start = 0;
  std::size_t duration = 0;
  int cls = 0;
};

GeneratedSeries generate_one(Rng& rng, const SynthOptions& o, const std::string& id) {
  GeneratedSeries g;
  auto& s = g.series;
  s.series_id = id;
  s.length = o.length;
  s.carriers = o.carriers;
  s.values.assign(o.length * o.carriers, 0.0);
  s.labels.assign(o.length, 0);
  g.baseline.assign(s.values.size(), 0.0);

  for (std::size_t c = 0; c < o.carriers; ++c) {
    const double offset = rng.uniform(9.5, 10.5);
    const double amp = rng.uniform(0.3, 0.8);
    const double freq = rng.uniform(0.002, 0.01);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t t = 0; t < o.length; ++t) {
      g.baseline[t * o.carriers + c] = offset + amp * std::sin(2.0 * std::numbers::pi * freq * t + phase);
    }
  }

  g.cls = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(o.cls)));
  const std::size_t min_dur = o.length / 8;
  const std::size_t max_dur = o.length / 2;
  g.duration = min_dur + static_cast<std::size_t>(rng.below(max_dur - min_dur + 1));
  g.start = static_cast<std::size_t>(rng.below(o.length - g.duration + 1));
  const double psi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double f = burst_frequency(g.cls);

  for (std::size_t t = 0; t < o.length; ++t) {
    const bool in_action = t >= g.start && t < g.start + g.duration;
    if (in_action) s.labels[t] = g.cls;
    const double wave = in_action ? o.burst_amplitude *
                                        std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t - g.start) + psi)
                                  : 0.0;
    for (std::size_t c = 0; c < o.carriers; ++c) {
      const std::size_t i = t * o.carriers + c;
      s.values[i] = g.baseline[i] + rng.normal(0.0, o.noise);
      if (in_action) s.values[i] += wave * carrier_weight(g.cls, c, o.carriers);
    }
  }
  return g;
}

// Projects the action window onto each class's carrier weighting and takes
// the spectral energy at that class's burst frequency.
int matched_filter_class(const GeneratedSeries& g, const SynthOptions& o) {
  int best = 0;
  double best_energy = -1.0;
  for (int h = 1; h <= o.cls; ++h) {
    double norm = 0.0;
    for (std::size_t c = 0; c < o.carriers; ++c) norm += carrier_weight(h, c, o.carriers) * carrier_weight(h, c, o.carriers);
    norm = std::sqrt(norm);
    std::complex<double> acc = 0.0;
    for (std::size_t t = g.start; t < g.start + g.duration; ++t) {
      double proj = 0.0;
      for (std::size_t c = 0; c < o.carriers; ++c) {
        const std::size_t i = t * o.carriers + c;
        proj += carrier_weight(h, c, o.carriers) * (g.series.values[i] - g.baseline[i]);
      }
      proj /= norm;
      acc += proj * std::polar(1.0, -2.0 * std::numbers::pi * burst_frequency(h) * static_cast<double>(t - g.start));
    }
    const double energy = std::norm(acc);
    if (energy > best_energy) {
      best_energy = energy;
      best = h;
    }
  }
  return best;
}

}  // namespace

SynthResult synth_generate(const SynthOptions& o) {
  if (o.cls < 1) throw ConfigError("synth: cls must be >= 1");
  if (o.length < 8) throw ConfigError("synth: series length " + std::to_string(o.length) + " must be >= 8");
  if (o.carriers < 1) throw ConfigError("synth: carriers must be >= 1");
  if (o.num_train == 0) throw ConfigError("synth: need at least one train series");

  SynthResult result;
  result.data.train.role = SplitRole::train;
  result.data.test.role = SplitRole::test;
  Rng rng(o.seed);
  std::size_t hits = 0;
  const std::size_t total = o.num_train + o.num_test;
  for (std::size_t i = 0; i < total; ++i) {
    const bool train = i < o.num_train;
    char id[32];
    std::snprintf(id, sizeof(id), "%s%05zu", train ? "train" : "test", train ? i : i - o.num_train);
    GeneratedSeries g = generate_one(rng, o, id);
    if (matched_filter_class(g, o) == g.cls) ++hits;
    (train ? result.data.train : result.data.test).series.push_back(std::move(g.series));
  }
  result.matched_filter_accuracy = static_cast<double>(hits) / static_cast<double>(total);
  result.data.train.stats = fit_stats(result.data.train);
  result.data.test.stats = result.data.train.stats;
  return result;
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

template <typename T>
Batch<T> pack_batch(const DatasetSplit& split, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("pack_batch: empty batch");
  const auto& first = split.series.at(indices.front());
  Batch<T> batch;
  batch.x = Tensor3<T>(indices.size(), first.carriers, first.length);
  batch.labels = LabelMatrix(indices.size(), first.length);
  batch.indices.assign(indices.begin(), indices.end());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& s = split.series.at(indices[b]);
    if (s.length != first.length || s.carriers != first.carriers) {
      throw DataError("series " + s.series_id + ": shape differs from the rest of its batch");
    }
    for (std::size_t c = 0; c < s.carriers; ++c) {
      T* row = batch.x.row(b, c);
      for (std::size_t t = 0; t < s.length; ++t) row[t] = static_cast<T>(s.at(t, c));
    }
    std::copy(s.labels.begin(), s.labels.end(), batch.labels.values.begin() + static_cast<std::ptrdiff_t>(b * s.length));
  }
  return batch;
}

template <typename T>
std::vector<Batch<T>> batches(const DatasetSplit& split, std::size_t batch_size, std::uint64_t seed,
                              std::size_t epoch) {
  if (split.series.empty()) throw DataError("batches: split is empty");
  if (batch_size == 0) throw ConfigError("batches: batch_size must be >= 1");
  const auto order = epoch_order(split.series.size(), seed, epoch);
  std::vector<Batch<T>> out;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, order.size());
    out.push_back(pack_batch<T>(split, std::span<const std::size_t>(order).subspan(begin, end - begin)));
  }
  return out;
}

template Batch<float> pack_batch(const DatasetSplit&, std::span<const std::size_t>);
template Batch<double> pack_batch(const DatasetSplit&, std::span<const std::size_t>);
template std::vector<Batch<float>> batches(const DatasetSplit&, std::size_t, std::uint64_t, std::size_t);
template std::vector<Batch<double>> batches(const DatasetSplit&, std::size_t, std::uint64_t, std::size_t);

}  // namespace tunet
