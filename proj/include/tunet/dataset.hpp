#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tunet/tensor.hpp"

namespace tunet {

inline constexpr std::size_t kCarriers = 52;
inline constexpr double kStdFloor = 1e-6;

// One recorded CSI series: `length` samples x `carriers` values, plus one
// class label per sample (0 = non-action, 1..cls = gesture id).
struct CsiSeries {
  std::string series_id;
  std::size_t length = 0;
  std::size_t carriers = kCarriers;
  std::vector<double> values;  // row-major (sample, carrier)
  std::vector<int> labels;

  double at(std::size_t t, std::size_t c) const { return values[t * carriers + c]; }
  double& at(std::size_t t, std::size_t c) { return values[t * carriers + c]; }
  bool operator==(const CsiSeries&) const = default;
};

enum class SplitRole { train, test };

std::string to_string(SplitRole role);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at kStdFloor

  bool empty() const { return mean.empty(); }
  bool operator==(const NormalizationStats&) const = default;
};

struct DatasetSplit {
  SplitRole role = SplitRole::train;
  std::vector<CsiSeries> series;
  NormalizationStats stats;  // always fitted on the train split

  bool operator==(const DatasetSplit&) const = default;
};

struct Dataset {
  DatasetSplit train;
  DatasetSplit test;
};

struct LoadOptions {
  std::size_t carriers = kCarriers;
  int max_label = 6;  // labels must lie in [0, max_label]
};

// Reads a manifest of "series_id,role,data_path,label_path" lines (paths
// relative to the manifest). Every error names the offending series.
Dataset load_dataset(const std::filesystem::path& manifest, const LoadOptions& options = {});

// Writes the same layout load_dataset reads: <dir>/manifest.csv plus
// <dir>/series/<id>.csv and <dir>/series/<id>.labels.
std::filesystem::path write_dataset(const Dataset& data, const std::filesystem::path& dir);

// Reads one data file (and optional label file) in the dataset format.
CsiSeries read_series(const std::string& series_id, const std::filesystem::path& data_path,
                      const std::filesystem::path& label_path, const LoadOptions& options = {});

// Throws DataError naming the series when an invariant is broken.
void validate_series(const CsiSeries& series, const LoadOptions& options);

NormalizationStats fit_stats(const DatasetSplit& split);

// (x - mean) / std per carrier using split.stats.
DatasetSplit normalize(const DatasetSplit& split);
CsiSeries normalize(const CsiSeries& series, const NormalizationStats& stats);

std::vector<int> to_detection_labels(std::span<const int> labels);
DatasetSplit with_detection_labels(const DatasetSplit& split);

// ---- Synthetic corpus ------------------------------------------------------

struct SynthOptions {
  std::size_t num_train = 64;
  std::size_t num_test = 16;
  int cls = 6;
  std::size_t length = 192;
  std::size_t carriers = kCarriers;
  std::uint64_t seed = 0;
  double noise = 0.3;
  double burst_amplitude = 1.5;
};

struct SynthResult {
  Dataset data;
  // Fraction of action windows on which the true class's matched filter has
  // the largest energy; a learnability check on the generated signatures.
  double matched_filter_accuracy = 0.0;
};

SynthResult synth_generate(const SynthOptions& options);

// ---- Batching --------------------------------------------------------------

template <typename T>
struct Batch {
  Tensor3<T> x;  // batch x carriers x length
  LabelMatrix labels;
  std::vector<std::size_t> indices;  // positions in the split
};

// Seeded per-epoch permutation of [0, count).
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch);

template <typename T>
Batch<T> pack_batch(const DatasetSplit& split, std::span<const std::size_t> indices);

// Shuffled fixed-size batches covering the split once; the last may be short.
template <typename T>
std::vector<Batch<T>> batches(const DatasetSplit& split, std::size_t batch_size, std::uint64_t seed,
                              std::size_t epoch);

}  // namespace tunet
