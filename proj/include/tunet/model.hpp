#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tunet/layers.hpp"
#include "tunet/tensor.hpp"

namespace tunet {

// Architecture hyperparameters. Level l of the encoder works at
// series_length / 2^l samples with base_channels * 2^l channels.
struct TUnetConfig {
  std::size_t input_channels = 52;
  std::size_t series_length = 192;
  std::size_t num_classes = 2;
  std::size_t depth = 3;
  std::size_t base_channels = 64;
  std::size_t conv_kernel = 3;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t channels_at(std::size_t level) const { return base_channels << level; }
  std::size_t length_at(std::size_t level) const { return series_length >> level; }
  std::size_t conv_padding() const { return conv_kernel / 2; }
  bool operator==(const TUnetConfig&) const = default;
};

enum class LayerKind { conv, deconv };

struct LayerSpec {
  std::string name;  // parameter prefix, e.g. "down1.conv0"
  LayerKind kind = LayerKind::conv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool relu = true;

  std::vector<std::size_t> weight_shape() const {
    if (kind == LayerKind::conv) return {out_channels, in_channels, kernel};
    return {in_channels, out_channels, kernel};
  }
};

// Layers in parameter order: down stages (shallow to deep), bottleneck, up
// stages (deep to shallow), 1x1 head. Layer j owns parameters 2j (weight)
// and 2j+1 (bias).
std::vector<LayerSpec> layer_plan(const TUnetConfig& config);

template <typename T>
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> values;

  bool operator==(const Param&) const = default;
};

template <typename T>
class ParamStore {
 public:
  Param<T>& add(std::string name, std::vector<std::size_t> shape);

  std::size_t size() const { return entries_.size(); }
  Param<T>& operator[](std::size_t i) { return entries_[i]; }
  const Param<T>& operator[](std::size_t i) const { return entries_[i]; }
  const Param<T>& at(std::string_view name) const;
  Param<T>& at(std::string_view name);

  std::vector<Param<T>>& entries() { return entries_; }
  const std::vector<Param<T>>& entries() const { return entries_; }

  std::size_t total_values() const;
  ParamStore zeros_like() const;

  bool operator==(const ParamStore&) const = default;

 private:
  std::vector<Param<T>> entries_;
};

template <typename T>
struct LayerCache {
  Conv1dCache<T> conv;
  Deconv1dCache<T> deconv;
  std::size_t raw_length = 0;  // conv output length before trimming an even kernel's extra sample
  ReluCache relu;
};

template <typename T>
struct ForwardCache {
  Shape3 input_shape;
  std::vector<LayerCache<T>> layers;
  std::vector<PoolCache> pools;         // one per down stage
  std::vector<Tensor3<T>> skips;        // pre-pool activation of each down stage
};

// True when both passes took the same ReLU branches and max-pool winners,
// i.e. the network is the same linear map around both inputs.
template <typename T>
bool same_activation_pattern(const ForwardCache<T>& a, const ForwardCache<T>& b);

template <typename T>
ParamStore<T> build(const TUnetConfig& config);

template <typename T>
struct ForwardResult {
  Tensor3<T> logits;
  ForwardCache<T> cache;
};

template <typename T>
ForwardResult<T> forward(const ParamStore<T>& params, const Tensor3<T>& x, const TUnetConfig& config);

template <typename T>
ParamStore<T> backward(const ParamStore<T>& params, const ForwardCache<T>& cache,
                       const Tensor3<T>& grad_logits, const TUnetConfig& config);

template <typename T>
struct Prediction {
  LabelMatrix labels;
  Tensor3<T> confidences;
};

// Per-sample argmax of the class probabilities, ties to the lowest class.
LabelMatrix argmax_labels(const Tensor3<float>& scores);
LabelMatrix argmax_labels(const Tensor3<double>& scores);

template <typename T>
Prediction<T> predict(const ParamStore<T>& params, const Tensor3<T>& x, const TUnetConfig& config);

// Throws ShapeError unless `params` has exactly the names and shapes `config` builds.
template <typename T>
void check_params_match(const ParamStore<T>& params, const TUnetConfig& config);

// ---- Checkpoints -----------------------------------------------------------

// Per-carrier input normalization carried alongside the weights so a
// checkpoint can score raw series on its own.
struct InputNormalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool empty() const { return mean.empty(); }
  bool operator==(const InputNormalization&) const = default;
};

template <typename T>
struct Checkpoint {
  ParamStore<T> params;
  TUnetConfig config;
  InputNormalization normalization;
};

inline constexpr std::string_view kCheckpointMagic = "TUNET1\n";
inline constexpr int kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const ParamStore<T>& params, const TUnetConfig& config,
                     const std::filesystem::path& path, const InputNormalization& norm = {});

// Loads in the precision the caller asks for; a file written at the same
// precision round-trips bit-exactly.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

// As above, additionally requiring the stored manifest to match `expected`.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path, const TUnetConfig& expected);

}  // namespace tunet
