#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tunet/dataset.hpp"
#include "tunet/model.hpp"

namespace tunet {

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 200;
  double lr_init = 0.005;
  double lr_decay = 0.5;
  std::size_t decay_every = 10;
  std::uint64_t seed = 0;
  int precision = 32;
  double max_grad_norm = 0.0;  // global-norm clipping; 0 disables

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// lr_init * lr_decay^floor(epoch / decay_every), epochs counted from 0.
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const ParamStore<T>& params);
};

// One bias-corrected Adam update. Rejects non-finite gradients before
// touching any state.
template <typename T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, AdamState<T>& state, double lr);

// Scales `grads` in place so their global L2 norm is at most max_norm.
// Returns the norm before scaling.
template <typename T>
double clip_grad_norm(ParamStore<T>& grads, double max_norm);

struct EpochReport {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double accuracy = 0.0;

  bool operator==(const EpochReport&) const = default;
};

std::string epoch_log_header();
std::string format_epoch_report(const EpochReport& report);

// Shuffles (seed mixed with epoch), then runs forward/backward/Adam per
// batch. `data` must already carry the labels of the task being trained.
template <typename T>
EpochReport train_epoch(ParamStore<T>& params, AdamState<T>& state, const DatasetSplit& data,
                        const TUnetConfig& model, const TrainConfig& cfg, std::size_t epoch);

// Runs cfg.epochs epochs, writing one CSV line per epoch to `log` if given.
template <typename T>
std::vector<EpochReport> fit(ParamStore<T>& params, const DatasetSplit& data, const TUnetConfig& model,
                             const TrainConfig& cfg, std::ostream* log = nullptr);

struct SplitEvaluation {
  double mean_loss = 0.0;
  double pooled_accuracy = 0.0;
  std::vector<std::vector<int>> predictions;  // per series, in split order
};

template <typename T>
SplitEvaluation evaluate_split(const ParamStore<T>& params, const TUnetConfig& model, const DatasetSplit& data,
                               std::size_t batch_size = 128);

}  // namespace tunet
