#include "tunet/optimizer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "tunet/errors.hpp"

namespace tunet {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (decay_every < 1) throw ConfigError("decay_every must be >= 1");
  if (!(lr_init >= 0.0) || !std::isfinite(lr_init)) throw ConfigError("lr_init must be a finite value >= 0");
  if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
  if (!(max_grad_norm >= 0.0)) throw ConfigError("max_grad_norm must be >= 0");
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr_init * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.decay_every));
}

template <typename T>
AdamState<T> AdamState<T>::for_params(const ParamStore<T>& params) {
  AdamState<T> state;
  for (const auto& p : params.entries()) {
    state.m.emplace_back(p.values.size(), T{0});
    state.v.emplace_back(p.values.size(), T{0});
  }
  return state;
}

template <typename T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, AdamState<T>& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ShapeError("adam_step: gradient/state layout does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].values.size() != params[i].values.size() || state.m[i].size() != params[i].values.size()) {
      throw ShapeError("adam_step: shape mismatch for " + params[i].name);
    }
    if (!all_finite<T>(grads[i].values)) {
      throw DivergenceError("adam_step: non-finite gradient in " + params[i].name);
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T one_minus_b1 = static_cast<T>(1.0 - state.beta1);
  const T one_minus_b2 = static_cast<T>(1.0 - state.beta2);
  const T inv_bc1 = static_cast<T>(1.0 / (1.0 - std::pow(state.beta1, t)));
  const T inv_bc2 = static_cast<T>(1.0 / (1.0 - std::pow(state.beta2, t)));
  const T step = static_cast<T>(lr);
  const T eps = static_cast<T>(state.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].values;
    const auto& g = grads[i].values;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = b1 * m[k] + one_minus_b1 * g[k];
      v[k] = b2 * v[k] + one_minus_b2 * g[k] * g[k];
      const T m_hat = m[k] * inv_bc1;
      const T v_hat = v[k] * inv_bc2;
      theta[k] -= step * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
double clip_grad_norm(ParamStore<T>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& p : grads.entries()) {
    for (const T v : p.values) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& p : grads.entries()) {
      for (T& v : p.values) v *= scale;
    }
  }
  return norm;
}

std::string epoch_log_header() { return "epoch,lr,mean_loss,train_accuracy"; }

std::string format_epoch_report(const EpochReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.17g,%.17g", r.epoch, r.lr, r.mean_loss, r.accuracy);
  return buf;
}

namespace {

template <typename T>
std::size_t count_hits(const Tensor3<T>& logits, const LabelMatrix& labels) {
  const LabelMatrix pred = argmax_labels(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) hits += pred.values[i] == labels.values[i] ? 1 : 0;
  return hits;
}

}  // namespace

template <typename T>
EpochReport train_epoch(ParamStore<T>& params, AdamState<T>& state, const DatasetSplit& data,
                        const TUnetConfig& model, const TrainConfig& cfg, std::size_t epoch) {
  cfg.validate();
  if (data.series.empty()) throw DataError("train_epoch: training split is empty");
  EpochReport report;
  report.epoch = epoch;
  report.lr = lr_at_epoch(cfg, epoch);

  double loss_sum = 0.0;
  std::size_t hits = 0;
  std::size_t samples = 0;
  const auto order = epoch_order(data.series.size(), cfg.seed, epoch);
  std::size_t batch_index = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
    const std::size_t end = std::min(begin + cfg.batch_size, order.size());
    const auto batch = pack_batch<T>(data, std::span<const std::size_t>(order).subspan(begin, end - begin));
    auto fwd = forward(params, batch.x, model);
    auto xent = softmax_xent_forward(fwd.logits, batch.labels);
    if (!std::isfinite(xent.loss)) {
      throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
    }
    const std::size_t batch_samples = batch.labels.values.size();
    loss_sum += xent.loss * static_cast<double>(batch_samples);
    samples += batch_samples;
    hits += count_hits(fwd.logits, batch.labels);

    auto grads = backward(params, fwd.cache, softmax_xent_backward(xent.probs, batch.labels), model);
    if (cfg.max_grad_norm > 0.0) clip_grad_norm(grads, cfg.max_grad_norm);
    try {
      adam_step(params, grads, state, report.lr);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + ")");
    }
  }
  report.mean_loss = loss_sum / static_cast<double>(samples);
  report.accuracy = static_cast<double>(hits) / static_cast<double>(samples);
  return report;
}

template <typename T>
std::vector<EpochReport> fit(ParamStore<T>& params, const DatasetSplit& data, const TUnetConfig& model,
                             const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  auto state = AdamState<T>::for_params(params);
  std::vector<EpochReport> reports;
  if (log != nullptr) *log << epoch_log_header() << '\n';
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    reports.push_back(train_epoch(params, state, data, model, cfg, epoch));
    if (log != nullptr) *log << format_epoch_report(reports.back()) << std::endl;
  }
  return reports;
}

template <typename T>
SplitEvaluation evaluate_split(const ParamStore<T>& params, const TUnetConfig& model, const DatasetSplit& data,
                               std::size_t batch_size) {
  if (data.series.empty()) throw DataError("evaluate: split is empty");
  if (batch_size == 0) throw ConfigError("evaluate: batch_size must be >= 1");
  SplitEvaluation result;
  double loss_sum = 0.0;
  std::size_t hits = 0;
  std::size_t samples = 0;
  std::vector<std::size_t> order(data.series.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, order.size());
    const auto batch = pack_batch<T>(data, std::span<const std::size_t>(order).subspan(begin, end - begin));
    const auto fwd = forward(params, batch.x, model);
    const auto xent = softmax_xent_forward(fwd.logits, batch.labels);
    loss_sum += xent.loss * static_cast<double>(batch.labels.values.size());
    samples += batch.labels.values.size();
    const LabelMatrix pred = argmax_labels(xent.probs);
    for (std::size_t b = 0; b < pred.batch; ++b) {
      auto first = pred.values.begin() + static_cast<std::ptrdiff_t>(b * pred.length);
      result.predictions.emplace_back(first, first + static_cast<std::ptrdiff_t>(pred.length));
    }
    for (std::size_t i = 0; i < pred.values.size(); ++i) hits += pred.values[i] == batch.labels.values[i] ? 1 : 0;
  }
  result.mean_loss = loss_sum / static_cast<double>(samples);
  result.pooled_accuracy = static_cast<double>(hits) / static_cast<double>(samples);
  return result;
}

#define TUNET_INSTANTIATE_OPTIMIZER(T)                                                                    \
  template struct AdamState<T>;                                                                           \
  template void adam_step(ParamStore<T>&, const ParamStore<T>&, AdamState<T>&, double);                   \
  template double clip_grad_norm(ParamStore<T>&, double);                                                 \
  template EpochReport train_epoch(ParamStore<T>&, AdamState<T>&, const DatasetSplit&, const TUnetConfig&, \
                                   const TrainConfig&, std::size_t);                                      \
  template std::vector<EpochReport> fit(ParamStore<T>&, const DatasetSplit&, const TUnetConfig&,          \
                                        const TrainConfig&, std::ostream*);                               \
  template SplitEvaluation evaluate_split(const ParamStore<T>&, const TUnetConfig&, const DatasetSplit&,  \
                                          std::size_t);

TUNET_INSTANTIATE_OPTIMIZER(float)
TUNET_INSTANTIATE_OPTIMIZER(double)

#undef TUNET_INSTANTIATE_OPTIMIZER

}  // namespace tunet
