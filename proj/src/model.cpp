#include "tunet/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tunet/rng.hpp"

namespace tunet {

void TUnetConfig::validate() const {
  if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2, got " + std::to_string(num_classes));
  if (depth < 1 || depth > 16) throw ConfigError("depth must be in [1, 16], got " + std::to_string(depth));
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (conv_kernel < 1) throw ConfigError("conv_kernel must be >= 1");
  const std::size_t unit = std::size_t{1} << depth;
  if (series_length == 0 || series_length % unit != 0) {
    throw ConfigError("series_length " + std::to_string(series_length) + " is not divisible by 2^depth = " +
                      std::to_string(unit));
  }
}

std::vector<LayerSpec> layer_plan(const TUnetConfig& config) {
  config.validate();
  const std::size_t k = config.conv_kernel;
  const std::size_t pad = config.conv_padding();
  std::vector<LayerSpec> plan;
  auto conv = [&](std::string name, std::size_t in, std::size_t out) {
    plan.push_back({std::move(name), LayerKind::conv, in, out, k, 1, pad, true});
  };

  std::size_t in = config.input_channels;
  for (std::size_t level = 0; level < config.depth; ++level) {
    const std::size_t ch = config.channels_at(level);
    const std::string stage = "down" + std::to_string(level);
    conv(stage + ".conv0", in, ch);
    conv(stage + ".conv1", ch, ch);
    in = ch;
  }
  const std::size_t deepest = config.channels_at(config.depth);
  conv("bottleneck.conv0", in, deepest);
  conv("bottleneck.conv1", deepest, deepest);
  in = deepest;
  for (std::size_t level = config.depth; level-- > 0;) {
    const std::size_t ch = config.channels_at(level);
    const std::string stage = "up" + std::to_string(level);
    plan.push_back({stage + ".deconv", LayerKind::deconv, in, ch, 2, 2, 0, false});
    conv(stage + ".conv0", 2 * ch, ch);
    conv(stage + ".conv1", ch, ch);
    in = ch;
  }
  plan.push_back({"head", LayerKind::conv, in, config.num_classes, 1, 1, 0, false});
  return plan;
}

template <typename T>
Param<T>& ParamStore<T>::add(std::string name, std::vector<std::size_t> shape) {
  if (std::any_of(entries_.begin(), entries_.end(), [&](const Param<T>& p) { return p.name == name; })) {
    throw ConfigError("duplicate parameter name " + name);
  }
  std::size_t count = 1;
  for (const auto d : shape) count *= d;
  entries_.push_back({std::move(name), std::move(shape), std::vector<T>(count, T{0})});
  return entries_.back();
}

template <typename T>
const Param<T>& ParamStore<T>::at(std::string_view name) const {
  for (const auto& p : entries_) {
    if (p.name == name) return p;
  }
  throw ShapeError("no parameter named " + std::string(name));
}

template <typename T>
Param<T>& ParamStore<T>::at(std::string_view name) {
  return const_cast<Param<T>&>(std::as_const(*this).at(name));
}

template <typename T>
std::size_t ParamStore<T>::total_values() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.values.size();
  return n;
}

template <typename T>
ParamStore<T> ParamStore<T>::zeros_like() const {
  ParamStore<T> out;
  for (const auto& p : entries_) out.add(p.name, p.shape);
  return out;
}

template <typename T>
ParamStore<T> build(const TUnetConfig& config) {
  const auto plan = layer_plan(config);
  ParamStore<T> store;
  Rng rng(config.seed);
  for (const auto& layer : plan) {
    auto& w = store.add(layer.name + ".weight", layer.weight_shape());
    // He-style scale: variance 2 / fan_in, where fan_in counts the terms
    // summed into one output sample.
    const double fan_in = layer.kind == LayerKind::conv
                              ? static_cast<double>(layer.in_channels * layer.kernel)
                              : std::max(1.0, static_cast<double>(layer.in_channels * layer.kernel) /
                                                  static_cast<double>(layer.stride));
    const double stddev = std::sqrt(2.0 / fan_in);
    for (auto& v : w.values) v = static_cast<T>(rng.normal(0.0, stddev));
    store.add(layer.name + ".bias", {layer.out_channels});
  }
  return store;
}

template <typename T>
void check_params_match(const ParamStore<T>& params, const TUnetConfig& config) {
  const auto plan = layer_plan(config);
  if (params.size() != 2 * plan.size()) {
    throw ShapeError("parameter store holds " + std::to_string(params.size()) + " arrays, config expects " +
                     std::to_string(2 * plan.size()));
  }
  for (std::size_t j = 0; j < plan.size(); ++j) {
    const auto& w = params[2 * j];
    const auto& b = params[2 * j + 1];
    if (w.name != plan[j].name + ".weight" || w.shape != plan[j].weight_shape() ||
        b.name != plan[j].name + ".bias" || b.shape != std::vector<std::size_t>{plan[j].out_channels}) {
      throw ShapeError("parameter " + w.name + " does not match config layer " + plan[j].name);
    }
  }
}

namespace {

template <typename T>
Conv1dParams<T> conv_view(const ParamStore<T>& params, std::size_t j, const LayerSpec& s) {
  return {params[2 * j].values, params[2 * j + 1].values, s.out_channels, s.in_channels, s.kernel, s.stride,
          s.padding};
}

template <typename T>
Deconv1dParams<T> deconv_view(const ParamStore<T>& params, std::size_t j, const LayerSpec& s) {
  return {params[2 * j].values, params[2 * j + 1].values, s.in_channels, s.out_channels, s.kernel, s.stride};
}

// Conv (+ trailing-sample trim for even kernels) (+ ReLU).
template <typename T>
Tensor3<T> run_conv(const ParamStore<T>& params, std::size_t j, const LayerSpec& s, const Tensor3<T>& x,
                    LayerCache<T>& cache) {
  auto [y, conv_cache] = conv1d_forward(x, conv_view(params, j, s));
  cache.conv = std::move(conv_cache);
  cache.raw_length = y.length();
  if (y.length() > x.length()) y = crop_time(y, x.length());
  if (!s.relu) return std::move(y);
  auto [r, relu_cache] = relu_forward(y);
  cache.relu = std::move(relu_cache);
  return std::move(r);
}

template <typename T>
Tensor3<T> back_conv(const ParamStore<T>& params, std::size_t j, const LayerSpec& s, Tensor3<T> grad,
                     const LayerCache<T>& cache, ParamStore<T>& grads) {
  if (s.relu) grad = relu_backward(grad, cache.relu);
  if (grad.length() < cache.raw_length) grad = uncrop_time_grad(grad, cache.raw_length);
  auto g = conv1d_backward(grad, cache.conv, conv_view(params, j, s));
  grads[2 * j].values = std::move(g.grad_w);
  grads[2 * j + 1].values = std::move(g.grad_b);
  return std::move(g.grad_x);
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const ParamStore<T>& params, const Tensor3<T>& x, const TUnetConfig& config) {
  const auto plan = layer_plan(config);
  check_params_match(params, config);
  if (x.channels() != config.input_channels || x.length() != config.series_length || x.batch() == 0) {
    throw ShapeError("forward: input " + x.shape().str() + " does not match config (batch x " +
                     std::to_string(config.input_channels) + " x " + std::to_string(config.series_length) + ")");
  }

  ForwardResult<T> result;
  auto& cache = result.cache;
  cache.input_shape = x.shape();
  cache.layers.resize(plan.size());

  std::size_t j = 0;
  Tensor3<T> h = x;
  for (std::size_t level = 0; level < config.depth; ++level) {
    h = run_conv(params, j, plan[j], h, cache.layers[j]);
    ++j;
    h = run_conv(params, j, plan[j], h, cache.layers[j]);
    ++j;
    auto [pooled, pool_cache] = maxpool1d_forward(h, 2, 2);
    cache.pools.push_back(std::move(pool_cache));
    cache.skips.push_back(std::move(h));
    h = std::move(pooled);
  }
  h = run_conv(params, j, plan[j], h, cache.layers[j]);
  ++j;
  h = run_conv(params, j, plan[j], h, cache.layers[j]);
  ++j;
  for (std::size_t level = config.depth; level-- > 0;) {
    auto [up, deconv_cache] = deconv1d_forward(h, deconv_view(params, j, plan[j]));
    cache.layers[j].deconv = std::move(deconv_cache);
    ++j;
    h = concat_channels(up, cache.skips[level]);
    h = run_conv(params, j, plan[j], h, cache.layers[j]);
    ++j;
    h = run_conv(params, j, plan[j], h, cache.layers[j]);
    ++j;
  }
  result.logits = run_conv(params, j, plan[j], h, cache.layers[j]);
  return result;
}

template <typename T>
ParamStore<T> backward(const ParamStore<T>& params, const ForwardCache<T>& cache,
                       const Tensor3<T>& grad_logits, const TUnetConfig& config) {
  const auto plan = layer_plan(config);
  check_params_match(params, config);
  if (cache.layers.size() != plan.size() || cache.pools.size() != config.depth ||
      cache.skips.size() != config.depth) {
    throw ShapeError("backward: cache was not produced by this configuration");
  }
  const Shape3 logits_shape{cache.input_shape.batch, config.num_classes, config.series_length};
  if (grad_logits.shape() != logits_shape) {
    throw ShapeError("backward: grad_logits " + grad_logits.shape().str() + " vs logits " + logits_shape.str());
  }

  ParamStore<T> grads = params.zeros_like();
  std::size_t j = plan.size() - 1;
  Tensor3<T> g = back_conv(params, j, plan[j], grad_logits, cache.layers[j], grads);

  std::vector<Tensor3<T>> skip_grads(config.depth);
  for (std::size_t level = 0; level < config.depth; ++level) {
    --j;
    g = back_conv(params, j, plan[j], std::move(g), cache.layers[j], grads);
    --j;
    g = back_conv(params, j, plan[j], std::move(g), cache.layers[j], grads);
    auto [up_grad, skip_grad] = split_channels(g, plan[j].out_channels);
    skip_grads[level] = std::move(skip_grad);
    --j;
    auto dg = deconv1d_backward(up_grad, cache.layers[j].deconv, deconv_view(params, j, plan[j]));
    grads[2 * j].values = std::move(dg.grad_w);
    grads[2 * j + 1].values = std::move(dg.grad_b);
    g = std::move(dg.grad_x);
  }

  --j;
  g = back_conv(params, j, plan[j], std::move(g), cache.layers[j], grads);
  --j;
  g = back_conv(params, j, plan[j], std::move(g), cache.layers[j], grads);
  for (std::size_t level = config.depth; level-- > 0;) {
    g = maxpool1d_backward(g, cache.pools[level], cache.skips[level].length());
    const auto s = skip_grads[level].data();
    auto d = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    --j;
    g = back_conv(params, j, plan[j], std::move(g), cache.layers[j], grads);
    --j;
    g = back_conv(params, j, plan[j], std::move(g), cache.layers[j], grads);
  }
  return grads;
}

template <typename T>
bool same_activation_pattern(const ForwardCache<T>& a, const ForwardCache<T>& b) {
  if (a.layers.size() != b.layers.size() || a.pools.size() != b.pools.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].relu.active != b.layers[i].relu.active) return false;
  }
  for (std::size_t i = 0; i < a.pools.size(); ++i) {
    if (a.pools[i].argmax_index != b.pools[i].argmax_index) return false;
  }
  return true;
}

namespace {

template <typename T>
LabelMatrix argmax_impl(const Tensor3<T>& scores) {
  LabelMatrix labels(scores.batch(), scores.length());
  for (std::size_t n = 0; n < scores.batch(); ++n) {
    for (std::size_t t = 0; t < scores.length(); ++t) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < scores.channels(); ++c) {
        if (scores(n, c, t) > scores(n, best, t)) best = c;
      }
      labels(n, t) = static_cast<int>(best);
    }
  }
  return labels;
}

}  // namespace

LabelMatrix argmax_labels(const Tensor3<float>& scores) { return argmax_impl(scores); }
LabelMatrix argmax_labels(const Tensor3<double>& scores) { return argmax_impl(scores); }

template <typename T>
Prediction<T> predict(const ParamStore<T>& params, const Tensor3<T>& x, const TUnetConfig& config) {
  auto result = forward(params, x, config);
  Prediction<T> out;
  out.confidences = softmax_channels(result.logits);
  out.labels = argmax_labels(out.confidences);
  return out;
}

#define TUNET_INSTANTIATE_MODEL(T)                                                                    \
  template class ParamStore<T>;                                                                       \
  template ParamStore<T> build(const TUnetConfig&);                                                   \
  template void check_params_match(const ParamStore<T>&, const TUnetConfig&);                         \
  template ForwardResult<T> forward(const ParamStore<T>&, const Tensor3<T>&, const TUnetConfig&);     \
  template ParamStore<T> backward(const ParamStore<T>&, const ForwardCache<T>&, const Tensor3<T>&,    \
                                  const TUnetConfig&);                                                \
  template bool same_activation_pattern(const ForwardCache<T>&, const ForwardCache<T>&);              \
  template Prediction<T> predict(const ParamStore<T>&, const Tensor3<T>&, const TUnetConfig&);

TUNET_INSTANTIATE_MODEL(float)
TUNET_INSTANTIATE_MODEL(double)

#undef TUNET_INSTANTIATE_MODEL

}  // namespace tunet
