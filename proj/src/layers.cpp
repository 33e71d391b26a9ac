#include "tunet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tunet/gemm.hpp"

namespace tunet {
namespace {

std::string dims(std::size_t a, std::size_t b, std::size_t c) {
  return std::to_string(a) + "x" + std::to_string(b) + "x" + std::to_string(c);
}

// Column matrix of a batch: row (c * kernel + k), column (b * extent + t)
// holds x(b, c, t * stride + k - pad), zero where that index falls outside.
template <typename T>
std::vector<T> im2col(const Tensor3<T>& x, std::size_t kernel, std::size_t stride, std::size_t pad,
                      std::size_t extent) {
  const std::size_t cols = x.batch() * extent;
  std::vector<T> col(x.channels() * kernel * cols, T{0});
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (std::size_t k = 0; k < kernel; ++k) {
      T* dst = col.data() + (c * kernel + k) * cols;
      for (std::size_t b = 0; b < x.batch(); ++b) {
        const T* src = x.row(b, c);
        for (std::size_t t = 0; t < extent; ++t) {
          const std::size_t u = t * stride + k;
          if (u >= pad && u - pad < x.length()) dst[b * extent + t] = src[u - pad];
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col: adds every column entry back onto the sample it was read from.
template <typename T>
void col2im_add(const std::vector<T>& col, std::size_t kernel, std::size_t stride, std::size_t pad,
                std::size_t extent, Tensor3<T>& target) {
  const std::size_t cols = target.batch() * extent;
  for (std::size_t c = 0; c < target.channels(); ++c) {
    for (std::size_t k = 0; k < kernel; ++k) {
      const T* src = col.data() + (c * kernel + k) * cols;
      for (std::size_t b = 0; b < target.batch(); ++b) {
        T* dst = target.row(b, c);
        for (std::size_t t = 0; t < extent; ++t) {
          const std::size_t u = t * stride + k;
          if (u >= pad && u - pad < target.length()) dst[u - pad] += src[b * extent + t];
        }
      }
    }
  }
}

// Channel-major matrix view of a batch: row c, column (b * length + t).
template <typename T>
std::vector<T> to_matrix(const Tensor3<T>& x) {
  const std::size_t cols = x.batch() * x.length();
  std::vector<T> m(x.channels() * cols);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (std::size_t b = 0; b < x.batch(); ++b) std::copy_n(x.row(b, c), x.length(), m.data() + c * cols + b * x.length());
  }
  return m;
}

template <typename T>
void from_matrix(const std::vector<T>& m, Tensor3<T>& x) {
  const std::size_t cols = x.batch() * x.length();
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (std::size_t b = 0; b < x.batch(); ++b) std::copy_n(m.data() + c * cols + b * x.length(), x.length(), x.row(b, c));
  }
}

template <typename T>
std::vector<T> bias_grad(const Tensor3<T>& g) {
  std::vector<T> grad(g.channels(), T{0});
  for (std::size_t n = 0; n < g.batch(); ++n) {
    for (std::size_t c = 0; c < g.channels(); ++c) {
      const T* r = g.row(n, c);
      T acc{0};
      for (std::size_t t = 0; t < g.length(); ++t) acc += r[t];
      grad[c] += acc;
    }
  }
  return grad;
}

}  // namespace

template <typename T>
void Conv1dParams<T>::validate() const {
  if (kernel_size < 1 || stride < 1) throw ShapeError("conv1d: kernel_size and stride must be >= 1");
  if (weights.size() != out_channels * in_channels * kernel_size) {
    throw ShapeError("conv1d: weights hold " + std::to_string(weights.size()) + " values, expected " +
                     dims(out_channels, in_channels, kernel_size));
  }
  if (!bias.empty() && bias.size() != out_channels) {
    throw ShapeError("conv1d: bias length " + std::to_string(bias.size()) + " != out_channels " +
                     std::to_string(out_channels));
  }
}

template <typename T>
std::size_t Conv1dParams<T>::output_length(std::size_t input_length) const {
  const std::size_t padded = input_length + 2 * padding;
  if (padded < kernel_size || (padded - kernel_size) % stride != 0) {
    throw ShapeError("conv1d: input length " + std::to_string(input_length) + " with padding " +
                     std::to_string(padding) + " does not tile kernel " + std::to_string(kernel_size) +
                     " / stride " + std::to_string(stride) + " exactly");
  }
  return (padded - kernel_size) / stride + 1;
}

template <typename T>
void Deconv1dParams<T>::validate() const {
  if (kernel_size < 1 || stride < 1) throw ShapeError("deconv1d: kernel_size and stride must be >= 1");
  if (weights.size() != in_channels * out_channels * kernel_size) {
    throw ShapeError("deconv1d: weights hold " + std::to_string(weights.size()) + " values, expected " +
                     dims(in_channels, out_channels, kernel_size));
  }
  if (!bias.empty() && bias.size() != out_channels) {
    throw ShapeError("deconv1d: bias length " + std::to_string(bias.size()) + " != out_channels " +
                     std::to_string(out_channels));
  }
}

template <typename T>
std::pair<Tensor3<T>, Conv1dCache<T>> conv1d_forward(const Tensor3<T>& x, const Conv1dParams<T>& p) {
  p.validate();
  if (x.channels() != p.in_channels) {
    throw ShapeError("conv1d: input has " + std::to_string(x.channels()) + " channels, layer expects " +
                     std::to_string(p.in_channels));
  }
  const std::size_t out_len = p.output_length(x.length());
  const std::size_t cols = x.batch() * out_len;
  const std::size_t depth = p.in_channels * p.kernel_size;
  const auto col = im2col(x, p.kernel_size, p.stride, p.padding, out_len);
  std::vector<T> ym(p.out_channels * cols, T{0});
  if (!p.bias.empty()) {
    for (std::size_t o = 0; o < p.out_channels; ++o) std::fill_n(ym.data() + o * cols, cols, p.bias[o]);
  }
  gemm_accumulate(p.out_channels, cols, depth, p.weights.data(), depth, 1, col.data(), cols, 1, ym.data(), cols);
  Tensor3<T> y(x.batch(), p.out_channels, out_len);
  from_matrix(ym, y);
  return {std::move(y), Conv1dCache<T>{x}};
}

template <typename T>
LayerGrads<T> conv1d_backward(const Tensor3<T>& grad_out, const Conv1dCache<T>& cache,
                              const Conv1dParams<T>& p) {
  p.validate();
  const Tensor3<T>& x = cache.input;
  if (x.channels() != p.in_channels) throw ShapeError("conv1d_backward: cache does not match layer");
  const Shape3 expected{x.batch(), p.out_channels, p.output_length(x.length())};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv1d_backward: grad_out is " + grad_out.shape().str() + ", forward output was " +
                     expected.str());
  }
  const std::size_t in_ch = p.in_channels;
  const std::size_t out_ch = p.out_channels;
  const std::size_t kernel = p.kernel_size;
  const std::size_t out_len = expected.length;

  LayerGrads<T> grads;
  grads.grad_w.assign(p.weights.size(), T{0});
  grads.grad_b = bias_grad(grad_out);
  grads.grad_x = Tensor3<T>(x.shape());

  const std::size_t cols = x.batch() * out_len;
  const std::size_t depth = in_ch * kernel;
  const auto g = to_matrix(grad_out);
  const auto col = im2col(x, kernel, p.stride, p.padding, out_len);
  gemm_accumulate(out_ch, depth, cols, g.data(), cols, 1, col.data(), 1, cols, grads.grad_w.data(), depth);
  std::vector<T> grad_col(depth * cols, T{0});
  gemm_accumulate(depth, cols, out_ch, p.weights.data(), 1, depth, g.data(), cols, 1, grad_col.data(), cols);
  col2im_add(grad_col, kernel, p.stride, p.padding, out_len, grads.grad_x);
  return grads;
}

template <typename T>
std::pair<Tensor3<T>, PoolCache> maxpool1d_forward(const Tensor3<T>& x, std::size_t kernel,
                                                   std::size_t stride) {
  if (kernel < 1 || stride < 1) throw ShapeError("maxpool1d: kernel and stride must be >= 1");
  if (x.length() < kernel || (x.length() - kernel) % stride != 0) {
    throw ShapeError("maxpool1d: length " + std::to_string(x.length()) + " is not covered exactly by kernel " +
                     std::to_string(kernel) + " / stride " + std::to_string(stride));
  }
  const std::size_t out_len = (x.length() - kernel) / stride + 1;
  Tensor3<T> y(x.batch(), x.channels(), out_len);
  PoolCache cache{y.shape(), x.length(), kernel, stride, std::vector<std::size_t>(y.size())};
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const T* src = x.row(n, c);
      T* dst = y.row(n, c);
      std::size_t* arg = cache.argmax_index.data() + y.offset(n, c, 0);
      for (std::size_t t = 0; t < out_len; ++t) {
        std::size_t best = t * stride;
        for (std::size_t u = best + 1; u < t * stride + kernel; ++u) {
          if (src[u] > src[best]) best = u;
        }
        dst[t] = src[best];
        arg[t] = best;
      }
    }
  }
  return {std::move(y), std::move(cache)};
}

template <typename T>
Tensor3<T> maxpool1d_backward(const Tensor3<T>& grad_out, const PoolCache& cache,
                              std::size_t input_length) {
  if (grad_out.shape() != cache.output_shape || input_length != cache.input_length ||
      cache.argmax_index.size() != grad_out.size()) {
    throw ShapeError("maxpool1d_backward: grad_out " + grad_out.shape().str() +
                     " does not match pooled shape " + cache.output_shape.str());
  }
  Tensor3<T> grad_x(grad_out.batch(), grad_out.channels(), input_length);
  for (std::size_t n = 0; n < grad_out.batch(); ++n) {
    for (std::size_t c = 0; c < grad_out.channels(); ++c) {
      const T* g = grad_out.row(n, c);
      const std::size_t* arg = cache.argmax_index.data() + grad_out.offset(n, c, 0);
      T* dst = grad_x.row(n, c);
      for (std::size_t t = 0; t < grad_out.length(); ++t) dst[arg[t]] += g[t];
    }
  }
  return grad_x;
}

template <typename T>
std::pair<Tensor3<T>, Deconv1dCache<T>> deconv1d_forward(const Tensor3<T>& x,
                                                         const Deconv1dParams<T>& p) {
  p.validate();
  if (x.channels() != p.in_channels) {
    throw ShapeError("deconv1d: input has " + std::to_string(x.channels()) + " channels, layer expects " +
                     std::to_string(p.in_channels));
  }
  if (x.length() == 0) throw ShapeError("deconv1d: empty input");
  Tensor3<T> y(x.batch(), p.out_channels, p.output_length(x.length()));
  const std::size_t cols = x.batch() * x.length();
  const std::size_t depth = p.out_channels * p.kernel_size;
  const auto xm = to_matrix(x);
  std::vector<T> z(depth * cols, T{0});
  gemm_accumulate(depth, cols, p.in_channels, p.weights.data(), 1, depth, xm.data(), cols, 1, z.data(), cols);
  if (!p.bias.empty()) {
    for (std::size_t n = 0; n < y.batch(); ++n) {
      for (std::size_t o = 0; o < p.out_channels; ++o) std::fill_n(y.row(n, o), y.length(), p.bias[o]);
    }
  }
  col2im_add(z, p.kernel_size, p.stride, 0, x.length(), y);
  return {std::move(y), Deconv1dCache<T>{x}};
}

template <typename T>
LayerGrads<T> deconv1d_backward(const Tensor3<T>& grad_out, const Deconv1dCache<T>& cache,
                                const Deconv1dParams<T>& p) {
  p.validate();
  const Tensor3<T>& x = cache.input;
  if (x.channels() != p.in_channels) throw ShapeError("deconv1d_backward: cache does not match layer");
  const Shape3 expected{x.batch(), p.out_channels, p.output_length(x.length())};
  if (grad_out.shape() != expected) {
    throw ShapeError("deconv1d_backward: grad_out is " + grad_out.shape().str() +
                     ", forward output was " + expected.str());
  }
  const std::size_t in_ch = p.in_channels;
  const std::size_t out_ch = p.out_channels;
  const std::size_t kernel = p.kernel_size;
  const std::size_t len = x.length();

  LayerGrads<T> grads;
  grads.grad_w.assign(p.weights.size(), T{0});
  grads.grad_b = bias_grad(grad_out);
  grads.grad_x = Tensor3<T>(x.shape());

  const std::size_t cols = x.batch() * len;
  const std::size_t depth = out_ch * kernel;
  // The backward pass of a transposed convolution is a plain strided
  // correlation of grad_out with the same weight memory.
  const auto col = im2col(grad_out, kernel, p.stride, 0, len);
  const auto xm = to_matrix(x);
  std::vector<T> gx(in_ch * cols, T{0});
  gemm_accumulate(in_ch, cols, depth, p.weights.data(), depth, 1, col.data(), cols, 1, gx.data(), cols);
  from_matrix(gx, grads.grad_x);
  gemm_accumulate(in_ch, depth, cols, xm.data(), cols, 1, col.data(), 1, cols, grads.grad_w.data(), depth);
  return grads;
}

template <typename T>
std::pair<Tensor3<T>, ReluCache> relu_forward(const Tensor3<T>& x) {
  Tensor3<T> y(x.shape());
  ReluCache cache{x.shape(), std::vector<std::uint8_t>(x.size())};
  const auto src = x.data();
  auto dst = y.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const bool on = src[i] > T{0};
    cache.active[i] = on ? 1 : 0;
    dst[i] = on ? src[i] : T{0};
  }
  return {std::move(y), std::move(cache)};
}

template <typename T>
Tensor3<T> relu_backward(const Tensor3<T>& grad_out, const ReluCache& cache) {
  if (grad_out.shape() != cache.shape) {
    throw ShapeError("relu_backward: grad_out " + grad_out.shape().str() + " vs cached " + cache.shape.str());
  }
  Tensor3<T> grad_x(grad_out.shape());
  const auto g = grad_out.data();
  auto dst = grad_x.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] = cache.active[i] != 0 ? g[i] : T{0};
  return grad_x;
}

namespace {

void check_labels(const Shape3& shape, const LabelMatrix& labels, const char* who) {
  if (labels.batch != shape.batch || labels.length != shape.length ||
      labels.values.size() != shape.batch * shape.length) {
    throw ShapeError(std::string(who) + ": labels are " + std::to_string(labels.batch) + "x" +
                     std::to_string(labels.length) + ", logits are " + shape.str());
  }
  for (const int y : labels.values) {
    if (y < 0 || static_cast<std::size_t>(y) >= shape.channels) {
      throw DataError(std::string(who) + ": label " + std::to_string(y) + " outside [0, " +
                      std::to_string(shape.channels) + ")");
    }
  }
}

// Softmax at one (batch, time) position; returns log-sum-exp.
template <typename T>
double softmax_column(const Tensor3<T>& logits, std::size_t n, std::size_t t, Tensor3<T>& probs) {
  const std::size_t classes = logits.channels();
  double peak = static_cast<double>(logits(n, 0, t));
  for (std::size_t c = 1; c < classes; ++c) peak = std::max(peak, static_cast<double>(logits(n, c, t)));
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) total += std::exp(static_cast<double>(logits(n, c, t)) - peak);
  for (std::size_t c = 0; c < classes; ++c) {
    probs(n, c, t) = static_cast<T>(std::exp(static_cast<double>(logits(n, c, t)) - peak) / total);
  }
  return peak + std::log(total);
}

}  // namespace

template <typename T>
Tensor3<T> softmax_channels(const Tensor3<T>& logits) {
  if (logits.channels() == 0) throw ShapeError("softmax: no classes");
  Tensor3<T> probs(logits.shape());
  for (std::size_t n = 0; n < logits.batch(); ++n) {
    for (std::size_t t = 0; t < logits.length(); ++t) softmax_column(logits, n, t, probs);
  }
  return probs;
}

template <typename T>
XentResult<T> softmax_xent_forward(const Tensor3<T>& logits, const LabelMatrix& labels) {
  check_labels(logits.shape(), labels, "softmax_xent_forward");
  XentResult<T> result{0.0, Tensor3<T>(logits.shape())};
  double total = 0.0;
  for (std::size_t n = 0; n < logits.batch(); ++n) {
    for (std::size_t t = 0; t < logits.length(); ++t) {
      const double lse = softmax_column(logits, n, t, result.probs);
      total += lse - static_cast<double>(logits(n, static_cast<std::size_t>(labels(n, t)), t));
    }
  }
  result.loss = total / static_cast<double>(logits.batch() * logits.length());
  return result;
}

template <typename T>
Tensor3<T> softmax_xent_backward(const Tensor3<T>& probs, const LabelMatrix& labels) {
  check_labels(probs.shape(), labels, "softmax_xent_backward");
  const T scale = T{1} / static_cast<T>(probs.batch() * probs.length());
  Tensor3<T> grad(probs.shape());
  for (std::size_t n = 0; n < probs.batch(); ++n) {
    for (std::size_t c = 0; c < probs.channels(); ++c) {
      for (std::size_t t = 0; t < probs.length(); ++t) {
        const T hot = labels(n, t) == static_cast<int>(c) ? T{1} : T{0};
        grad(n, c, t) = (probs(n, c, t) - hot) * scale;
      }
    }
  }
  return grad;
}

#define TUNET_INSTANTIATE_LAYERS(T)                                                                  \
  template struct Conv1dParams<T>;                                                                   \
  template struct Deconv1dParams<T>;                                                                 \
  template std::pair<Tensor3<T>, Conv1dCache<T>> conv1d_forward(const Tensor3<T>&,                   \
                                                                const Conv1dParams<T>&);             \
  template LayerGrads<T> conv1d_backward(const Tensor3<T>&, const Conv1dCache<T>&,                   \
                                         const Conv1dParams<T>&);                                    \
  template std::pair<Tensor3<T>, PoolCache> maxpool1d_forward(const Tensor3<T>&, std::size_t,        \
                                                              std::size_t);                          \
  template Tensor3<T> maxpool1d_backward(const Tensor3<T>&, const PoolCache&, std::size_t);          \
  template std::pair<Tensor3<T>, Deconv1dCache<T>> deconv1d_forward(const Tensor3<T>&,               \
                                                                    const Deconv1dParams<T>&);       \
  template LayerGrads<T> deconv1d_backward(const Tensor3<T>&, const Deconv1dCache<T>&,               \
                                           const Deconv1dParams<T>&);                                \
  template std::pair<Tensor3<T>, ReluCache> relu_forward(const Tensor3<T>&);                         \
  template Tensor3<T> relu_backward(const Tensor3<T>&, const ReluCache&);                            \
  template Tensor3<T> softmax_channels(const Tensor3<T>&);                                           \
  template XentResult<T> softmax_xent_forward(const Tensor3<T>&, const LabelMatrix&);                \
  template Tensor3<T> softmax_xent_backward(const Tensor3<T>&, const LabelMatrix&);

TUNET_INSTANTIATE_LAYERS(float)
TUNET_INSTANTIATE_LAYERS(double)

#undef TUNET_INSTANTIATE_LAYERS

}  // namespace tunet
