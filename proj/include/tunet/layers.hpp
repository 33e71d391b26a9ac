#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tunet/tensor.hpp"

namespace tunet {

// Temporal convolution (cross-correlation) parameters. Non-owning view.
//   out(b,o,t) = bias(o) + sum_{i,k} weights(o,i,k) * x_padded(b,i,t*stride+k)
template <typename T>
struct Conv1dParams {
  std::span<const T> weights;  // out_channels x in_channels x kernel_size
  std::span<const T> bias;     // out_channels, may be empty for "no bias"
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  // Throws ShapeError when the window division is not exact.
  std::size_t output_length(std::size_t input_length) const;
  void validate() const;
};

// Transposed temporal convolution. Weights are laid out in x out x kernel,
// the same memory a Conv1dParams with out/in swapped would use.
template <typename T>
struct Deconv1dParams {
  std::span<const T> weights;  // in_channels x out_channels x kernel_size
  std::span<const T> bias;     // out_channels
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;

  std::size_t output_length(std::size_t input_length) const {
    return (input_length - 1) * stride + kernel_size;
  }
  void validate() const;
};

template <typename T>
struct Conv1dCache {
  Tensor3<T> input;
};

template <typename T>
struct Deconv1dCache {
  Tensor3<T> input;
};

template <typename T>
struct LayerGrads {
  Tensor3<T> grad_x;
  std::vector<T> grad_w;
  std::vector<T> grad_b;
};

struct PoolCache {
  Shape3 output_shape;
  std::size_t input_length = 0;
  std::size_t kernel = 0;
  std::size_t stride = 0;
  std::vector<std::size_t> argmax_index;  // absolute input time index per output element
};

struct ReluCache {
  Shape3 shape;
  std::vector<std::uint8_t> active;  // 1 where the input was strictly positive
};

template <typename T>
struct XentResult {
  double loss = 0.0;
  Tensor3<T> probs;
};

template <typename T>
std::pair<Tensor3<T>, Conv1dCache<T>> conv1d_forward(const Tensor3<T>& x, const Conv1dParams<T>& p);

template <typename T>
LayerGrads<T> conv1d_backward(const Tensor3<T>& grad_out, const Conv1dCache<T>& cache,
                              const Conv1dParams<T>& p);

template <typename T>
std::pair<Tensor3<T>, PoolCache> maxpool1d_forward(const Tensor3<T>& x, std::size_t kernel,
                                                   std::size_t stride);

template <typename T>
Tensor3<T> maxpool1d_backward(const Tensor3<T>& grad_out, const PoolCache& cache,
                              std::size_t input_length);

template <typename T>
std::pair<Tensor3<T>, Deconv1dCache<T>> deconv1d_forward(const Tensor3<T>& x,
                                                         const Deconv1dParams<T>& p);

template <typename T>
LayerGrads<T> deconv1d_backward(const Tensor3<T>& grad_out, const Deconv1dCache<T>& cache,
                                const Deconv1dParams<T>& p);

template <typename T>
std::pair<Tensor3<T>, ReluCache> relu_forward(const Tensor3<T>& x);

template <typename T>
Tensor3<T> relu_backward(const Tensor3<T>& grad_out, const ReluCache& cache);

// Softmax over the channel axis at every (batch, time) position.
template <typename T>
Tensor3<T> softmax_channels(const Tensor3<T>& logits);

// Mean over batch x time of -log p(true class).
template <typename T>
XentResult<T> softmax_xent_forward(const Tensor3<T>& logits, const LabelMatrix& labels);

template <typename T>
Tensor3<T> softmax_xent_backward(const Tensor3<T>& probs, const LabelMatrix& labels);

}  // namespace tunet
