#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tunet/errors.hpp"

namespace tunet {

struct Shape3 {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t length = 0;

  std::size_t size() const { return batch * channels * length; }
  bool operator==(const Shape3&) const = default;
  std::string str() const {
    return std::to_string(batch) + "x" + std::to_string(channels) + "x" + std::to_string(length);
  }
};

// Dense (batch, channel, time) array, row-major with time innermost.
template <typename T>
class Tensor3 {
 public:
  using value_type = T;

  Tensor3() = default;
  Tensor3(std::size_t batch, std::size_t channels, std::size_t length, T fill = T{0})
      : shape_{batch, channels, length}, data_(batch * channels * length, fill) {}
  explicit Tensor3(Shape3 shape, T fill = T{0})
      : Tensor3(shape.batch, shape.channels, shape.length, fill) {}

  std::size_t batch() const { return shape_.batch; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t length() const { return shape_.length; }
  std::size_t size() const { return data_.size(); }
  const Shape3& shape() const { return shape_; }

  std::size_t offset(std::size_t b, std::size_t c, std::size_t t) const {
    return (b * shape_.channels + c) * shape_.length + t;
  }

  T& operator()(std::size_t b, std::size_t c, std::size_t t) { return data_[offset(b, c, t)]; }
  const T& operator()(std::size_t b, std::size_t c, std::size_t t) const {
    return data_[offset(b, c, t)];
  }

  // One (batch, channel) time row.
  T* row(std::size_t b, std::size_t c) { return data_.data() + offset(b, c, 0); }
  const T* row(std::size_t b, std::size_t c) const { return data_.data() + offset(b, c, 0); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool operator==(const Tensor3&) const = default;

 private:
  Shape3 shape_;
  std::vector<T> data_;
};

// Channel-axis concatenation: `a` occupies channels [0, a.channels()).
template <typename T>
Tensor3<T> concat_channels(const Tensor3<T>& a, const Tensor3<T>& b) {
  if (a.batch() != b.batch() || a.length() != b.length()) {
    throw ShapeError("concat_channels: cannot join " + a.shape().str() + " with " +
                     b.shape().str());
  }
  Tensor3<T> out(a.batch(), a.channels() + b.channels(), a.length());
  const std::size_t len = a.length();
  for (std::size_t n = 0; n < a.batch(); ++n) {
    std::copy_n(a.row(n, 0), a.channels() * len, out.row(n, 0));
    std::copy_n(b.row(n, 0), b.channels() * len, out.row(n, a.channels()));
  }
  return out;
}

// Adjoint of concat_channels: channels [0, split_at) and [split_at, C).
template <typename T>
std::pair<Tensor3<T>, Tensor3<T>> split_channels(const Tensor3<T>& g, std::size_t split_at) {
  if (split_at == 0 || split_at >= g.channels()) {
    throw ShapeError("split_channels: split point " + std::to_string(split_at) +
                     " outside (0, " + std::to_string(g.channels()) + ")");
  }
  const std::size_t len = g.length();
  Tensor3<T> left(g.batch(), split_at, len);
  Tensor3<T> right(g.batch(), g.channels() - split_at, len);
  for (std::size_t n = 0; n < g.batch(); ++n) {
    std::copy_n(g.row(n, 0), split_at * len, left.row(n, 0));
    std::copy_n(g.row(n, split_at), right.channels() * len, right.row(n, 0));
  }
  return {std::move(left), std::move(right)};
}

// Keeps the first `length` time samples of every row.
template <typename T>
Tensor3<T> crop_time(const Tensor3<T>& x, std::size_t length) {
  if (length > x.length()) {
    throw ShapeError("crop_time: cannot crop " + x.shape().str() + " to length " +
                     std::to_string(length));
  }
  Tensor3<T> out(x.batch(), x.channels(), length);
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t c = 0; c < x.channels(); ++c) std::copy_n(x.row(n, c), length, out.row(n, c));
  }
  return out;
}

// Adjoint of crop_time: zero-extends rows back to `length`.
template <typename T>
Tensor3<T> uncrop_time_grad(const Tensor3<T>& g, std::size_t length) {
  if (length < g.length()) {
    throw ShapeError("uncrop_time_grad: target length " + std::to_string(length) +
                     " shorter than " + g.shape().str());
  }
  Tensor3<T> out(g.batch(), g.channels(), length);
  for (std::size_t n = 0; n < g.batch(); ++n) {
    for (std::size_t c = 0; c < g.channels(); ++c) std::copy_n(g.row(n, c), g.length(), out.row(n, c));
  }
  return out;
}

// Integer class labels for a batch of series, (batch, time) row-major.
struct LabelMatrix {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> values;

  LabelMatrix() = default;
  LabelMatrix(std::size_t b, std::size_t len, int fill = 0)
      : batch(b), length(len), values(b * len, fill) {}

  int& operator()(std::size_t b, std::size_t t) { return values[b * length + t]; }
  int operator()(std::size_t b, std::size_t t) const { return values[b * length + t]; }
  bool operator==(const LabelMatrix&) const = default;
};

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

}  // namespace tunet
