#pragma once

// Reference implementations used only by the tests. They are written as
// plainly as possible and share no code with the library kernels.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "tunet/rng.hpp"
#include "tunet/tensor.hpp"

namespace oracle {

// out(b,o,t) = bias(o) + sum_i sum_k w(o,i,k) * xpad(b,i,t*stride+k), summed in
// exactly that order over the explicitly zero-padded input.
template <typename T>
tunet::Tensor3<T> conv1d(const tunet::Tensor3<T>& x, const std::vector<T>& w, const std::vector<T>& bias,
                         std::size_t out_ch, std::size_t kernel, std::size_t stride, std::size_t pad) {
  const std::size_t in_ch = x.channels();
  const std::size_t out_len = (x.length() + 2 * pad - kernel) / stride + 1;
  tunet::Tensor3<T> y(x.batch(), out_ch, out_len);
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      for (std::size_t t = 0; t < out_len; ++t) {
        T acc = bias.empty() ? T{0} : bias[o];
        for (std::size_t i = 0; i < in_ch; ++i) {
          for (std::size_t k = 0; k < kernel; ++k) {
            const std::size_t u = t * stride + k;
            const T xv = (u < pad || u - pad >= x.length()) ? T{0} : x(b, i, u - pad);
            acc += w[(o * in_ch + i) * kernel + k] * xv;
          }
        }
        y(b, o, t) = acc;
      }
    }
  }
  return y;
}

// Direct scatter form of the transposed convolution, w laid out in x out x kernel.
template <typename T>
tunet::Tensor3<T> deconv1d(const tunet::Tensor3<T>& x, const std::vector<T>& w, const std::vector<T>& bias,
                           std::size_t out_ch, std::size_t kernel, std::size_t stride) {
  const std::size_t in_ch = x.channels();
  const std::size_t out_len = (x.length() - 1) * stride + kernel;
  tunet::Tensor3<T> y(x.batch(), out_ch, out_len);
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      for (std::size_t t = 0; t < out_len; ++t) y(b, o, t) = bias.empty() ? T{0} : bias[o];
    }
    for (std::size_t i = 0; i < in_ch; ++i) {
      for (std::size_t s = 0; s < x.length(); ++s) {
        for (std::size_t o = 0; o < out_ch; ++o) {
          for (std::size_t k = 0; k < kernel; ++k) {
            y(b, o, s * stride + k) += w[(i * out_ch + o) * kernel + k] * x(b, i, s);
          }
        }
      }
    }
  }
  return y;
}

// Mean cross-entropy evaluated in long double with a max-shifted log-sum-exp.
template <typename T>
long double xent(const tunet::Tensor3<T>& logits, const std::vector<int>& labels) {
  long double total = 0.0L;
  for (std::size_t b = 0; b < logits.batch(); ++b) {
    for (std::size_t t = 0; t < logits.length(); ++t) {
      long double peak = logits(b, 0, t);
      for (std::size_t c = 1; c < logits.channels(); ++c) peak = std::max<long double>(peak, logits(b, c, t));
      long double sum = 0.0L;
      for (std::size_t c = 0; c < logits.channels(); ++c) sum += std::exp(static_cast<long double>(logits(b, c, t)) - peak);
      const int y = labels[b * logits.length() + t];
      total += peak + std::log(sum) - static_cast<long double>(logits(b, static_cast<std::size_t>(y), t));
    }
  }
  return total / static_cast<long double>(logits.batch() * logits.length());
}

// Straight-line Adam recurrences in long double for a single scalar.
struct AdamScalar {
  long double m = 0.0L;
  long double v = 0.0L;
  long double theta = 0.0L;
  int t = 0;

  void step(long double g, long double lr, long double b1 = 0.9L, long double b2 = 0.999L, long double eps = 1e-8L) {
    ++t;
    m = b1 * m + (1.0L - b1) * g;
    v = b2 * v + (1.0L - b2) * g * g;
    const long double mhat = m / (1.0L - std::pow(b1, static_cast<long double>(t)));
    const long double vhat = v / (1.0L - std::pow(b2, static_cast<long double>(t)));
    theta -= lr * mhat / (std::sqrt(vhat) + eps);
  }
};

// Central difference of f with respect to *p.
inline double central_difference(double* p, double h, const std::function<double()>& f) {
  const double saved = *p;
  *p = saved + h;
  const double plus = f();
  *p = saved - h;
  const double minus = f();
  *p = saved;
  return (plus - minus) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-3) {
  const double denom = std::max({std::fabs(a), std::fabs(b), floor});
  return std::fabs(a - b) / denom;
}

template <typename T>
tunet::Tensor3<T> random_tensor(tunet::Rng& rng, std::size_t b, std::size_t c, std::size_t l) {
  tunet::Tensor3<T> x(b, c, l);
  for (auto& v : x.storage()) v = static_cast<T>(rng.normal());
  return x;
}

template <typename T>
std::vector<T> random_vector(tunet::Rng& rng, std::size_t n) {
  std::vector<T> v(n);
  for (auto& e : v) e = static_cast<T>(rng.normal());
  return v;
}

template <typename T>
double inner(const tunet::Tensor3<T>& a, const tunet::Tensor3<T>& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a.storage()[i]) * b.storage()[i];
  return static_cast<double>(s);
}

// Parameter count of a TUnet built by walking the stage shapes by hand.
inline std::size_t tunet_param_count(std::size_t input_channels, std::size_t base, std::size_t depth,
                                     std::size_t kernel, std::size_t classes) {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k + out; };
  std::size_t total = 0;
  std::size_t ch = input_channels;
  for (std::size_t l = 0; l <= depth; ++l) {
    const std::size_t out = base << l;
    total += conv(ch, out, kernel) + conv(out, out, kernel);
    ch = out;
  }
  for (std::size_t l = depth; l-- > 0;) {
    const std::size_t out = base << l;
    total += conv(ch, out, 2) + conv(2 * out, out, kernel) + conv(out, out, kernel);
    ch = out;
  }
  return total + conv(ch, classes, 1);
}

}  // namespace oracle
