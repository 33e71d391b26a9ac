#include "tunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>

#include "tunet/layers.hpp"
#include "tunet/model.hpp"
#include "tunet/rng.hpp"

namespace tunet {
namespace {

using Tensor = Tensor3<double>;

void fill_normal(std::span<double> values, Rng& rng) {
  for (auto& v : values) v = rng.normal();
}

double inner(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

class Checker {
 public:
  Checker(LayerCheck& check, const GradcheckOptions& options) : check_(check), options_(options) {}

  // Compares analytic[i] against the central difference of `objective` in
  // the coordinate values[i]. `differentiable` may veto a coordinate.
  void compare(std::span<double> values, std::span<const double> analytic, const std::function<double()>& objective,
               const std::function<bool()>& differentiable = {}) {
    const double h = options_.step;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = objective();
      const bool up_ok = !differentiable || differentiable();
      values[i] = saved - h;
      const double down = objective();
      const bool down_ok = !differentiable || differentiable();
      values[i] = saved;
      if (!up_ok || !down_ok) {
        ++check_.skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options_.denominator_floor});
      const double err = std::abs(analytic[i] - numeric) / denom;
      check_.worst_rel_err = std::max(check_.worst_rel_err, err);
      ++check_.checked;
      if (!(err <= options_.tolerance)) check_.passed = false;
    }
  }

 private:
  LayerCheck& check_;
  const GradcheckOptions& options_;
};

void check_conv(LayerCheck& check, const GradcheckOptions& options, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 11));
  const std::size_t batch = 1 + rng.below(2);
  const std::size_t in_ch = 1 + rng.below(4);
  const std::size_t out_ch = 1 + rng.below(4);
  const std::size_t kernel = 1 + rng.below(3);
  const std::size_t stride = 1 + rng.below(2);
  const std::size_t out_len = 2 + rng.below(5);
  std::size_t pad = rng.below(2);
  if ((out_len - 1) * stride + kernel <= 2 * pad) pad = 0;
  const std::size_t in_len = (out_len - 1) * stride + kernel - 2 * pad;

  Tensor x(batch, in_ch, in_len);
  std::vector<double> w(out_ch * in_ch * kernel), b(out_ch);
  fill_normal(x.data(), rng);
  fill_normal(w, rng);
  fill_normal(b, rng);
  auto params = [&] { return Conv1dParams<double>{w, b, out_ch, in_ch, kernel, stride, pad}; };
  Tensor r(batch, out_ch, out_len);
  fill_normal(r.data(), rng);

  auto [y, cache] = conv1d_forward(x, params());
  auto grads = conv1d_backward(r, cache, params());
  if (options.fault == GradcheckFault::conv_backward) {
    for (auto& g : grads.grad_w) g *= 1.01;
  }
  auto objective = [&] { return inner(conv1d_forward(x, params()).first.data(), r.data()); };
  Checker c(check, options);
  c.compare(x.data(), grads.grad_x.data(), objective);
  c.compare(w, grads.grad_w, objective);
  c.compare(b, grads.grad_b, objective);
}

void check_deconv(LayerCheck& check, const GradcheckOptions& options, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 12));
  const std::size_t batch = 1 + rng.below(2);
  const std::size_t in_ch = 1 + rng.below(4);
  const std::size_t out_ch = 1 + rng.below(4);
  const std::size_t kernel = 1 + rng.below(3);
  const std::size_t stride = 1 + rng.below(2);
  const std::size_t in_len = 1 + rng.below(7);

  Tensor x(batch, in_ch, in_len);
  std::vector<double> w(in_ch * out_ch * kernel), b(out_ch);
  fill_normal(x.data(), rng);
  fill_normal(w, rng);
  fill_normal(b, rng);
  auto params = [&] { return Deconv1dParams<double>{w, b, in_ch, out_ch, kernel, stride}; };
  Tensor r(batch, out_ch, params().output_length(in_len));
  fill_normal(r.data(), rng);

  auto [y, cache] = deconv1d_forward(x, params());
  auto grads = deconv1d_backward(r, cache, params());
  auto objective = [&] { return inner(deconv1d_forward(x, params()).first.data(), r.data()); };
  Checker c(check, options);
  c.compare(x.data(), grads.grad_x.data(), objective);
  c.compare(w, grads.grad_w, objective);
  c.compare(b, grads.grad_b, objective);
}

void check_maxpool(LayerCheck& check, const GradcheckOptions& options, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 13));
  const std::size_t batch = 1 + rng.below(2);
  const std::size_t channels = 1 + rng.below(4);
  const std::size_t out_len = 1 + rng.below(8);
  const std::size_t in_len = 2 * out_len;

  // Distinct values at least 0.1 apart, so a step of 1e-5 never swaps winners.
  Tensor x(batch, channels, in_len);
  std::vector<std::size_t> rank(x.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(rank));
  for (std::size_t i = 0; i < rank.size(); ++i) x.data()[i] = 0.1 * static_cast<double>(rank[i]) + 0.01 * rng.uniform();
  Tensor r(batch, channels, out_len);
  fill_normal(r.data(), rng);

  auto [y, cache] = maxpool1d_forward(x, 2, 2);
  const Tensor grad_x = maxpool1d_backward(r, cache, in_len);
  auto objective = [&] { return inner(maxpool1d_forward(x, 2, 2).first.data(), r.data()); };
  auto same_winners = [&] { return maxpool1d_forward(x, 2, 2).second.argmax_index == cache.argmax_index; };
  Checker c(check, options);
  c.compare(x.data(), grad_x.data(), objective, same_winners);
}

void check_relu(LayerCheck& check, const GradcheckOptions& options, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 14));
  Tensor x(1 + rng.below(2), 1 + rng.below(4), 1 + rng.below(16));
  for (auto& v : x.data()) {
    const double mag = rng.uniform(0.05, 2.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  Tensor r(x.shape());
  fill_normal(r.data(), rng);
  auto [y, cache] = relu_forward(x);
  const Tensor grad_x = relu_backward(r, cache);
  auto objective = [&] { return inner(relu_forward(x).first.data(), r.data()); };
  Checker c(check, options);
  c.compare(x.data(), grad_x.data(), objective);
}

void check_xent(LayerCheck& check, const GradcheckOptions& options, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 15));
  Tensor logits(1 + rng.below(2), 2 + rng.below(3), 1 + rng.below(16));
  fill_normal(logits.data(), rng);
  LabelMatrix labels(logits.batch(), logits.length());
  for (auto& y : labels.values) y = static_cast<int>(rng.below(logits.channels()));
  const auto fwd = softmax_xent_forward(logits, labels);
  const Tensor grad = softmax_xent_backward(fwd.probs, labels);
  auto objective = [&] { return softmax_xent_forward(logits, labels).loss; };
  Checker c(check, options);
  c.compare(logits.data(), grad.data(), objective);
}

void check_model(LayerCheck& check, const GradcheckOptions& options, std::uint64_t seed, std::size_t kernel) {
  TUnetConfig cfg;
  cfg.input_channels = 2;
  cfg.series_length = 8;
  cfg.depth = 1;
  cfg.base_channels = 4;
  cfg.num_classes = 2;
  cfg.conv_kernel = kernel;
  cfg.seed = mix_seed(seed, 16);
  auto params = build<double>(cfg);
  Rng rng(mix_seed(seed, 17));
  for (auto& p : params.entries()) {
    if (p.name.ends_with(".bias")) {
      for (auto& v : p.values) v = 0.1 * rng.normal();
    }
  }
  Tensor x(1, cfg.input_channels, cfg.series_length);
  fill_normal(x.data(), rng);
  LabelMatrix labels(1, cfg.series_length);
  for (auto& y : labels.values) y = static_cast<int>(rng.below(2));

  const auto base = forward(params, x, cfg);
  const auto xent = softmax_xent_forward(base.logits, labels);
  const auto grads = backward(params, base.cache, softmax_xent_backward(xent.probs, labels), cfg);

  ForwardCache<double> probe;
  auto objective = [&] {
    auto fwd = forward(params, x, cfg);
    probe = std::move(fwd.cache);
    return softmax_xent_forward(fwd.logits, labels).loss;
  };
  auto unchanged = [&] { return same_activation_pattern(base.cache, probe); };

  Checker c(check, options);
  for (std::size_t i = 0; i < params.size(); ++i) c.compare(params[i].values, grads[i].values, objective, unchanged);
}

}  // namespace

bool GradcheckReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const LayerCheck& c) { return c.passed && c.checked > 0; });
}

double GradcheckReport::worst_rel_err() const {
  double worst = 0.0;
  for (const auto& c : checks) worst = std::max(worst, c.worst_rel_err);
  return worst;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  GradcheckReport report;
  report.tolerance = options.tolerance;
  report.checks = {{"conv1d"}, {"deconv1d"}, {"maxpool1d"}, {"relu"}, {"softmax_xent"}, {"tunet"}, {"tunet_k2"}};
  for (const auto seed : options.seeds) {
    check_conv(report.checks[0], options, seed);
    check_deconv(report.checks[1], options, seed);
    check_maxpool(report.checks[2], options, seed);
    check_relu(report.checks[3], options, seed);
    check_xent(report.checks[4], options, seed);
    check_model(report.checks[5], options, seed, 3);
    check_model(report.checks[6], options, seed, 2);
  }
  return report;
}

void write_gradcheck_report(std::ostream& out, const GradcheckReport& report) {
  char buf[160];
  for (const auto& c : report.checks) {
    std::snprintf(buf, sizeof(buf), "%-13s %s  worst_rel_err=%.3e  checked=%zu  skipped=%zu\n", c.layer.c_str(),
                  c.passed && c.checked > 0 ? "PASS" : "FAIL", c.worst_rel_err, c.checked, c.skipped);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "gradcheck %s (tolerance %.1e)\n", report.passed() ? "PASSED" : "FAILED",
                report.tolerance);
  out << buf;
}

}  // namespace tunet
