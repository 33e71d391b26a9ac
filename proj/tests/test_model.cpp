#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tunet/errors.hpp"
#include "tunet/layers.hpp"
#include "tunet/model.hpp"
#include "tunet/rng.hpp"

using tunet::Tensor3;
using tunet::TUnetConfig;

namespace {

// Frozen from the shape-walk oracle for the default 52-carrier, depth-3,
// base-64, kernel-3 network.
constexpr std::size_t kDefaultDetectParams = 2692162;
constexpr std::size_t kDefaultClassifyParams = 2692487;

TUnetConfig tiny_config(std::size_t kernel = 3) {
  TUnetConfig c;
  c.input_channels = 2;
  c.series_length = 8;
  c.num_classes = 2;
  c.depth = 1;
  c.base_channels = 4;
  c.conv_kernel = kernel;
  c.seed = 9;
  return c;
}

}  // namespace

TEST_CASE("default config walks the documented channel progression") {
  const auto plan = tunet::layer_plan(TUnetConfig{});
  REQUIRE(plan.size() == 3 * 2 + 2 + 3 * 3 + 1);
  CHECK(plan[0].name == "down0.conv0");
  CHECK(plan[0].weight_shape() == std::vector<std::size_t>{64, 52, 3});
  CHECK(plan[1].weight_shape() == std::vector<std::size_t>{64, 64, 3});
  CHECK(plan[2].weight_shape() == std::vector<std::size_t>{128, 64, 3});
  CHECK(plan[4].weight_shape() == std::vector<std::size_t>{256, 128, 3});
  CHECK(plan[6].name == "bottleneck.conv0");
  CHECK(plan[6].weight_shape() == std::vector<std::size_t>{512, 256, 3});
  CHECK(plan[8].name == "up2.deconv");
  CHECK(plan[8].weight_shape() == std::vector<std::size_t>{512, 256, 2});
  CHECK(plan[8].stride == 2);
  CHECK(plan[9].weight_shape() == std::vector<std::size_t>{256, 512, 3});
  CHECK(plan.back().name == "head");
  CHECK(plan.back().weight_shape() == std::vector<std::size_t>{2, 64, 1});
  CHECK_FALSE(plan.back().relu);
  CHECK_FALSE(plan[8].relu);
}

TEST_CASE("parameter count matches the shape-walk oracle") {
  TUnetConfig detect;
  TUnetConfig classify;
  classify.num_classes = 7;
  CHECK(oracle::tunet_param_count(52, 64, 3, 3, 2) == kDefaultDetectParams);
  CHECK(oracle::tunet_param_count(52, 64, 3, 3, 7) == kDefaultClassifyParams);
  CHECK(tunet::build<float>(detect).total_values() == kDefaultDetectParams);
  CHECK(tunet::build<float>(classify).total_values() == kDefaultClassifyParams);

  tunet::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    TUnetConfig c;
    c.input_channels = 1 + rng.below(6);
    c.depth = 1 + rng.below(3);
    c.base_channels = 1 + rng.below(5);
    c.conv_kernel = 1 + rng.below(4);
    c.num_classes = 2 + rng.below(4);
    c.series_length = (std::size_t{1} << c.depth) * (1 + rng.below(3));
    CHECK(tunet::build<double>(c).total_values() ==
          oracle::tunet_param_count(c.input_channels, c.base_channels, c.depth, c.conv_kernel, c.num_classes));
  }
}

TEST_CASE("build is deterministic in the seed") {
  TUnetConfig c = tiny_config();
  CHECK(tunet::build<double>(c) == tunet::build<double>(c));
  TUnetConfig other = c;
  other.seed = c.seed + 1;
  CHECK_FALSE(tunet::build<double>(c) == tunet::build<double>(other));
}

TEST_CASE("initial weights have variance 2 / fan_in and zero biases") {
  const auto params = tunet::build<double>(TUnetConfig{});
  const auto& w = params.at("bottleneck.conv1.weight").values;
  double sum = 0.0;
  double sq = 0.0;
  for (const double v : w) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(w.size());
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 1e-3);
  CHECK(var == doctest::Approx(2.0 / (512.0 * 3.0)).epsilon(0.02));
  for (const auto& p : params.entries()) {
    if (p.name.ends_with(".bias")) {
      for (const double v : p.values) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("invalid configs are rejected") {
  TUnetConfig c;
  c.series_length = 190;
  CHECK_THROWS_AS(tunet::build<float>(c), tunet::ConfigError);
  c = TUnetConfig{};
  c.num_classes = 1;
  CHECK_THROWS_AS(tunet::build<float>(c), tunet::ConfigError);
}

TEST_CASE("a 52 x 192 input yields one score vector per sample") {
  TUnetConfig detect;
  TUnetConfig classify;
  classify.num_classes = 7;
  tunet::Rng rng(8);
  const auto x = oracle::random_tensor<float>(rng, 1, 52, 192);
  CHECK(tunet::forward(tunet::build<float>(detect), x, detect).logits.shape() == tunet::Shape3{1, 2, 192});
  CHECK(tunet::forward(tunet::build<float>(classify), x, classify).logits.shape() == tunet::Shape3{1, 7, 192});
}

TEST_CASE("property: forward preserves length for any valid config") {
  tunet::Rng rng(10);
  for (int trial = 0; trial < 25; ++trial) {
    TUnetConfig c;
    c.input_channels = 1 + rng.below(4);
    c.depth = 1 + rng.below(3);
    c.base_channels = 1 + rng.below(4);
    c.conv_kernel = 1 + rng.below(5);
    c.num_classes = 2 + rng.below(3);
    c.series_length = (std::size_t{1} << c.depth) * (1 + rng.below(4));
    c.seed = trial;
    const auto x = oracle::random_tensor<double>(rng, 1 + rng.below(2), c.input_channels, c.series_length);
    const auto out = tunet::forward(tunet::build<double>(c), x, c).logits;
    CHECK(out.shape() == tunet::Shape3{x.batch(), c.num_classes, c.series_length});
  }
}

TEST_CASE("forward rejects inputs that do not match the config") {
  const TUnetConfig c = tiny_config();
  const auto params = tunet::build<double>(c);
  CHECK_THROWS_AS(tunet::forward(params, Tensor3<double>(1, 3, 8), c), tunet::ShapeError);
  CHECK_THROWS_AS(tunet::forward(params, Tensor3<double>(1, 2, 16), c), tunet::ShapeError);
}

TEST_CASE("zero head gives zero logits") {
  const TUnetConfig c = tiny_config();
  auto params = tunet::build<double>(c);
  for (auto& v : params.at("head.weight").values) v = 0.0;
  tunet::Rng rng(12);
  const auto out = tunet::forward(params, oracle::random_tensor<double>(rng, 2, 2, 8), c).logits;
  for (const double v : out.storage()) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic") {
  const TUnetConfig c = tiny_config();
  const auto params = tunet::build<float>(c);
  tunet::Rng rng(13);
  const auto x = oracle::random_tensor<float>(rng, 2, 2, 8);
  CHECK(tunet::forward(params, x, c).logits == tunet::forward(params, x, c).logits);
}

TEST_CASE("backward is linear in grad_logits") {
  const TUnetConfig c = tiny_config();
  const auto params = tunet::build<double>(c);
  tunet::Rng rng(14);
  const auto x = oracle::random_tensor<double>(rng, 2, 2, 8);
  const auto fwd = tunet::forward(params, x, c);
  const auto zero = tunet::backward(params, fwd.cache, Tensor3<double>(fwd.logits.shape()), c);
  CHECK(zero == params.zeros_like());

  auto g = oracle::random_tensor<double>(rng, 2, 2, 8);
  const auto once = tunet::backward(params, fwd.cache, g, c);
  for (auto& v : g.storage()) v *= 2.0;
  const auto twice = tunet::backward(params, fwd.cache, g, c);
  REQUIRE(once.size() == twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(once[i].name == params[i].name);
    CHECK(once[i].shape == params[i].shape);
    for (std::size_t j = 0; j < once[i].values.size(); ++j) CHECK(twice[i].values[j] == 2.0 * once[i].values[j]);
  }
}

TEST_CASE("end-to-end loss gradient matches central differences") {
  for (const std::size_t kernel : {std::size_t{3}, std::size_t{2}}) {
    CAPTURE(kernel);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      TUnetConfig c = tiny_config(kernel);
      c.seed = seed;
      auto params = tunet::build<double>(c);
      tunet::Rng rng(100 + seed);
      const auto x = oracle::random_tensor<double>(rng, 1, 2, 8);
      tunet::LabelMatrix labels(1, 8);
      for (auto& y : labels.values) y = static_cast<int>(rng.below(2));

      const auto fwd = tunet::forward(params, x, c);
      const auto xent = tunet::softmax_xent_forward(fwd.logits, labels);
      const auto grads = tunet::backward(params, fwd.cache, tunet::softmax_xent_backward(xent.probs, labels), c);

      std::size_t checked = 0;
      for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < params[i].values.size(); ++j) {
          double& p = params[i].values[j];
          const double saved = p;
          p = saved + 1e-5;
          const auto plus = tunet::forward(params, x, c);
          p = saved - 1e-5;
          const auto minus = tunet::forward(params, x, c);
          p = saved;
          if (!tunet::same_activation_pattern(plus.cache, fwd.cache) ||
              !tunet::same_activation_pattern(minus.cache, fwd.cache)) {
            continue;
          }
          const double numeric = (tunet::softmax_xent_forward(plus.logits, labels).loss -
                                  tunet::softmax_xent_forward(minus.logits, labels).loss) /
                                 2e-5;
          CHECK(oracle::rel_err(grads[i].values[j], numeric) <= 1e-5);
          ++checked;
        }
      }
      CHECK(checked > params.total_values() / 2);
    }
  }
}

TEST_CASE("argmax labels") {
  Tensor3<double> scores(1, 2, 3);
  scores(0, 0, 0) = 3.0;
  scores(0, 1, 0) = 1.0;
  scores(0, 0, 1) = 0.0;
  scores(0, 1, 1) = 2.0;
  scores(0, 0, 2) = 1.0;
  scores(0, 1, 2) = 1.0;
  const auto labels = tunet::argmax_labels(scores);
  CHECK(labels.values == std::vector<int>{0, 1, 0});
}

TEST_CASE("predict returns normalized confidences whose argmax is the label") {
  TUnetConfig c = tiny_config();
  c.num_classes = 4;
  const auto params = tunet::build<float>(c);
  tunet::Rng rng(15);
  const auto x = oracle::random_tensor<float>(rng, 3, 2, 8);
  const auto pred = tunet::predict(params, x, c);
  CHECK(pred.confidences.shape() == tunet::Shape3{3, 4, 8});
  CHECK(pred.labels == tunet::argmax_labels(pred.confidences));
  CHECK(pred.labels == tunet::argmax_labels(tunet::forward(params, x, c).logits));
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t t = 0; t < 8; ++t) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += pred.confidences(n, k, t);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("property: labels ignore a per-sample constant shift of the logits") {
  tunet::Rng rng(16);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t classes = 2 + rng.below(6);
    auto logits = oracle::random_tensor<double>(rng, 2, classes, 6);
    const auto probs = tunet::softmax_channels(logits);
    const auto before = tunet::argmax_labels(probs);
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t t = 0; t < 6; ++t) {
        const double shift = std::ldexp(static_cast<double>(rng.below(64)) - 32.0, -2);
        for (std::size_t k = 0; k < classes; ++k) logits(n, k, t) += shift;
      }
    }
    CHECK(tunet::argmax_labels(tunet::softmax_channels(logits)) == before);
  }
}
