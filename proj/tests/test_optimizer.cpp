#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "oracles.hpp"
#include "tunet/dataset.hpp"
#include "tunet/errors.hpp"
#include "tunet/optimizer.hpp"
#include "tunet/rng.hpp"

namespace {

tunet::ParamStore<double> scalar_store(double value) {
  tunet::ParamStore<double> s;
  s.add("theta", {1}).values[0] = value;
  return s;
}

struct SmokeSetup {
  tunet::TUnetConfig model;
  tunet::DatasetSplit train;
};

// A small synthetic detection problem that trains in well under a second.
SmokeSetup smoke_setup() {
  tunet::SynthOptions o;
  o.num_train = 8;
  o.num_test = 0;
  o.length = 32;
  o.carriers = 6;
  o.seed = 3;
  auto data = tunet::synth_generate(o).data;
  SmokeSetup s;
  s.model.input_channels = 6;
  s.model.series_length = 32;
  s.model.depth = 2;
  s.model.base_channels = 4;
  s.model.seed = 1;
  s.train = tunet::with_detection_labels(tunet::normalize(data.train));
  return s;
}

}  // namespace

TEST_CASE("step decay schedule") {
  tunet::TrainConfig cfg;
  CHECK(tunet::lr_at_epoch(cfg, 0) == 0.005);
  CHECK(tunet::lr_at_epoch(cfg, 9) == 0.005);
  CHECK(tunet::lr_at_epoch(cfg, 10) == 0.0025);
  CHECK(tunet::lr_at_epoch(cfg, 25) == 0.00125);
}

TEST_CASE("property: schedule is non-increasing with breaks only at multiples of decay_every") {
  tunet::Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    tunet::TrainConfig cfg;
    cfg.lr_init = rng.uniform(1e-4, 1.0);
    cfg.lr_decay = rng.uniform(0.1, 1.0);
    cfg.decay_every = 1 + rng.below(12);
    for (std::size_t e = 1; e < 80; ++e) {
      const double prev = tunet::lr_at_epoch(cfg, e - 1);
      const double cur = tunet::lr_at_epoch(cfg, e);
      CHECK(cur <= prev);
      if (e % cfg.decay_every != 0) CHECK(cur == prev);
    }
  }
}

TEST_CASE("training defaults") {
  const tunet::TrainConfig cfg;
  CHECK(cfg.batch_size == 128);
  CHECK(cfg.epochs == 200);
  CHECK(cfg.lr_init == 0.005);
  CHECK(cfg.lr_decay == 0.5);
  CHECK(cfg.decay_every == 10);
  CHECK(cfg.max_grad_norm == 0.0);
  const auto state = tunet::AdamState<float>::for_params(tunet::ParamStore<float>{});
  CHECK(state.beta1 == 0.9);
  CHECK(state.beta2 == 0.999);
  CHECK(state.eps == 1e-8);
}

TEST_CASE("zero gradient leaves a fresh state's parameters unchanged") {
  auto params = scalar_store(1.25);
  auto state = tunet::AdamState<double>::for_params(params);
  tunet::adam_step(params, params.zeros_like(), state, 0.1);
  CHECK(params[0].values[0] == 1.25);
  CHECK(state.step == 1);
}

TEST_CASE("first step moves by about lr") {
  auto params = scalar_store(0.0);
  auto grads = scalar_store(1.0);
  auto state = tunet::AdamState<double>::for_params(params);
  tunet::adam_step(params, grads, state, 0.1);
  CHECK(params[0].values[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("two identical steps match the long-double recurrences") {
  auto params = scalar_store(0.3);
  auto grads = scalar_store(-0.7);
  auto state = tunet::AdamState<double>::for_params(params);
  oracle::AdamScalar ref;
  ref.theta = 0.3L;
  for (int i = 0; i < 2; ++i) {
    tunet::adam_step(params, grads, state, 0.01);
    ref.step(-0.7L, 0.01L);
  }
  CHECK(state.step == 2);
  CHECK(std::fabs(params[0].values[0] - static_cast<double>(ref.theta)) <= 1e-12);
  CHECK(std::fabs(state.m[0][0] - static_cast<double>(ref.m)) <= 1e-12);
  CHECK(std::fabs(state.v[0][0] - static_cast<double>(ref.v)) <= 1e-12);
}

TEST_CASE("non-finite gradients are rejected before any update") {
  tunet::ParamStore<float> params;
  params.add("a", {2});
  params.add("b.weight", {3});
  auto grads = params.zeros_like();
  grads[1].values[2] = std::numeric_limits<float>::quiet_NaN();
  auto state = tunet::AdamState<float>::for_params(params);
  const auto before = params;
  try {
    tunet::adam_step(params, grads, state, 0.1);
    FAIL("expected a divergence error");
  } catch (const tunet::DivergenceError& e) {
    CHECK(std::string(e.what()).find("b.weight") != std::string::npos);
  }
  CHECK(params == before);
  CHECK(state.step == 0);
}

TEST_CASE("property: a steady gradient moves each element by at most lr") {
  tunet::Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    tunet::ParamStore<double> params;
    params.add("w", {16});
    auto grads = params.zeros_like();
    for (auto& g : grads[0].values) g = rng.normal() * std::pow(10.0, rng.uniform(-4.0, 4.0));
    auto state = tunet::AdamState<double>::for_params(params);
    const double lr = rng.uniform(1e-4, 1e-1);
    for (int step = 0; step < 30; ++step) {
      const auto before = params[0].values;
      tunet::adam_step(params, grads, state, lr);
      for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(std::fabs(params[0].values[i] - before[i]) <= lr * (1.0 + 1e-9));
      }
    }
  }
}

TEST_CASE("property: any gradient sequence keeps v non-negative and the step bounded") {
  // Cauchy-Schwarz on the moment sums gives |m_hat| / sqrt(v_hat) <=
  // (1 - b1) / sqrt((1 - b2) (1 - b1^2 / b2)) ~= 7.27 for the defaults.
  const double bound = 0.1 / std::sqrt(0.001 * (1.0 - 0.81 / 0.999));
  tunet::Rng rng(7);
  tunet::ParamStore<double> params;
  params.add("w", {64});
  auto state = tunet::AdamState<double>::for_params(params);
  for (int step = 0; step < 50; ++step) {
    auto grads = params.zeros_like();
    for (auto& g : grads[0].values) g = rng.normal() * std::pow(10.0, rng.uniform(-3.0, 3.0));
    const auto before = params[0].values;
    const double lr = rng.uniform(1e-4, 1e-1);
    tunet::adam_step(params, grads, state, lr);
    CHECK(state.step == static_cast<std::size_t>(step + 1));
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(std::fabs(params[0].values[i] - before[i]) <= lr * bound * (1.0 + 1e-9));
      CHECK(state.v[0][i] >= 0.0);
    }
  }
}

TEST_CASE("gradient clipping scales to the requested norm") {
  tunet::ParamStore<double> g;
  g.add("a", {2}).values = {3.0, 0.0};
  g.add("b", {1}).values = {4.0};
  CHECK(tunet::clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0].values[0] == doctest::Approx(0.6));
  CHECK(g[1].values[0] == doctest::Approx(0.8));
  CHECK(tunet::clip_grad_norm(g, 10.0) == doctest::Approx(1.0));
  CHECK(g[1].values[0] == doctest::Approx(0.8));
}

TEST_CASE("epoch report line format") {
  CHECK(tunet::epoch_log_header() == "epoch,lr,mean_loss,train_accuracy");
  CHECK(tunet::format_epoch_report({3, 0.0025, 0.5, 0.75}) == "3,0.0025,0.5,0.75");
}

TEST_CASE("training epochs replay bit-for-bit at 64-bit") {
  const auto s = smoke_setup();
  tunet::TrainConfig cfg;
  cfg.batch_size = 3;
  cfg.epochs = 2;
  cfg.seed = 4;
  auto a = tunet::build<double>(s.model);
  auto b = tunet::build<double>(s.model);
  std::ostringstream log_a;
  std::ostringstream log_b;
  const auto ra = tunet::fit(a, s.train, s.model, cfg, &log_a);
  const auto rb = tunet::fit(b, s.train, s.model, cfg, &log_b);
  CHECK(ra == rb);
  CHECK(a == b);
  CHECK(log_a.str() == log_b.str());
}

TEST_CASE("zero learning rate leaves parameters unchanged and reports the evaluation loss") {
  const auto s = smoke_setup();
  tunet::TrainConfig cfg;
  cfg.batch_size = 3;
  cfg.lr_init = 0.0;
  auto params = tunet::build<double>(s.model);
  const auto before = params;
  auto state = tunet::AdamState<double>::for_params(params);
  const auto report = tunet::train_epoch(params, state, s.train, s.model, cfg, 0);
  CHECK(params == before);
  const auto eval = tunet::evaluate_split(params, s.model, s.train, 3);
  CHECK(report.mean_loss == doctest::Approx(eval.mean_loss).epsilon(1e-12));
  CHECK(report.accuracy == eval.pooled_accuracy);
}

TEST_CASE("mean loss strictly decreases over the first five epochs on a synthetic set") {
  const auto s = smoke_setup();
  tunet::TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 5;
  cfg.lr_init = 0.001;
  cfg.seed = 2;
  auto params = tunet::build<double>(s.model);
  const auto reports = tunet::fit(params, s.train, s.model, cfg);
  REQUIRE(reports.size() == 5);
  for (std::size_t e = 1; e < reports.size(); ++e) CHECK(reports[e].mean_loss < reports[e - 1].mean_loss);
}

TEST_CASE("a non-finite input surfaces as divergence with epoch and batch context") {
  auto s = smoke_setup();
  s.train.series[5].values[7] = std::numeric_limits<double>::infinity();
  tunet::TrainConfig cfg;
  cfg.batch_size = 2;
  auto params = tunet::build<float>(s.model);
  auto state = tunet::AdamState<float>::for_params(params);
  try {
    tunet::train_epoch(params, state, s.train, s.model, cfg, 4);
    FAIL("expected a divergence error");
  } catch (const tunet::DivergenceError& e) {
    const std::string what = e.what();
    CHECK(what.find("epoch 4") != std::string::npos);
    CHECK(what.find("batch") != std::string::npos);
  }
}
