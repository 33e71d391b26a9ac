#include <doctest.h>

#include "oracles.hpp"
#include "tunet/errors.hpp"
#include "tunet/rng.hpp"
#include "tunet/tensor.hpp"

using tunet::Tensor3;

TEST_CASE("concat doubles the channel axis of equal halves") {
  Tensor3<float> a(1, 128, 96, 1.0f);
  Tensor3<float> b(1, 128, 96, 2.0f);
  const auto c = tunet::concat_channels(a, b);
  CHECK(c.shape() == tunet::Shape3{1, 256, 96});
}

TEST_CASE("concat of zeros and ones keeps the first operand low") {
  Tensor3<double> zeros(1, 1, 4, 0.0);
  Tensor3<double> ones(1, 1, 4, 1.0);
  const auto c = tunet::concat_channels(zeros, ones);
  REQUIRE(c.shape() == tunet::Shape3{1, 2, 4});
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(c(0, 0, t) == 0.0);
    CHECK(c(0, 1, t) == 1.0);
  }
  const auto [left, right] = tunet::split_channels(c, 1);
  CHECK(left == zeros);
  CHECK(right == ones);
}

TEST_CASE("concat matches an exhaustive index sweep") {
  tunet::Rng rng(3);
  const auto a = oracle::random_tensor<double>(rng, 2, 3, 5);
  const auto b = oracle::random_tensor<double>(rng, 2, 4, 5);
  const auto c = tunet::concat_channels(a, b);
  REQUIRE(c.shape() == tunet::Shape3{2, 7, 5});
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t ch = 0; ch < 7; ++ch) {
      for (std::size_t t = 0; t < 5; ++t) CHECK(c(n, ch, t) == (ch < 3 ? a(n, ch, t) : b(n, ch - 3, t)));
    }
  }
}

TEST_CASE("concat rejects mismatched batch or length") {
  Tensor3<float> a(1, 2, 4);
  CHECK_THROWS_AS(tunet::concat_channels(a, Tensor3<float>(2, 2, 4)), tunet::ShapeError);
  CHECK_THROWS_AS(tunet::concat_channels(a, Tensor3<float>(1, 2, 5)), tunet::ShapeError);
}

TEST_CASE("split at 3 of a 7-channel tensor") {
  Tensor3<float> g(1, 7, 5);
  const auto [l, r] = tunet::split_channels(g, 3);
  CHECK(l.shape() == tunet::Shape3{1, 3, 5});
  CHECK(r.shape() == tunet::Shape3{1, 4, 5});
  CHECK_THROWS_AS(tunet::split_channels(g, 0), tunet::ShapeError);
  CHECK_THROWS_AS(tunet::split_channels(g, 7), tunet::ShapeError);
}

TEST_CASE("property: split after concat is the identity") {
  tunet::Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t batch = 1 + rng.below(3);
    const std::size_t len = 1 + rng.below(9);
    const auto a = oracle::random_tensor<float>(rng, batch, 1 + rng.below(5), len);
    const auto b = oracle::random_tensor<float>(rng, batch, 1 + rng.below(5), len);
    const auto [l, r] = tunet::split_channels(tunet::concat_channels(a, b), a.channels());
    CHECK(l == a);
    CHECK(r == b);
    const auto joined = tunet::concat_channels(l, r);
    const auto [l2, r2] = tunet::split_channels(joined, a.channels());
    CHECK(tunet::concat_channels(l2, r2) == joined);
  }
}

TEST_CASE("flat offset follows (b * C + c) * L + t") {
  Tensor3<double> x(3, 4, 5);
  double counter = 0.0;
  for (auto& v : x.storage()) v = counter++;
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t t = 0; t < 5; ++t) {
        CHECK(x.offset(b, c, t) == (b * 4 + c) * 5 + t);
        CHECK(x(b, c, t) == static_cast<double>((b * 4 + c) * 5 + t));
      }
    }
  }
  CHECK(x.size() == 60);
}

TEST_CASE("crop and uncrop are adjoint") {
  tunet::Rng rng(5);
  const auto x = oracle::random_tensor<double>(rng, 2, 3, 9);
  const auto g = oracle::random_tensor<double>(rng, 2, 3, 8);
  const auto cropped = tunet::crop_time(x, 8);
  const auto padded = tunet::uncrop_time_grad(g, 9);
  CHECK(oracle::inner(cropped, g) == doctest::Approx(oracle::inner(x, padded)).epsilon(1e-14));
  for (std::size_t c = 0; c < 3; ++c) CHECK(padded(1, c, 8) == 0.0);
}
