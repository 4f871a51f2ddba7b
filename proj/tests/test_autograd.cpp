#include <random>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "wavec2r/autograd.hpp"
#include "wavec2r/errors.hpp"
#include "wavec2r/nn.hpp"

using namespace wavec2r;
using wavec2r::testing::gradcheck;

namespace {

ag::Var rand_param(Shape s, std::mt19937_64& rng) { return ag::parameter(Tensor::randn(std::move(s), rng)); }

// Weighted sum so every output element gets a distinct upstream gradient.
ag::Var probe_sum(const ag::Var& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ag::sum(ag::mul(y, ag::constant(Tensor::randn(y.shape(), rng))));
}

constexpr double kTol = 1e-6;

}  // namespace

TEST_CASE("elementwise ops") {
  std::mt19937_64 rng(1);
  auto a = rand_param({2, 3}, rng), b = rand_param({2, 3}, rng);
  CHECK(gradcheck([&] { return probe_sum(ag::mul(ag::sub(a, b), ag::add(a, ag::scale(b, 0.5)))); }, {a, b})
            .relative_error < kTol);
  CHECK(gradcheck([&] { return probe_sum(ag::gelu(ag::add_scalar(a, 0.1))); }, {a}).relative_error < kTol);
  CHECK(gradcheck([&] { return ag::mse(a, b); }, {a, b}).relative_error < kTol);
  CHECK(gradcheck([&] { return ag::mean(a); }, {a}).relative_error < kTol);
}

TEST_CASE("conv2d matches a direct loop and has correct gradients") {
  std::mt19937_64 rng(2);
  auto x = rand_param({2, 4, 6, 5}, rng);
  auto w = rand_param({6, 2, 3, 3}, rng);
  auto b = rand_param({6}, rng);
  const ag::Conv2dOptions opts{.stride = 2, .padding = 1, .groups = 2};
  const auto y = ag::conv2d(x, w, b, opts);
  CHECK(y.shape() == Shape{2, 6, 3, 3});

  // Direct evaluation of one output element.
  const int n = 1, oc = 4, oy = 1, ox = 2;
  const int grp = oc / 3;
  double expect = b.value()[oc];
  for (int ic = 0; ic < 2; ++ic)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
        if (iy < 0 || iy >= 6 || ix < 0 || ix >= 5) continue;
        expect += w.value().at(oc, ic, ky, kx) * x.value().at(n, grp * 2 + ic, iy, ix);
      }
  CHECK(y.value().at(n, oc, oy, ox) == doctest::Approx(expect).epsilon(1e-12));

  CHECK(gradcheck([&] { return probe_sum(ag::conv2d(x, w, b, opts)); }, {x, w, b}).relative_error < kTol);

  auto dw = rand_param({4, 1, 3, 3}, rng);
  const ag::Conv2dOptions depthwise{.stride = 1, .padding = 1, .groups = 4};
  CHECK(gradcheck([&] { return probe_sum(ag::conv2d(x, dw, ag::Var(), depthwise)); }, {x, dw})
            .relative_error < kTol);
}

TEST_CASE("group norm, embedding, linear") {
  std::mt19937_64 rng(3);
  auto x = rand_param({2, 4, 3, 3}, rng);
  auto gamma = rand_param({4}, rng), beta = rand_param({4}, rng);
  CHECK(gradcheck([&] { return probe_sum(ag::group_norm(x, gamma, beta, 2)); }, {x, gamma, beta})
            .relative_error < 1e-5);

  auto e = rand_param({2, 4}, rng);
  CHECK(gradcheck([&] { return probe_sum(ag::add_channel_embedding(x, e)); }, {x, e}).relative_error < kTol);

  auto t = rand_param({3, 2, 5}, rng);
  auto w = rand_param({5, 4}, rng), bias = rand_param({4}, rng);
  CHECK(gradcheck([&] { return probe_sum(ag::linear(t, w, bias)); }, {t, w, bias}).relative_error < kTol);
}

TEST_CASE("shape plumbing ops are exact permutations") {
  std::mt19937_64 rng(4);
  auto a = rand_param({2, 2, 4, 4}, rng), b = rand_param({2, 3, 4, 4}, rng);
  const ag::Var parts[] = {a, b};
  const auto cat = ag::concat_channels(parts);
  CHECK(cat.shape() == Shape{2, 5, 4, 4});
  CHECK(cat.value().at(1, 3, 2, 1) == b.value().at(1, 1, 2, 1));
  CHECK(gradcheck([&] { return probe_sum(ag::slice_channels(ag::concat_channels(parts), 1, 3)); }, {a, b})
            .relative_error < kTol);
  CHECK(gradcheck([&] { return probe_sum(ag::upsample_nearest2x(a)); }, {a}).relative_error < kTol);

  const auto tokens = ag::window_partition(b, 2, 2);
  CHECK(tokens.shape() == Shape{8, 4, 3});
  const auto merged = ag::window_merge(tokens, b.shape(), 2, 2);
  for (std::size_t i = 0; i < merged.value().size(); ++i) CHECK(merged.value()[i] == b.value()[i]);
  CHECK(gradcheck([&] { return probe_sum(ag::window_partition(b, 2, 4)); }, {b}).relative_error < kTol);
  CHECK_THROWS_AS(ag::window_partition(b, 3, 3), ValidationError);
}

TEST_CASE("dwt2/idwt2 ops invert each other and differentiate") {
  std::mt19937_64 rng(5);
  auto x = rand_param({2, 3, 4, 6}, rng);
  const auto bands = ag::dwt2(x);
  CHECK(bands.shape() == Shape{2, 12, 2, 3});
  const auto back = ag::idwt2(bands);
  for (std::size_t i = 0; i < x.value().size(); ++i)
    CHECK(back.value()[i] == doctest::Approx(x.value()[i]).epsilon(1e-12));
  CHECK(gradcheck([&] { return probe_sum(ag::dwt2(x)); }, {x}).relative_error < kTol);
  auto packed = rand_param({1, 8, 2, 3}, rng);
  CHECK(gradcheck([&] { return probe_sum(ag::idwt2(packed)); }, {packed}).relative_error < kTol);
  CHECK_THROWS_AS(ag::dwt2(ag::constant(Tensor({1, 1, 3, 4}))), ValidationError);
}

TEST_CASE("attention rows are stochastic and gradients match") {
  std::mt19937_64 rng(6);
  auto q = rand_param({2, 5, 4}, rng), k = rand_param({2, 3, 4}, rng), v = rand_param({2, 3, 4}, rng);
  ag::AttentionProbe probe;
  const auto out = ag::attention(q, k, v, 2, &probe);
  CHECK(out.shape() == Shape{2, 5, 4});
  REQUIRE(probe.weights.shape() == Shape{2, 2, 5, 3});
  for (int row = 0; row < 2 * 2 * 5; ++row) {
    double s = 0.0;
    for (int j = 0; j < 3; ++j) s += probe.weights[row * 3 + j];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  CHECK(gradcheck([&] { return probe_sum(ag::attention(q, k, v, 2)); }, {q, k, v}).relative_error < kTol);
}

TEST_CASE("no-grad guard stops recording") {
  auto p = ag::parameter(Tensor({1}, 2.0));
  {
    ag::NoGradGuard guard;
    CHECK_FALSE(ag::scale(p, 3.0).requires_grad());
  }
  CHECK(ag::scale(p, 3.0).requires_grad());
}

TEST_CASE("adam reduces a quadratic") {
  nn::ParameterSet params;
  auto w = params.create("w", Tensor({3}, 5.0));
  nn::Adam opt(params, {.learning_rate = 0.1, .clip_norm = 1.0});
  const auto target = ag::constant(Tensor({3}, 1.0));
  const double start = ag::mse(w, target).item();
  for (int i = 0; i < 200; ++i) {
    params.zero_grad();
    ag::mse(w, target).backward();
    opt.step();
  }
  CHECK(ag::mse(w, target).item() < 1e-3 * start);
}
