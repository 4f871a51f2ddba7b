#include <cmath>
#include <random>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "wavec2r/blocks.hpp"
#include "wavec2r/errors.hpp"
#include "wavec2r/wtformer.hpp"

using namespace wavec2r;
using namespace wavec2r::wtformer;
using wavec2r::testing::gradcheck;

namespace {

ag::Var rand_input(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ag::parameter(Tensor::randn(std::move(s), rng));
}

ag::Var probe_sum(const ag::Var& y, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  return ag::sum(ag::mul(y, ag::constant(Tensor::randn(y.shape(), rng))));
}

void check_row_stochastic(const Tensor& w) {
  const int rows = w.dim(0) * w.dim(1) * w.dim(2), cols = w.dim(3);
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += w[static_cast<std::size_t>(r) * cols + c];
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }
}

Tensor param(nn::ParameterSet& ps, const std::string& name) {
  ag::Var* v = ps.find(name);
  REQUIRE(v != nullptr);
  return v->value();
}

ObservationStack random_stack(int c, int h, int w, std::mt19937_64& rng) {
  ObservationStack s;
  s.channels = Tensor::uniform({c, h, w}, rng, 0.0, 1.0);
  s.modalities = canonical_modalities();
  s.modalities.resize(static_cast<std::size_t>(c));
  s.normalized = true;
  return s;
}

// Target correlated with the inputs so the model has something to fit.
std::vector<Sample> toy_dataset(int n, int hw, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    Sample s{random_stack(4, hw, hw, rng), Raster(hw, hw, 0.0, Modality::vil)};
    for (int r = 0; r < hw; ++r)
      for (int c = 0; c < hw; ++c)
        s.target(r, c) = 0.5 * s.stack.channels.at(0, 1, r, c) + 0.3 * s.stack.channels.at(0, 3, r, c);
    out.push_back(std::move(s));
  }
  return out;
}

WtformerConfig tiny_config() {
  WtformerConfig cfg;
  cfg.widths = {2, 2};
  cfg.heads = 1;
  cfg.window = 4;
  cfg.expansion = 1;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("WTHL attention: shape, row sums, odd input") {
  nn::ParameterSet ps;
  std::mt19937_64 rng(1);
  WthlAttention wthl(ps, "wthl", 8, 4, rng);
  CHECK(wthl.head_dim() == 2);
  const auto x = rand_input({1, 8, 16, 16}, 2);
  ag::AttentionProbe probe;
  const auto y = wthl(x, &probe);
  CHECK(y.shape() == x.shape());
  CHECK(probe.weights.shape() == Shape{1, 4, 64, 64});
  check_row_stochastic(probe.weights);
  CHECK_THROWS_AS(wthl(rand_input({1, 8, 5, 6}, 3)), ValidationError);
}

TEST_CASE("WTHL attention gradient on 4x4x4") {
  nn::ParameterSet ps;
  std::mt19937_64 rng(4);
  WthlAttention wthl(ps, "wthl", 4, 2, rng);
  const auto x = rand_input({1, 4, 4, 4}, 5);
  const auto r = gradcheck([&] { return ag::sum(wthl(x)); }, {x});
  CHECK(r.relative_error <= 1e-4);
  CHECK(r.analytic_norm > 0.0);
}

TEST_CASE("WTF block: zero-init identity, shape, gradient") {
  std::mt19937_64 rng(6);
  {
    nn::ParameterSet ps;
    WtfBlock block(ps, "wtf", 16, 4, 2, rng);
    const auto x = rand_input({1, 16, 32, 32}, 7);
    CHECK(block(x).shape() == x.shape());
    block.zero_output_projections();
    const Tensor y = block(x).value();
    for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(y[i] == x.value()[i]);
  }
  nn::ParameterSet ps;
  WtfBlock block(ps, "wtf", 2, 1, 2, rng);
  const auto x = rand_input({1, 2, 4, 4}, 8);
  CHECK(gradcheck([&] { return ag::sum(block(x)); }, {x}).relative_error <= 1e-4);
}

TEST_CASE("residual block zero-init identity") {
  nn::ParameterSet ps;
  std::mt19937_64 rng(9);
  nn::ResBlock2D res(ps, "res", 8, 8, 1, rng);
  res.zero_output_projection();
  const auto x = rand_input({2, 8, 6, 6}, 10);
  const Tensor y = res(x).value();
  for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(y[i] == x.value()[i]);
}

TEST_CASE("windowed attention with window = H = W equals full attention") {
  const int c = 4, heads = 2, hw = 4, t = hw * hw, d = c / heads;
  nn::ParameterSet ps;
  std::mt19937_64 rng(11);
  WindowAttention attn(ps, "attn", c, heads, rng);
  const auto x = rand_input({1, c, hw, hw}, 12);
  ag::AttentionProbe probe;
  const Tensor y = attn(x, hw, &probe).value();
  check_row_stochastic(probe.weights);

  const Tensor wqkv = param(ps, "attn.qkv.weight"), bqkv = param(ps, "attn.qkv.bias");
  const Tensor wo = param(ps, "attn.out.weight"), bo = param(ps, "attn.out.bias");
  // Per-pixel projections, pixels in row-major order.
  std::vector<std::vector<double>> qkv(t, std::vector<double>(3 * c));
  for (int p = 0; p < t; ++p)
    for (int o = 0; o < 3 * c; ++o) {
      double s = bqkv[o];
      for (int i = 0; i < c; ++i) s += wqkv.at(o, i, 0, 0) * x.value().at(0, i, p / hw, p % hw);
      qkv[p][o] = s;
    }
  std::vector<std::vector<double>> mixed(t, std::vector<double>(c, 0.0));
  for (int h = 0; h < heads; ++h)
    for (int p = 0; p < t; ++p) {
      std::vector<double> score(t);
      double mx = -1e300;
      for (int s = 0; s < t; ++s) {
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += qkv[p][h * d + j] * qkv[s][c + h * d + j];
        score[s] = dot / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, score[s]);
      }
      double z = 0.0;
      for (double& s : score) z += (s = std::exp(s - mx));
      for (int s = 0; s < t; ++s)
        for (int j = 0; j < d; ++j) mixed[p][h * d + j] += score[s] / z * qkv[s][2 * c + h * d + j];
    }
  for (int p = 0; p < t; ++p)
    for (int o = 0; o < c; ++o) {
      double s = bo[o];
      for (int i = 0; i < c; ++i) s += wo.at(o, i, 0, 0) * mixed[p][i];
      CHECK(y.at(0, o, p / hw, p % hw) == doctest::Approx(s).epsilon(1e-10));
    }
}

TEST_CASE("windowed attention locality and divisibility") {
  nn::ParameterSet ps;
  std::mt19937_64 rng(13);
  WindowAttention attn(ps, "attn", 4, 2, rng);
  auto x = rand_input({1, 4, 8, 8}, 14);
  const Tensor before = attn(x, 4).value();
  x.mutable_value()[static_cast<std::size_t>(1 * 64 + 1 * 8 + 2)] += 1.0;  // channel 1, (1, 2)
  const Tensor after = attn(x, 4).value();
  for (int ch = 0; ch < 4; ++ch)
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) {
        const bool inside = r < 4 && c < 4;
        const bool changed = before.at(0, ch, r, c) != after.at(0, ch, r, c);
        if (!inside) REQUIRE_FALSE(changed);
      }
  CHECK_THROWS_AS(attn(x, 3), ValidationError);
}

TEST_CASE("wtformer forward: shape, finiteness, determinism, validation") {
  WtformerConfig cfg;
  cfg.widths = {8, 16};
  cfg.seed = 21;
  Wtformer model(cfg);
  std::mt19937_64 rng(22);
  const ObservationStack stack = random_stack(4, 64, 64, rng);
  const CoarseEstimate a = wtformer_forward(stack, model);
  const CoarseEstimate b = wtformer_forward(stack, model);
  CHECK(a.height() == 64);
  CHECK(a.width() == 64);
  CHECK(a.all_finite());
  CHECK(a.values().size() == b.values().size());
  bool identical = true;
  for (std::size_t i = 0; i < a.values().size(); ++i) identical &= a.values()[i] == b.values()[i];
  CHECK(identical);

  CHECK_THROWS_AS(wtformer_forward(random_stack(4, 30, 30, rng), model), ValidationError);
  CHECK_THROWS_AS(wtformer_forward(random_stack(3, 64, 64, rng), model), ValidationError);

  cfg.in_channels = 3;
  cfg.use_wtf = false;
  Wtformer no_vis(cfg);
  CHECK(wtformer_forward(random_stack(4, 32, 32, rng).without(Modality::vis), no_vis).height() == 32);
}

TEST_CASE("tiny wtformer end-to-end gradient") {
  Wtformer model(tiny_config());
  std::size_t count = 0;
  for (const auto& [name, v] : model.parameters().entries()) count += v.value().size();
  CHECK(count <= 2000);
  const auto x = rand_input({1, 4, 8, 8}, 30);
  std::vector<ag::Var> inputs{x};
  for (const auto& [name, v] : model.parameters().entries()) inputs.push_back(v);
  CHECK(gradcheck([&] { return probe_sum(model.forward(x)); }, inputs).relative_error <= 1e-3);
}

TEST_CASE("one stage-1 step decreases the loss on a single sample") {
  const auto data = toy_dataset(1, 16, 40);
  for (auto direction : {losses::ScheduleDirection::as_described, losses::ScheduleDirection::as_written}) {
    WtformerConfig mcfg;
    mcfg.widths = {8, 16};
    mcfg.seed = 41;
    Wtformer model(mcfg);
    Stage1Config cfg;
    cfg.steps = 1;
    cfg.direction = direction;
    const auto result = train_stage1(model, data, cfg);
    REQUIRE(result.history.size() == 1);
    const auto& rec = result.history[0];
    ag::NoGradGuard no_grad;
    const auto x = ag::constant(batch_stacks(std::span(&data[0].stack, 1)));
    const auto y = ag::constant(data[0].target.to_tensor());
    const auto pred = model.forward(x);
    const double after = rec.tag == losses::LossKind::fgl ? losses::fgl(pred, y).item()
                                                           : losses::fibl(pred, y, cfg.fibl).total.item();
    CHECK(after < rec.loss);
  }
}

TEST_CASE("stage-1 history: reproducible tags, schedule drift, probabilities") {
  const auto data = toy_dataset(2, 8, 50);
  Stage1Config cfg;
  cfg.steps = 200;
  cfg.seed = 51;
  Wtformer m1(tiny_config()), m2(tiny_config());
  const auto r1 = train_stage1(m1, data, cfg);
  const auto r2 = train_stage1(m2, data, cfg);
  REQUIRE(r1.history.size() == 200);
  int first = 0, last = 0;
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    REQUIRE(r1.history[i].tag == r2.history[i].tag);
    REQUIRE(r1.history[i].loss == r2.history[i].loss);
    const bool fibl = r1.history[i].tag == losses::LossKind::fibl;
    if (i < 20) first += fibl;
    if (i >= 180) last += fibl;
  }
  CHECK(last > first);
  CHECK(r1.history[0].probability == 1.0);
  CHECK(r1.history[100].probability == doctest::Approx(std::cos(M_PI / 4)));
}

TEST_CASE("stage-1 errors and energy alpha") {
  Wtformer model(tiny_config());
  Stage1Config cfg;
  CHECK_THROWS_AS(train_stage1(model, std::span<const Sample>{}, cfg), ValidationError);

  auto data = toy_dataset(1, 8, 60);
  cfg.steps = 2;
  cfg.alpha_mode = AlphaMode::energy;
  const auto r = train_stage1(model, data, cfg);
  CHECK(r.alpha >= cfg.alpha_bounds.alpha_min);
  CHECK(r.alpha <= cfg.alpha_bounds.alpha_max);

  data[0].stack.channels[0] = std::nan("");
  CHECK_THROWS_AS(train_stage1(model, data, cfg), ValidationError);

  // A non-finite parameter yields a non-finite loss: the hook fires, then NumericError.
  cfg.alpha_mode = AlphaMode::fixed;
  data = toy_dataset(1, 8, 61);
  model.parameters().entries().back().second.mutable_value()[0] = std::nan("");
  int hooked = -1;
  CHECK_THROWS_AS(train_stage1(model, data, cfg, [&](const Wtformer&, int step) { hooked = step; }),
                  NumericError);
  CHECK(hooked == 0);
}
