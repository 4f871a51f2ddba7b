#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "wavec2r/errors.hpp"
#include "wavec2r/losses.hpp"

using namespace wavec2r;
using namespace wavec2r::losses;
using wavec2r::testing::gradcheck;

namespace {

ag::Var field(int h, int w, std::mt19937_64& rng, bool trainable = false) {
  Tensor t = Tensor::randn({1, 1, h, w}, rng);
  return trainable ? ag::parameter(t) : ag::constant(t);
}

// Brute-force DFT amplitude of a real plane.
std::vector<double> dft_amplitude(const Tensor& t) {
  const int h = t.dim(2), w = t.dim(3);
  std::vector<double> amp(static_cast<std::size_t>(h) * w);
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) {
      std::complex<double> acc = 0.0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double th = -2.0 * std::numbers::pi * (double(u) * y / h + double(v) * x / w);
          acc += t.at(0, 0, y, x) * std::complex<double>(std::cos(th), std::sin(th));
        }
      amp[u * w + v] = std::abs(acc);
    }
  return amp;
}

}  // namespace

TEST_CASE("fibl identity and constant offset") {
  std::mt19937_64 rng(1);
  const auto t = field(8, 8, rng);
  const FiblConfig cfg;
  const auto same = fibl(t, t, cfg);
  CHECK(same.total.item() == 0.0);
  CHECK(same.low.item() == 0.0);
  CHECK(same.high.item() == 0.0);

  const double delta = 0.37;
  Tensor shifted = t.value();
  for (double& v : shifted.values()) v += delta;
  const auto off = fibl(ag::constant(shifted), t, cfg);
  CHECK(off.low.item() == doctest::Approx(4 * delta * delta).epsilon(1e-12));
  CHECK(std::abs(off.high.item()) < 1e-24);
  CHECK(off.total.item() == doctest::Approx(4 * delta * delta).epsilon(1e-12));
}

TEST_CASE("fibl with alpha zero equals ll-band MSE") {
  std::mt19937_64 rng(2);
  const auto p = field(8, 8, rng), t = field(8, 8, rng);
  FiblConfig cfg;
  cfg.alpha = 0.0;
  const auto pl = wavelet::dwt2(Raster::from_tensor(p.value())).ll;
  const auto tl = wavelet::dwt2(Raster::from_tensor(t.value())).ll;
  double mse = 0.0;
  for (std::size_t i = 0; i < pl.size(); ++i) mse += std::pow(pl.values()[i] - tl.values()[i], 2);
  mse /= static_cast<double>(pl.size());
  CHECK(fibl(p, t, cfg).total.item() == doctest::Approx(mse).epsilon(1e-12));
}

TEST_CASE("fibl total equals its breakdown bit for bit; scale covariance") {
  std::mt19937_64 rng(3);
  FiblConfig cfg{.alpha = 2.3, .w_lh = 0.2, .w_hl = 0.5, .w_hh = 0.3};
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = field(8, 8, rng), t = field(8, 8, rng);
    const auto terms = fibl(p, t, cfg);
    CHECK(terms.total.item() == terms.low.item() + cfg.alpha * terms.high.item());
    CHECK(terms.total.item() >= 0.0);

    const double a = -1.9;
    const auto scaled = fibl(ag::scale(p, a), ag::scale(t, a), cfg);
    CHECK(scaled.total.item() == doctest::Approx(a * a * terms.total.item()).epsilon(1e-12));
  }
}

TEST_CASE("fibl config validation and shape errors") {
  std::mt19937_64 rng(4);
  const auto p = field(8, 8, rng);
  CHECK_THROWS_AS(fibl(p, field(8, 6, rng), FiblConfig{}), ValidationError);
  CHECK_THROWS_AS(fibl(p, p, FiblConfig{.alpha = -1.0}), ValidationError);
  CHECK_THROWS_AS(fibl(p, p, FiblConfig{.alpha = 1.0, .w_lh = 0, .w_hl = 0, .w_hh = 0}), ValidationError);
  CHECK_NOTHROW(fibl(p, p, FiblConfig{.alpha = 0.0, .w_lh = 0, .w_hl = 0, .w_hh = 0}));
}

TEST_CASE("fgl matches a brute-force amplitude spectrum") {
  std::mt19937_64 rng(5);
  const auto p = field(6, 4, rng), t = field(6, 4, rng);
  const auto ap = dft_amplitude(p.value()), at = dft_amplitude(t.value());
  double expect = 0.0;
  for (std::size_t i = 0; i < ap.size(); ++i) expect += std::pow(ap[i] - at[i], 2);
  expect /= static_cast<double>(ap.size());
  CHECK(fgl(p, t).item() == doctest::Approx(expect).epsilon(1e-10));
  CHECK(fgl(t, t).item() == 0.0);
}

TEST_CASE("fgl is blind to circular shifts") {
  std::mt19937_64 rng(6);
  const auto t = field(8, 8, rng);
  Tensor shifted({1, 1, 8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) shifted.at(0, 0, (y + 3) % 8, (x + 5) % 8) = t.value().at(0, 0, y, x);
  CHECK(fgl(ag::constant(shifted), t).item() < 1e-20);
}

TEST_CASE("fgl of a unit impulse against zero is one") {
  for (int n : {4, 8}) {
    Tensor impulse({1, 1, n, n});
    impulse.at(0, 0, 1, 2) = 1.0;
    const auto amp = dft_amplitude(impulse);
    for (double a : amp) CHECK(a == doctest::Approx(1.0));
    CHECK(fgl(ag::constant(impulse), ag::constant(Tensor({1, 1, n, n}))).item() ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("loss gradients match central differences") {
  std::mt19937_64 rng(7);
  auto p = field(8, 8, rng, true);
  const auto t = field(8, 8, rng);
  const FiblConfig cfg{.alpha = 1.7, .w_lh = 0.5, .w_hl = 0.3, .w_hh = 0.2};
  CHECK(gradcheck([&] { return fibl(p, t, cfg).total; }, {p}).relative_error <= 1e-4);
  CHECK(gradcheck([&] { return fgl(p, t); }, {p}).relative_error <= 1e-4);

  auto eps_pred = field(8, 8, rng, true);
  const auto eps_true = field(8, 8, rng);
  CHECK(gradcheck([&] { return stage2_loss(eps_pred, eps_true, p, t, 0.1, cfg).total; }, {eps_pred, p})
            .relative_error <= 1e-4);
}

TEST_CASE("stage2 loss reductions") {
  std::mt19937_64 rng(8);
  const auto e = field(8, 8, rng), y = field(8, 8, rng), r = field(8, 8, rng);
  const FiblConfig cfg;
  CHECK(stage2_loss(e, e, y, y, 0.1, cfg).total.item() == 0.0);

  const auto zero_lambda = stage2_loss(field(8, 8, rng), e, r, y, 0.0, cfg);
  CHECK(zero_lambda.total.item() == zero_lambda.diffusion.item());

  Tensor plus_one = e.value();
  for (double& v : plus_one.values()) v += 1.0;
  const auto unit = stage2_loss(ag::constant(plus_one), e, y, y, 0.1, cfg);
  CHECK(unit.diffusion.item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(unit.total.item() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("alpha from energy statistics") {
  const Raster flat(8, 8, 3.0);
  const Raster flats[] = {flat, flat};
  const auto degenerate = alpha_from_energy(flats);
  CHECK(degenerate.degenerate);
  CHECK(degenerate.alpha == 10.0);

  Raster checker(8, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) checker(r, c) = ((r + c) % 2) ? -1.0 : 1.0;
  const auto pc = wavelet::dwt2(checker);
  CHECK(wavelet::energy(pc.hh) == doctest::Approx(wavelet::energy(checker)));
  CHECK(wavelet::energy(pc.ll) + wavelet::energy(pc.lh) + wavelet::energy(pc.hl) == 0.0);
  const Raster one_checker[] = {checker};
  CHECK(alpha_from_energy(one_checker).alpha == 0.1);

  std::mt19937_64 rng(9);
  Raster f(8, 8);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (double& v : f.values()) v = d(rng);
  // Brute force energy ratio straight from the 2x2 block formulas.
  double low = 0.0, high = 0.0;
  for (int r = 0; r < 8; r += 2)
    for (int c = 0; c < 8; c += 2) {
      const double a = f(r, c), b = f(r, c + 1), e = f(r + 1, c), g = f(r + 1, c + 1);
      low += std::pow((a + b + e + g) / 2, 2);
      high += std::pow((a + b - e - g) / 2, 2) + std::pow((a - b + e - g) / 2, 2) +
              std::pow((a - b - e + g) / 2, 2);
    }
  const Raster one[] = {f};
  const auto est = alpha_from_energy(one, {.alpha_min = 0.0, .alpha_max = 1e9});
  CHECK(est.alpha == doctest::Approx(low / high).epsilon(1e-12));
  CHECK_THROWS_AS(alpha_from_energy(std::span<const Raster>{}), ValidationError);
}

TEST_CASE("schedule probability and selection") {
  ScheduleState s{.step = 0, .total_steps = 1000, .rng = std::mt19937_64(1),
                  .direction = ScheduleDirection::as_written};
  CHECK(s.probability() == 1.0);
  for (int i = 0; i < 1000; ++i) CHECK(schedule_select(s) == LossKind::fibl);
  s.step = 1000;
  CHECK(s.probability() == 0.0);
  for (int i = 0; i < 1000; ++i) CHECK(schedule_select(s) == LossKind::fgl);

  double prev = 2.0;
  for (int t = 0; t <= 1000; t += 50) {
    s.step = t;
    CHECK(s.probability() < prev);
    prev = s.probability();
  }
  s.step = 1001;
  CHECK_THROWS_AS(s.probability(), ValidationError);
}

TEST_CASE("schedule selection is reproducible for a seed") {
  auto run = [] {
    ScheduleState s{.step = 300, .total_steps = 1000, .rng = std::mt19937_64(42)};
    std::vector<LossKind> out;
    for (int i = 0; i < 100; ++i) out.push_back(schedule_select(s));
    return out;
  };
  CHECK(run() == run());
}
