// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support/gradcheck.hpp"
#include "wavec2r/cli.hpp"
#include "wavec2r/data.hpp"
#include "wavec2r/diffusion.hpp"
#include "wavec2r/losses.hpp"
#include "wavec2r/metrics.hpp"
#include "wavec2r/wavelet.hpp"
#include "wavec2r/wtformer.hpp"

using namespace wavec2r;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), s);
  std::fflush(stdout);
  failures += !o.pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Raster random_field(int h, int w, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Raster r(h, w);
  for (double& v : r.values()) v = n(rng);
  return r;
}

ag::Var random_var(std::mt19937_64& rng, bool trainable) {
  Tensor t = Tensor::randn({1, 1, 8, 8}, rng);
  return trainable ? ag::parameter(t) : ag::constant(t);
}

// ------------------------------------------------------------------ criteria

Outcome wavelet_identities() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> half(1, 64);
  double worst_rec = 0.0, worst_energy = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Raster x = random_field(2 * half(rng), 2 * half(rng), rng);
    const auto p = wavelet::dwt2(x);
    const Raster back = wavelet::idwt2(p);
    for (std::size_t k = 0; k < x.size(); ++k) worst_rec = std::max(worst_rec, std::abs(back.values()[k] - x.values()[k]));
    const double e = wavelet::energy(x);
    const double bands = wavelet::energy(p.ll) + wavelet::energy(p.lh) + wavelet::energy(p.hl) + wavelet::energy(p.hh);
    worst_energy = std::max(worst_energy, std::abs(bands - e) / e);
  }
  const double secs = seconds_since(t0);
  return {worst_rec <= 1e-6 && worst_energy <= 1e-6 && secs < 5.0,
          fmt("max |idwt2(dwt2 x) - x| = %.2e, max energy rel diff = %.2e, %.2fs on 100 rasters", worst_rec,
              worst_energy, secs)};
}

Outcome selective_linearity() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Raster x = random_field(32, 48, rng);
    const auto p = wavelet::dwt2(x);
    const Raster lo = wavelet::selective_reconstruct(p, {wavelet::SubBand::ll});
    const Raster hi = wavelet::selective_reconstruct(p, wavelet::BandSet::details());
    for (std::size_t k = 0; k < x.size(); ++k) {
      worst = std::max(worst, std::abs(lo.values()[k] + hi.values()[k] - x.values()[k]));
    }
  }
  return {worst <= 1e-6, fmt("max |ll-only + detail-only - x| = %.2e over 20 fields", worst)};
}

Outcome loss_correctness() {
  std::mt19937_64 rng(3);
  losses::FiblConfig cfg;
  cfg.alpha = 1.7;
  cfg.w_lh = 0.5;
  cfg.w_hl = 0.3;
  cfg.w_hh = 0.2;
  ag::Var pred = random_var(rng, true), eps = random_var(rng, true);
  const ag::Var target = random_var(rng, false), eps_true = random_var(rng, false);
  const double g_fibl = testing::gradcheck([&] { return losses::fibl(pred, target, cfg).total; }, {pred}).relative_error;
  const double g_fgl = testing::gradcheck([&] { return losses::fgl(pred, target); }, {pred}).relative_error;
  const double g_s2 = testing::gradcheck(
                          [&] { return losses::stage2_loss(eps, eps_true, pred, target, 0.3, cfg).total; }, {eps, pred})
                          .relative_error;

  ag::NoGradGuard no_grad;
  const double delta = 0.375;
  Tensor shifted = target.value();
  for (double& v : shifted.values()) v += delta;
  const double offset = losses::fibl(ag::constant(shifted), target, cfg).total.item();

  // Circular shift by (3, 5): FGL is blind to it.
  Tensor rolled(target.shape());
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) rolled[((r + 3) % 8) * 8 + (c + 5) % 8] = target.value()[r * 8 + c];
  const double id_fibl = losses::fibl(target, target, cfg).total.item();
  const double id_fgl = losses::fgl(target, target).item();
  const double id_s2 = losses::stage2_loss(eps_true, eps_true, target, target, 0.3, cfg).total.item();
  const double shift_fgl = losses::fgl(ag::constant(rolled), target).item();

  const bool ok = g_fibl <= 1e-4 && g_fgl <= 1e-4 && g_s2 <= 1e-4 && offset == 4.0 * delta * delta && id_fibl == 0.0 &&
                  id_fgl == 0.0 && id_s2 == 0.0 && shift_fgl <= 1e-18;
  return {ok, fmt("gradcheck rel err fibl %.1e, fgl %.1e, stage2 %.1e; offset %.6f vs 4d^2 = %.6f; identities "
                  "%.1e/%.1e/%.1e; circular shift fgl %.1e",
                  g_fibl, g_fgl, g_s2, offset, 4.0 * delta * delta, id_fibl, id_fgl, id_s2, shift_fgl)};
}

Outcome schedule_behavior() {
  constexpr int kDraws = 100000, kT = 1000;
  double worst = 0.0;
  std::string detail;
  for (auto dir : {losses::ScheduleDirection::as_written, losses::ScheduleDirection::as_described}) {
    for (int t : {0, kT / 2, kT}) {
      losses::ScheduleState s;
      s.step = t;
      s.total_steps = kT;
      s.direction = dir;
      s.rng.seed(1000 + t);
      int fibl = 0;
      for (int i = 0; i < kDraws; ++i) fibl += losses::schedule_select(s) == losses::LossKind::fibl;
      const double p = std::cos(std::numbers::pi * t / (2.0 * kT));
      // as_described: FIBL iff u > P(t); as_written: FGL iff u > P(t).
      const double expected = dir == losses::ScheduleDirection::as_described ? 1.0 - p : p;
      const double observed = static_cast<double>(fibl) / kDraws;
      worst = std::max(worst, std::abs(observed - expected));
      detail += fmt("%s t=%d fibl %.4f vs %.4f; ", std::string(losses::direction_name(dir)).c_str(), t, observed,
                    expected);
    }
  }
  return {worst <= 0.01, detail + fmt("max deviation %.4f", worst)};
}

Outcome metric_oracle() {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution coin(0.45);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    Raster p(8, 8), t(8, 8);
    for (double& v : p.values()) v = coin(rng) ? 255.0 : 0.0;
    for (double& v : t.values()) v = coin(rng) ? 255.0 : 0.0;
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t k = 0; k < 64; ++k) {
      const bool a = p.values()[k] >= 74, b = t.values()[k] >= 74;
      tp += a && b;
      fp += a && !b;
      fn += !a && b;
      tn += !a && !b;
    }
    const auto c = metrics::confusion(p, t, 74);
    const auto csi = metrics::csi(c), hss = metrics::hss(c);
    const double dh = static_cast<double>(tp + fn) * (fn + tn) + static_cast<double>(tp + fp) * (fp + tn);
    const bool csi_ok = (tp + fp + fn == 0) ? !csi : (csi && *csi == static_cast<double>(tp) / (tp + fp + fn));
    const bool hss_ok =
        dh == 0 ? !hss : (hss && *hss == 2.0 * (static_cast<double>(tp) * tn - static_cast<double>(fn) * fp) / dh);
    const bool pool_ok = metrics::pooled_csi(p, t, 74, 1) == csi;
    mismatches += !csi_ok || !hss_ok || !pool_ok;
  }
  Raster p(8, 8), t(8, 8);
  p(1, 1) = 200;
  t(3, 1) = 200;
  const auto pooled = metrics::pooled_csi(p, t, 74, 4);
  const bool nb = pooled && *pooled == 1.0;
  return {mismatches == 0 && nb, fmt("%d mismatches over 1000 fields (csi, hss, pool=1); offset-in-cell pooled CSI = %.3f",
                                     mismatches, pooled ? *pooled : -1.0)};
}

Outcome diffusion_sanity() {
  const auto sched = diffusion::NoiseSchedule::linear(1000);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  double sum = 0.0, sum2 = 0.0;
  const Raster x0(1, 1, 0.6);
  constexpr int kDraws = 10000;
  for (int i = 0; i < kDraws; ++i) {
    const double z = diffusion::q_sample(x0, 1000, Raster(1, 1, normal(rng)), sched).values()[0];
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / kDraws, var = sum2 / kDraws - mean * mean;

  std::uniform_real_distribution<double> u(0.0, 1.0);
  Raster target(8, 8);
  for (double& v : target.values()) v = u(rng);
  const diffusion::EpsPredictor oracle = [&](const Raster& z, int t) {
    const double ab = sched.alpha_bar(t);
    Raster e(8, 8);
    for (std::size_t k = 0; k < 64; ++k) e.values()[k] = (z.values()[k] - std::sqrt(ab) * target.values()[k]) / std::sqrt(1 - ab);
    return e;
  };
  const Raster out = diffusion::sample_chain(8, 8, oracle, sched, rng);
  double mse = 0.0;
  for (std::size_t k = 0; k < 64; ++k) mse += std::pow(out.values()[k] - target.values()[k], 2) / 64.0;
  const bool ok = std::abs(mean) <= 0.05 && std::abs(var - 1.0) <= 0.05 && mse <= 1e-3;
  return {ok, fmt("z_T mean %.4f var %.4f (alpha_bar_T %.1e); oracle chain MSE %.2e", mean, var, sched.alpha_bar(1000), mse)};
}

// Shared desk-scale setup: 16 synthetic 32x32 events, first 8 train, last 8 test.
struct DeskScale {
  std::vector<wtformer::Sample> train, test;
  std::unique_ptr<wtformer::Wtformer> stage1;
};

DeskScale make_desk_scale() {
  data::SyntheticStormSpec spec;
  spec.seed = 1;
  spec.height = spec.width = 32;
  spec.min_radius = 2.0;
  spec.max_radius = 6.4;
  std::vector<data::EventRecord> norm;
  for (const auto& r : data::generate_synthetic(spec, 16)) norm.push_back(data::normalize(r));
  DeskScale d;
  d.train = data::to_samples(std::span(norm).first(8));
  d.test = data::to_samples(std::span(norm).subspan(8));
  wtformer::WtformerConfig mc;
  mc.widths = {16, 32};
  mc.seed = 7;
  d.stage1 = std::make_unique<wtformer::Wtformer>(mc);
  return d;
}

Outcome desk_stage1(DeskScale& d) {
  wtformer::Stage1Config cfg;
  cfg.steps = 200;
  cfg.seed = 3;
  const auto t0 = std::chrono::steady_clock::now();
  const double before = wtformer::evaluate_fibl(*d.stage1, d.train, cfg.fibl);
  wtformer::train_stage1(*d.stage1, d.train, cfg);
  const double after = wtformer::evaluate_fibl(*d.stage1, d.train, cfg.fibl);
  const double secs = seconds_since(t0);
  const double reduction = 1.0 - after / before;
  return {reduction >= 0.5 && secs < 600.0,
          fmt("FIBL %.4f -> %.4f (%.1f%% reduction) after 200 steps on 8 samples, %.0fs", before, after,
              100.0 * reduction, secs)};
}

Outcome desk_stage2(DeskScale& d) {
  const auto train = diffusion::attach_coarse(d.train, *d.stage1);
  const auto test = diffusion::attach_coarse(d.test, *d.stage1);
  diffusion::DenoiserConfig dc;
  dc.widths = {16, 32};
  dc.seed = 9;
  diffusion::Denoiser model(dc);
  const auto sched = diffusion::NoiseSchedule::linear(1000);
  diffusion::Stage2Config cfg;
  cfg.steps = 500;
  cfg.seed = 5;
  const auto result = diffusion::train_stage2(model, train, sched, cfg);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 50; ++i) first += result.history[i].diffusion / 50.0;
  for (int i = 450; i < 500; ++i) last += result.history[i].diffusion / 50.0;
  const double reduction = 1.0 - last / first;

  int wins = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::mt19937_64 rng(100 + i);
    const Raster y = diffusion::refine(test[i].mu, test[i].stack, model, sched, rng);
    const double g = wavelet::high_frequency_ratio(test[i].target);
    wins += std::abs(wavelet::high_frequency_ratio(y) - g) < std::abs(wavelet::high_frequency_ratio(test[i].mu) - g);
  }
  const double share = static_cast<double>(wins) / test.size();
  return {reduction >= 0.3 && share >= 0.7,
          fmt("L_Diff first-50 mean %.4f, last-50 mean %.4f (%.1f%% reduction); refined closer to target HF ratio "
              "than mu in %d/%zu test samples",
              first, last, 100.0 * reduction, wins, test.size())};
}

config::RunConfig small_run(const fs::path& dir) {
  config::RunConfig c;
  config::apply_overrides(c, {"data.events=8", "data.height=16", "data.width=16", "data.max_radius=4",
                              "model.widths=8,16", "model.heads=2", "model.window=4", "diffusion.widths=8,16",
                              "diffusion.feature_width=4", "diffusion.sampler_steps=20", "run.stage1_steps=20",
                              "run.stage2_steps=20", "run.batch_size=4", "run.seed=11"});
  c.run.checkpoint_dir = (dir / "checkpoints").string();
  return c;
}

Outcome ablation_harness() {
  const fs::path dir = fs::temp_directory_path() / "wavec2r_acceptance" / "ablate";
  fs::remove_all(dir);
  std::ostringstream log;
  const auto reports = cli::cmd_ablate(small_run(dir), dir.string(), log);
  const std::vector<std::string> expected{"full", "no_wtf", "no_vis", "no_dedr", "no_hlf"};
  bool ok = reports.size() == expected.size() && fs::exists(dir / "ablation.txt");
  std::string detail;
  for (std::size_t i = 0; ok && i < reports.size(); ++i) {
    const auto& r = reports[i];
    ok = r.label == expected[i] && r.per_threshold.size() == 5 && r.samples == reports[0].samples &&
         fs::exists(dir / (r.label + ".report.json"));
    detail += fmt("%s avg_csi %s ssim %.3f; ", r.label.c_str(),
                  r.avg_csi ? fmt("%.3f", *r.avg_csi).c_str() : "undef", r.ssim);
  }
  return {ok, detail + fmt("%zu comparable reports", reports.size())};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// Every pipeline command twice in the same working directory; all outputs but
// the wall-clock timing logs must match byte for byte.
Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "wavec2r_acceptance" / "repro";
  fs::remove_all(root);
  const fs::path d = root / "work";
  for (const char* run : {"a", "b"}) {
    fs::create_directories(d);
    const std::string ck = (d / "ck").string();
    const config::RunConfig cfg = small_run(d);
    const std::string ini = (d / "run.ini").string();
    config::save_snapshot(cfg, ini);
    const std::vector<std::vector<std::string>> commands = {
        {"make-data", "--out", (d / "events.h5").string()},
        {"--set", "data.source=archive", "--set", "data.archive=" + (d / "events.h5").string(), "train", "--stage",
         "1", "--checkpoint-dir", ck},
        {"--set", "data.source=archive", "--set", "data.archive=" + (d / "events.h5").string(), "train", "--stage",
         "2", "--checkpoint-dir", ck},
        {"retrieve", "--data", (d / "events.h5").string(), "--checkpoint-dir", ck, "--out", (d / "refined").string()},
        {"retrieve", "--coarse-only", "--data", (d / "events.h5").string(), "--checkpoint-dir", ck, "--out",
         (d / "coarse").string()},
        {"evaluate", "--data", (d / "events.h5").string(), "--pred", (d / "refined").string(), "--out",
         (d / "report").string()},
        {"plot", "--report", (d / "report.json").string(), "--out", (d / "scores.png").string()},
    };
    for (const auto& cmd : commands) {
      std::vector<std::string> args{"wavec2r", "--config", ini};
      args.insert(args.end(), cmd.begin(), cmd.end());
      std::vector<const char*> argv;
      for (const auto& a : args) argv.push_back(a.c_str());
      std::ostringstream out, err;
      if (const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err); code != 0) {
        return {false, "command " + cmd[0] + " failed with exit code " + std::to_string(code) + ": " + err.str()};
      }
    }
    fs::rename(d, root / run);
  }
  int compared = 0, differing = 0;
  std::string first_diff;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name.find(".timing.log") != std::string::npos) continue;
    const fs::path rel = fs::relative(e.path(), root / "a");
    ++compared;
    if (slurp(e.path()) != slurp(root / "b" / rel)) {
      ++differing;
      if (first_diff.empty()) first_diff = rel.string();
    }
  }
  return {compared > 0 && differing == 0,
          fmt("%d files compared across two runs, %d differ%s", compared, differing,
              first_diff.empty() ? "" : (" (first: " + first_diff + ")").c_str())};
}

}  // namespace

int main() {
  report("wavelet identities", wavelet_identities);
  report("selective-reconstruction linearity", selective_linearity);
  report("loss correctness", loss_correctness);
  report("schedule behavior", schedule_behavior);
  report("metric oracle equivalence", metric_oracle);
  report("diffusion sanity", diffusion_sanity);
  DeskScale desk = make_desk_scale();
  report("desk-scale stage I", [&] { return desk_stage1(desk); });
  report("desk-scale stage II", [&] { return desk_stage2(desk); });
  report("ablation harness", ablation_harness);
  report("end-to-end reproducibility", reproducibility);
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
