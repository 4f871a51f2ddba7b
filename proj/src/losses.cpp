#include "wavec2r/losses.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "wavec2r/errors.hpp"

namespace wavec2r::losses {

void FiblConfig::validate() const {
  if (!(alpha >= 0.0)) throw ValidationError("fibl: alpha must be non-negative");
  if (!(w_lh >= 0.0 && w_hl >= 0.0 && w_hh >= 0.0)) {
    throw ValidationError("fibl: directional weights must be non-negative");
  }
  if (alpha > 0.0 && w_lh == 0.0 && w_hl == 0.0 && w_hh == 0.0) {
    throw ValidationError("fibl: all directional weights are zero while alpha > 0");
  }
  if (basis != wavelet::Basis::haar_orthonormal) throw ValidationError("fibl: unsupported basis");
}

FiblTerms fibl(const ag::Var& pred, const ag::Var& target, const FiblConfig& cfg) {
  cfg.validate();
  require_same_shape(pred.value(), target.value(), "fibl");
  const int c = pred.dim(1);
  const ag::Var pb = ag::dwt2(pred);
  const ag::Var tb = ag::dwt2(target);
  auto band_mse = [&](int band) {
    return ag::mse(ag::slice_channels(pb, band * c, c), ag::slice_channels(tb, band * c, c));
  };
  ag::Var low = band_mse(0);
  ag::Var high = ag::add(ag::add(ag::scale(band_mse(1), cfg.w_lh), ag::scale(band_mse(2), cfg.w_hl)),
                         ag::scale(band_mse(3), cfg.w_hh));
  ag::Var total = ag::add(low, ag::scale(high, cfg.alpha));
  return {total, low, high};
}

namespace {

// In-place 2D DFT of one plane; sign -1 forward, +1 backward (unnormalized).
void dft2(std::vector<std::complex<double>>& buf, int h, int w, int sign) {
  auto* data = reinterpret_cast<fftw_complex*>(buf.data());
  fftw_plan plan = fftw_plan_dft_2d(h, w, data, data, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD,
                                    FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
}

}  // namespace

ag::Var fgl(const ag::Var& pred, const ag::Var& target) {
  require_same_shape(pred.value(), target.value(), "fgl");
  if (pred.value().rank() != 4) throw ValidationError("fgl: expected NCHW input");
  const int planes = pred.dim(0) * pred.dim(1);
  const int h = pred.dim(2), w = pred.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const double count = static_cast<double>(planes) * static_cast<double>(plane);

  // Per-bin residual weight g * P / |P|, kept for the backward pass.
  Tensor weighted_re({planes, h, w});
  Tensor weighted_im({planes, h, w});
  std::vector<std::complex<double>> pb(plane), tb(plane);
  double acc = 0.0;
  for (int p = 0; p < planes; ++p) {
    const double* pv = pred.value().data() + p * plane;
    const double* tv = target.value().data() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      pb[i] = pv[i];
      tb[i] = tv[i];
    }
    dft2(pb, h, w, -1);
    dft2(tb, h, w, -1);
    for (std::size_t i = 0; i < plane; ++i) {
      const double ap = std::abs(pb[i]);
      const double diff = ap - std::abs(tb[i]);
      acc += diff * diff;
      // |P| is not differentiable at 0; use the zero subgradient there.
      const std::complex<double> unit = ap > 1e-300 ? pb[i] / ap : std::complex<double>(0.0, 0.0);
      const std::complex<double> g = (2.0 * diff / count) * unit;
      weighted_re[p * plane + i] = g.real();
      weighted_im[p * plane + i] = g.imag();
    }
  }

  return ag::make_op(Tensor({1}, acc / count), {pred, target},
                 [weighted_re = std::move(weighted_re), weighted_im = std::move(weighted_im),
                  planes, h, w, plane](ag::Node& self) {
    ag::Node& pn = *self.inputs[0];
    if (!pn.requires_grad) return;
    Tensor& g = pn.grad_buffer();
    const double upstream = self.grad[0];
    std::vector<std::complex<double>> buf(plane);
    for (int p = 0; p < planes; ++p) {
      for (std::size_t i = 0; i < plane; ++i) {
        buf[i] = {weighted_re[p * plane + i], weighted_im[p * plane + i]};
      }
      dft2(buf, h, w, +1);
      for (std::size_t i = 0; i < plane; ++i) g[p * plane + i] += upstream * buf[i].real();
    }
  });
}

AlphaEstimate alpha_from_energy(std::span<const Raster> sample, AlphaBounds bounds) {
  if (sample.empty()) throw ValidationError("alpha_from_energy: empty sample");
  if (!(bounds.alpha_min >= 0.0 && bounds.alpha_min <= bounds.alpha_max)) {
    throw ValidationError("alpha_from_energy: invalid clamp range");
  }
  double low = 0.0, high = 0.0;
  for (const Raster& r : sample) {
    const wavelet::WaveletPyramid p = wavelet::dwt2(r);
    low += wavelet::energy(p.ll);
    high += wavelet::energy(p.lh) + wavelet::energy(p.hl) + wavelet::energy(p.hh);
  }
  if (high == 0.0) return {bounds.alpha_max, true};
  return {std::clamp(low / high, bounds.alpha_min, bounds.alpha_max), false};
}

std::string_view loss_kind_name(LossKind k) { return k == LossKind::fgl ? "fgl" : "fibl"; }

std::string_view direction_name(ScheduleDirection d) {
  return d == ScheduleDirection::as_written ? "as_written" : "as_described";
}

ScheduleDirection direction_from_name(std::string_view name) {
  if (name == "as_written") return ScheduleDirection::as_written;
  if (name == "as_described") return ScheduleDirection::as_described;
  throw ValidationError("unknown schedule direction '" + std::string(name) + "'");
}

double ScheduleState::probability() const {
  if (total_steps <= 0 || step < 0 || step > total_steps) {
    throw ValidationError("schedule: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(total_steps) + "]");
  }
  if (step == total_steps) return 0.0;
  return std::cos(std::numbers::pi * step / (2.0 * total_steps));
}

LossKind schedule_select(ScheduleState& state) {
  const double p_t = state.probability();
  const double p = std::uniform_real_distribution<double>(0.0, 1.0)(state.rng);
  const bool above = p > p_t;
  if (state.direction == ScheduleDirection::as_written) return above ? LossKind::fgl : LossKind::fibl;
  return above ? LossKind::fibl : LossKind::fgl;
}

Stage2Terms stage2_loss(const ag::Var& eps_pred, const ag::Var& eps_true,
                        const ag::Var& refined_estimate, const ag::Var& target, double lambda_freq,
                        const FiblConfig& cfg) {
  if (!(lambda_freq >= 0.0)) throw ValidationError("stage2_loss: lambda_freq must be non-negative");
  ag::Var diffusion = ag::mse(eps_pred, eps_true);
  ag::Var wavelet = fibl(refined_estimate, target, cfg).total;
  ag::Var total = ag::add(diffusion, ag::scale(wavelet, lambda_freq));
  return {total, diffusion, wavelet};
}

}  // namespace wavec2r::losses
