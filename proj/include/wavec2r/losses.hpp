#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "wavec2r/autograd.hpp"
#include "wavec2r/raster.hpp"
#include "wavec2r/wavelet.hpp"

namespace wavec2r::losses {

struct FiblConfig {
  /// Weight of the detail-band term.
  double alpha = 1.0;
  double w_lh = 1.0 / 3.0;
  double w_hl = 1.0 / 3.0;
  double w_hh = 1.0 / 3.0;
  wavelet::Basis basis = wavelet::Basis::haar_orthonormal;

  /// Throws ValidationError on negative weights or all-zero directional
  /// weights with a positive alpha.
  void validate() const;
};

struct FiblTerms {
  ag::Var total;
  ag::Var low;
  ag::Var high;
};

/// Low/high decomposed loss on (N, C, H, W) inputs with even H, W:
///   low  = MSE(ll_pred, ll_target)
///   high = sum_d w_d * MSE(d_pred, d_target), d in {lh, hl, hh}
///   total = low + alpha * high
FiblTerms fibl(const ag::Var& pred, const ag::Var& target, const FiblConfig& cfg);

/// Mean squared difference of 2D Fourier amplitude spectra, per plane, with
/// an unnormalized forward DFT and the mean taken over all N*C*H*W bins. The
/// gradient flows to `pred`; `target` is treated as data.
ag::Var fgl(const ag::Var& pred, const ag::Var& target);

struct AlphaBounds {
  double alpha_min = 0.1;
  double alpha_max = 10.0;
};

struct AlphaEstimate {
  double alpha = 1.0;
  /// True when the sample carried no detail energy; alpha is then alpha_max.
  bool degenerate = false;
};

/// Ratio of ll-band energy to lh+hl+hh energy, pooled over the sample, then
/// clamped to the bounds.
AlphaEstimate alpha_from_energy(std::span<const Raster> sample, AlphaBounds bounds = {});

enum class LossKind { fgl, fibl };
std::string_view loss_kind_name(LossKind k);

/// as_written: FGL iff p > P(t). as_described: FIBL iff p > P(t), so FIBL
/// becomes more likely as training progresses.
enum class ScheduleDirection { as_written, as_described };
std::string_view direction_name(ScheduleDirection d);
ScheduleDirection direction_from_name(std::string_view name);

struct ScheduleState {
  int step = 0;
  int total_steps = 1;
  std::mt19937_64 rng{0};
  ScheduleDirection direction = ScheduleDirection::as_described;

  /// P(t) = cos(pi * t / (2T)).
  double probability() const;
};

/// Draws p ~ U(0, 1) from the state's stream and picks the loss.
LossKind schedule_select(ScheduleState& state);

struct Stage2Terms {
  ag::Var total;
  ag::Var diffusion;
  ag::Var wavelet;
};

/// total = MSE(eps_pred, eps_true) + lambda_freq * fibl(refined, target).total
Stage2Terms stage2_loss(const ag::Var& eps_pred, const ag::Var& eps_true,
                        const ag::Var& refined_estimate, const ag::Var& target, double lambda_freq,
                        const FiblConfig& cfg);

}  // namespace wavec2r::losses
