#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wavec2r/blocks.hpp"
#include "wavec2r/losses.hpp"
#include "wavec2r/nn.hpp"
#include "wavec2r/observation.hpp"
#include "wavec2r/wtformer.hpp"

namespace wavec2r::diffusion {

enum class ScheduleKind { linear, cosine };

const char* schedule_kind_name(ScheduleKind k);
ScheduleKind schedule_kind_from_name(const std::string& name);

/// Discrete forward-process schedule over steps t = 1..T. Entry i of each
/// table describes step t = i + 1; alpha_bar(0) is 1 by convention.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  static NoiseSchedule linear(int steps, double beta_start = 1e-4, double beta_end = 0.02);
  static NoiseSchedule cosine(int steps, double offset = 0.008);
  /// Explicit betas, each in (0, 1).
  static NoiseSchedule from_betas(std::vector<double> betas, ScheduleKind kind = ScheduleKind::linear);

  /// Evenly strided subset of `count` steps (always including T), with betas
  /// recomputed so alpha_bar matches the parent at the kept steps.
  NoiseSchedule respaced(int count) const;

  int steps() const noexcept { return static_cast<int>(beta_.size()); }
  ScheduleKind kind() const noexcept { return kind_; }
  double beta(int t) const;
  double alpha_bar(int t) const;
  /// beta~_t = beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t).
  double posterior_variance(int t) const;
  /// Timestep of the original training schedule that step t corresponds to.
  int model_timestep(int t) const;

 private:
  void check_step(int t) const;

  ScheduleKind kind_ = ScheduleKind::linear;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
  std::vector<int> model_steps_;
};

/// z_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Raster q_sample(const Raster& x0, int t, const Raster& eps, const NoiseSchedule& schedule);
Tensor q_sample(const Tensor& x0, const std::vector<int>& t, const Tensor& eps,
                const NoiseSchedule& schedule);

/// F~ = Conv1x1(DWConv3x3(GELU(Conv1x1(F)))) applied separately to the ll
/// band and to the aggregated lh + hl + hh band.
class FreqFeatureExtractor {
 public:
  FreqFeatureExtractor() = default;
  FreqFeatureExtractor(nn::ParameterSet& params, const std::string& name, int in_channels,
                       int width, std::mt19937_64& rng);

  struct Output {
    ag::Var f_lf;
    ag::Var f_hf;
  };
  /// (N, C, H, W) -> two (N, width, H/2, W/2) grids.
  Output operator()(const ag::Var& stack) const;

 private:
  struct Path {
    nn::Conv2d in;
    nn::Conv2d depthwise;
    nn::Conv2d out;
    ag::Var operator()(const ag::Var& x) const { return out(depthwise(ag::gelu(in(x)))); }
  };
  Path low_;
  Path high_;
  int in_channels_ = 0;
};

struct DenoiserConfig {
  int in_channels = 4;
  std::array<int, 2> widths{32, 64};
  int feature_width = 16;
  /// Ablation switch: inject the wavelet priors at the half-resolution level.
  bool use_hlf = true;
  /// Output preconditioning scale; 0 makes the network output eps directly.
  /// With s > 0 and sigma^2 = (1 - alpha_bar) / alpha_bar, the network sees
  /// z / sqrt(1 - alpha_bar + alpha_bar s^2) and its output F becomes
  ///   eps^ = z sigma / ((sigma^2 + s^2) sqrt(alpha_bar)) - F s / sqrt(sigma^2 + s^2),
  /// so x0^ tends to s F at high noise instead of amplifying the eps error.
  double sigma_data = 0.5;
  /// Training schedule; maps model timesteps to alpha_bar for preconditioning.
  NoiseSchedule schedule = NoiseSchedule::linear(1000);
  std::uint64_t seed = 0;
};

/// Conditioning C = [mu, X, f_lf, f_hf] for one sample.
struct ConditioningBundle {
  CoarseEstimate mu;
  ObservationStack stack;
  Tensor f_lf;  // (1, width, H/2, W/2)
  Tensor f_hf;
};

/// Two-level encoder-decoder predicting eps from [z_t, mu, X] with a
/// sinusoidal time embedding; wavelet priors enter at half resolution.
class Denoiser {
 public:
  explicit Denoiser(const DenoiserConfig& cfg);

  /// z_t, mu: (N, 1, H, W); x: (N, C, H, W); H, W divisible by 4.
  ag::Var forward(const ag::Var& z_t, const ag::Var& mu, const ag::Var& x,
                  const std::vector<int>& timesteps) const;
  /// Same with precomputed priors.
  ag::Var forward(const ag::Var& z_t, const ag::Var& mu, const ag::Var& x,
                  const FreqFeatureExtractor::Output& priors, const std::vector<int>& timesteps) const;

  FreqFeatureExtractor::Output priors(const ag::Var& x) const { return extractor_(x); }

  nn::ParameterSet& parameters() noexcept { return params_; }
  const nn::ParameterSet& parameters() const noexcept { return params_; }
  const DenoiserConfig& config() const noexcept { return cfg_; }

 private:
  ag::Var time_features(const std::vector<int>& timesteps, int batch) const;

  DenoiserConfig cfg_;
  nn::ParameterSet params_;
  FreqFeatureExtractor extractor_;
  nn::Linear time1_, time2_;
  nn::Conv2d stem_;
  nn::ResBlock2D enc1_, down1_, enc2_, down2_, mid_;
  nn::Conv2d inject_;
  nn::Upsample up2_, up1_;
  nn::ResBlock2D dec2_, dec1_;
  nn::GroupNorm head_norm_;
  nn::Conv2d head_;
};

/// Runs the extractor on the stack (inference mode).
ConditioningBundle make_conditioning(const CoarseEstimate& mu, const ObservationStack& stack,
                                     const Denoiser& model);

/// eps prediction for a single sample in inference mode.
Raster denoiser_forward(const Raster& z_t, const ConditioningBundle& cond, int timestep,
                        const Denoiser& model);

struct DiffusionState {
  Raster z;
  int t = 0;
};

/// Maps (z_t, model timestep) to an eps prediction.
using EpsPredictor = std::function<Raster(const Raster& z_t, int model_timestep)>;

/// ancestral: posterior-variance noise at every step but the last.
/// deterministic: eta = 0 implicit update, noise enters only through z_T.
enum class SamplerKind { ancestral, deterministic };

const char* sampler_kind_name(SamplerKind k);
SamplerKind sampler_kind_from_name(const std::string& name);

struct SamplerOptions {
  SamplerKind kind = SamplerKind::ancestral;
  /// Clip range for the x0 reconstruction inside each step.
  double x0_min = 0.0;
  double x0_max = 1.0;
  bool clip_x0 = true;
};

/// One ancestral step z_t -> z_{t-1} with variance beta~_t; no noise at t = 1.
DiffusionState p_sample_step(const DiffusionState& state, const EpsPredictor& predict,
                             const NoiseSchedule& schedule, std::mt19937_64& rng,
                             const SamplerOptions& options = {});

/// Deterministic step z_t -> z_{t-1}: x0 is reconstructed (and clipped), eps
/// re-derived from it, and both recombined at t-1.
DiffusionState ddim_step(const DiffusionState& state, const EpsPredictor& predict,
                         const NoiseSchedule& schedule, const SamplerOptions& options = {});

/// Full reverse chain from z_T ~ N(0, I) using options.kind.
Raster sample_chain(int height, int width, const EpsPredictor& predict,
                    const NoiseSchedule& schedule, std::mt19937_64& rng,
                    const SamplerOptions& options = {});

struct RefineOptions {
  int sampling_steps = 50;
  /// Diffuse y - mu instead of y.
  bool residual = false;
  SamplerKind sampler = SamplerKind::deterministic;
};

/// Stage II inference: returns y^ clamped to [0, 1]. `schedule` is the
/// training schedule; it is respaced to options.sampling_steps.
Raster refine(const CoarseEstimate& mu, const ObservationStack& stack, const Denoiser& model,
              const NoiseSchedule& schedule, std::mt19937_64& rng, const RefineOptions& options = {});

struct Stage2Sample {
  ObservationStack stack;
  CoarseEstimate mu;
  Raster target;
};

/// Attaches frozen Stage-I estimates to each (stack, target) pair.
std::vector<Stage2Sample> attach_coarse(std::span<const wtformer::Sample> samples,
                                        const wtformer::Wtformer& stage1);

struct Stage2Config {
  int steps = 500;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double clip_norm = 1.0;
  double lambda_freq = 0.1;
  losses::FiblConfig fibl;
  bool residual = false;
  std::uint64_t seed = 0;
};

struct Stage2Step {
  int step = 0;
  std::vector<int> t;
  double total = 0.0;
  double diffusion = 0.0;
  double wavelet = 0.0;
  double grad_norm = 0.0;
};

struct Stage2Result {
  std::vector<Stage2Step> history;
};

using Stage2Hook = std::function<void(const Denoiser&, int step)>;

/// Optimizes `model` in place on L_Diff + lambda * FIBL(x0^, y) with t
/// drawn uniformly from [1, T].
Stage2Result train_stage2(Denoiser& model, std::span<const Stage2Sample> dataset,
                          const NoiseSchedule& schedule, const Stage2Config& cfg,
                          const Stage2Hook& on_nan = {});

}  // namespace wavec2r::diffusion
