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

namespace wavec2r::wtformer {

/// Multi-head self-attention restricted to non-overlapping window x window
/// patches. Q/K/V and the output projection are 1x1 convolutions.
class WindowAttention {
 public:
  WindowAttention() = default;
  WindowAttention(nn::ParameterSet& params, const std::string& name, int channels, int heads,
                  std::mt19937_64& rng);

  /// (N, C, H, W) -> (N, C, H, W); H and W must be divisible by `window`.
  ag::Var operator()(const ag::Var& features, int window, ag::AttentionProbe* probe = nullptr) const;
  void zero_output_projection() { out_.zero(); }

 private:
  nn::Conv2d qkv_;
  nn::Conv2d out_;
  int channels_ = 0;
  int heads_ = 1;
};

/// Cross-frequency attention of one DWT level: queries from the ll band,
/// keys from the aggregated lh + hl + hh band, values from both bands; the
/// fused result is GELU'd, convolved into four bands and inverted.
class WthlAttention {
 public:
  WthlAttention() = default;
  WthlAttention(nn::ParameterSet& params, const std::string& name, int channels, int heads,
                std::mt19937_64& rng);

  ag::Var operator()(const ag::Var& features, ag::AttentionProbe* probe = nullptr) const;
  void zero_output_projection() { band_conv_.zero(); }
  int head_dim() const { return channels_ / heads_; }

 private:
  nn::Linear w_q_;
  nn::Linear w_k_;
  nn::Linear w_v_low_;
  nn::Linear w_v_high_;
  nn::Conv2d band_conv_;
  int channels_ = 0;
  int heads_ = 1;
};

/// Dual-branch block: features + conv_pathway(features) + wthl_pathway(features).
class WtfBlock {
 public:
  WtfBlock() = default;
  WtfBlock(nn::ParameterSet& params, const std::string& name, int channels, int heads,
           int expansion, std::mt19937_64& rng);

  ag::Var operator()(const ag::Var& features, ag::AttentionProbe* probe = nullptr) const;
  void zero_output_projections();

 private:
  nn::GroupNorm conv_norm_;
  nn::Conv2d expand_;
  nn::Conv2d depthwise_;
  nn::Conv2d project_;
  nn::GroupNorm wthl_norm_;
  WthlAttention wthl_;
};

/// Pre-norm residual wrapper: x + WindowAttention(GN(x)).
class WindowAttentionBlock {
 public:
  WindowAttentionBlock() = default;
  WindowAttentionBlock(nn::ParameterSet& params, const std::string& name, int channels, int heads,
                       std::mt19937_64& rng);
  ag::Var operator()(const ag::Var& x, int window) const;
  void zero_output_projection() { attn_.zero_output_projection(); }

 private:
  nn::GroupNorm norm_;
  WindowAttention attn_;
};

struct WtformerConfig {
  int in_channels = 4;
  std::array<int, 2> widths{32, 64};
  int heads = 4;
  int window = 8;
  int expansion = 2;
  /// Ablation switch: without it the levels hold only ResBlock + attention.
  bool use_wtf = true;
  std::uint64_t seed = 0;
};

/// Two-level encoder-decoder producing the coarse estimate (N, 1, H, W).
class Wtformer {
 public:
  explicit Wtformer(const WtformerConfig& cfg);

  /// x: (N, C, H, W) with H, W divisible by 4. Raw (unclamped) output.
  ag::Var forward(const ag::Var& x) const;

  nn::ParameterSet& parameters() noexcept { return params_; }
  const nn::ParameterSet& parameters() const noexcept { return params_; }
  const WtformerConfig& config() const noexcept { return cfg_; }

  /// Zeroes every residual-branch output projection.
  void zero_output_projections();

 private:
  struct Level {
    nn::ResBlock2D res;
    WindowAttentionBlock attn;
    WtfBlock wtf;
  };
  ag::Var run_level(const Level& level, const ag::Var& x) const;

  WtformerConfig cfg_;
  nn::ParameterSet params_;
  nn::Conv2d stem_;
  Level enc1_, enc2_;
  nn::ResBlock2D down1_, down2_;
  nn::ResBlock2D mid_res_;
  WindowAttentionBlock mid_attn_;
  nn::Upsample up2_, up1_;
  Level dec2_, dec1_;
  nn::GroupNorm head_norm_;
  nn::Conv2d head_;
};

/// Inference: runs the model without recording gradients and clamps the
/// result to [0, 1].
CoarseEstimate wtformer_forward(const ObservationStack& stack, const Wtformer& model);

struct Sample {
  ObservationStack stack;
  Raster target;
};

enum class AlphaMode { fixed, energy };

struct Stage1Config {
  int steps = 200;
  int batch_size = 8;
  double learning_rate = 2e-4;
  double clip_norm = 1.0;
  losses::FiblConfig fibl;
  AlphaMode alpha_mode = AlphaMode::fixed;
  losses::AlphaBounds alpha_bounds;
  losses::ScheduleDirection direction = losses::ScheduleDirection::as_described;
  std::uint64_t seed = 0;
};

struct Stage1Step {
  int step = 0;
  double loss = 0.0;
  losses::LossKind tag = losses::LossKind::fibl;
  double probability = 0.0;
  double grad_norm = 0.0;
};

struct Stage1Result {
  std::vector<Stage1Step> history;
  double alpha = 1.0;
};

/// Called with the model state when a non-finite loss aborts training.
using DiagnosticHook = std::function<void(const Wtformer&, int step)>;

/// Optimizes `model` in place under the FGL/FIBL schedule.
Stage1Result train_stage1(Wtformer& model, std::span<const Sample> dataset, const Stage1Config& cfg,
                          const DiagnosticHook& on_nan = {});

/// Mean FIBL of the model's coarse output over the samples (inference mode).
double evaluate_fibl(const Wtformer& model, std::span<const Sample> dataset,
                     const losses::FiblConfig& cfg);

}  // namespace wavec2r::wtformer
