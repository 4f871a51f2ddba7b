#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wavec2r/data.hpp"
#include "wavec2r/diffusion.hpp"
#include "wavec2r/losses.hpp"
#include "wavec2r/wtformer.hpp"

namespace wavec2r::config {

enum class DataSource { synthetic, archive };

struct DataSection {
  DataSource source = DataSource::synthetic;
  std::string archive;
  int events = 16;
  data::SyntheticStormSpec spec{.height = 32, .width = 32, .min_radius = 2.0, .max_radius = 6.5};
  std::uint64_t split_seed = 0;
  std::array<double, 3> fractions{0.5, 0.0, 0.5};
};

struct ModelSection {
  std::array<int, 2> widths{32, 64};
  int heads = 4;
  int window = 8;
  int expansion = 2;
  bool use_wtf = true;
  bool use_vis = true;
  std::string basis = "haar";
};

struct LossSection {
  wtformer::AlphaMode alpha_mode = wtformer::AlphaMode::fixed;
  double alpha = 1.0;
  std::array<double, 3> w_d{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  double alpha_min = 0.1;
  double alpha_max = 10.0;
  double lambda_freq = 0.1;
  losses::ScheduleDirection direction = losses::ScheduleDirection::as_described;
};

struct DiffusionSection {
  int steps = 1000;
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::linear;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int sampler_steps = 50;
  diffusion::SamplerKind sampler = diffusion::SamplerKind::deterministic;
  bool residual = false;
  bool use_hlf = true;
  std::array<int, 2> widths{32, 64};
  int feature_width = 16;
  double sigma_data = 0.5;
  double learning_rate = 1e-3;
};

struct RunSection {
  std::uint64_t seed = 0;
  int stage1_steps = 200;
  int stage2_steps = 500;
  int batch_size = 8;
  double learning_rate = 2e-4;
  double clip_norm = 1.0;
  std::string checkpoint_dir;
};

/// Every knob of a run; a run is reproducible from this plus its seed.
struct RunConfig {
  DataSection data;
  ModelSection model;
  LossSection loss;
  DiffusionSection diffusion;
  RunSection run;

  /// Throws ConfigurationError on out-of-range or inconsistent values.
  void validate() const;

  wtformer::WtformerConfig wtformer_config() const;
  wtformer::Stage1Config stage1_config() const;
  diffusion::DenoiserConfig denoiser_config() const;
  diffusion::Stage2Config stage2_config() const;
  diffusion::NoiseSchedule noise_schedule() const;
  losses::FiblConfig fibl_config() const;
  int input_channels() const { return model.use_vis ? 4 : 3; }
};

/// Environment variable supplying run.checkpoint_dir when neither the file
/// nor a flag sets it.
inline constexpr const char* kCheckpointDirEnv = "WAVEC2R_CHECKPOINT_DIR";

/// INI text with sections [data], [model], [loss], [diffusion], [run].
/// Unknown keys are rejected.
RunConfig parse(const std::string& ini_text);
RunConfig load(const std::string& path);

/// Applies "section.key=value" overrides in order.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

/// Canonical INI rendering; parse(to_ini(c)) reproduces c.
std::string to_ini(const RunConfig& cfg);

/// Writes to_ini(cfg) to `path`.
void save_snapshot(const RunConfig& cfg, const std::string& path);

}  // namespace wavec2r::config
