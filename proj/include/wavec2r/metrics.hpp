#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wavec2r/raster.hpp"

namespace wavec2r::metrics {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

/// Binarizes both fields at value >= threshold.
ConfusionCounts confusion(const Raster& pred, const Raster& target, double threshold);

/// tp / (tp + fp + fn); nullopt when the denominator is 0.
std::optional<double> csi(const ConfusionCounts& c);

/// 2(tp tn - fn fp) / ((tp + fn)(fn + tn) + (tp + fp)(fp + tn)); nullopt when
/// the denominator is 0.
std::optional<double> hss(const ConfusionCounts& c);

/// Max-pool with kernel = stride = pool (H and W must be divisible).
Raster max_pool(const Raster& field, int pool);

/// Counts after max-pooling both raw fields.
ConfusionCounts pooled_confusion(const Raster& pred, const Raster& target, double threshold, int pool);
std::optional<double> pooled_csi(const Raster& pred, const Raster& target, double threshold, int pool);

/// Mean local SSIM, 11x11 Gaussian window with sigma 1.5, C1 = 0.01^2,
/// C2 = 0.03^2. Windows are truncated at the border and renormalized.
double ssim(const Raster& pred, const Raster& target);

inline constexpr const char* kPoolingRecipe = "maxpool(kernel=stride=pool)->threshold v1";

struct ThresholdScore {
  double threshold = 0.0;
  ConfusionCounts counts;
  std::optional<double> csi;
  std::optional<double> hss;
  std::optional<double> csi_pool4;
  std::optional<double> csi_pool16;
};

struct MetricReport {
  std::vector<ThresholdScore> per_threshold;
  /// Means over thresholds with defined scores; nullopt when none is defined.
  std::optional<double> avg_csi;
  std::optional<double> avg_hss;
  std::optional<double> csi_pool4;
  std::optional<double> csi_pool16;
  double ssim = 0.0;
  std::size_t samples = 0;
  /// Filled by an external perceptual-score adapter; never computed here.
  std::optional<double> lpips;
  std::string pooling_recipe = kPoolingRecipe;
  std::string label;
};

/// Raw-scale (0-255) predictions and targets. Counts are pooled over all
/// samples before ratios are taken; SSIM is the per-sample mean on raw / 255.
MetricReport report(std::span<const Raster> pred, std::span<const Raster> target,
                    std::span<const double> thresholds = {});

/// key = value lines.
std::string to_text(const MetricReport& r);
std::string to_json(const MetricReport& r);
MetricReport report_from_json(const std::string& json);

}  // namespace wavec2r::metrics
