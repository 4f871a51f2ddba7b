#pragma once

#include <span>
#include <vector>

#include "wavec2r/raster.hpp"
#include "wavec2r/tensor.hpp"

namespace wavec2r {

/// normalized = (raw - offset) / scale
struct ChannelNormalization {
  double offset = 0.0;
  double scale = 1.0;
};

/// Multi-source satellite input X: (C, H, W) in the order given by
/// `modalities`, canonically [vis, ir069, ir107, lightning].
struct ObservationStack {
  Tensor channels;
  std::vector<Modality> modalities;
  std::vector<ChannelNormalization> normalization;
  bool normalized = false;

  int channel_count() const { return channels.dim(0); }
  int height() const { return channels.dim(1); }
  int width() const { return channels.dim(2); }

  Raster channel(int index) const;
  /// Index of `m`, or -1.
  int index_of(Modality m) const;

  /// Copy with the vis channel removed (C = 3).
  ObservationStack without(Modality m) const;

  /// Throws ValidationError on shape/metadata inconsistency or non-finite values.
  void validate() const;
};

std::vector<Modality> canonical_modalities();

/// Single-channel Stage-I output, normalized radar field.
using CoarseEstimate = Raster;

/// Stacks per-sample stacks into (N, C, H, W).
Tensor batch_stacks(std::span<const ObservationStack> stacks);
/// Stacks rasters into (N, 1, H, W).
Tensor batch_rasters(std::span<const Raster> rasters);

}  // namespace wavec2r
