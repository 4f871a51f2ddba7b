#pragma once

#include <random>
#include <string>

#include "wavec2r/nn.hpp"

namespace wavec2r::nn {

/// Pre-activation residual block: GN-GELU-Conv3x3 (strided when
/// downsampling), optional time-embedding add, GN-GELU-Conv3x3, plus a 1x1
/// projection shortcut when the shape changes. With the second convolution
/// zeroed and a plain shortcut the block is the identity.
class ResBlock2D {
 public:
  ResBlock2D() = default;
  ResBlock2D(ParameterSet& params, const std::string& name, int in_channels, int out_channels,
             int stride, std::mt19937_64& rng, int time_dim = 0);

  ag::Var operator()(const ag::Var& x, const ag::Var& time_embedding = ag::Var()) const;
  void zero_output_projection() { conv2_.zero(); }

 private:
  GroupNorm norm1_;
  Conv2d conv1_;
  GroupNorm norm2_;
  Conv2d conv2_;
  Linear time_proj_;
  Conv2d shortcut_;
  bool has_shortcut_ = false;
  bool has_time_ = false;
};

/// Nearest 2x upsample followed by a 3x3 convolution.
class Upsample {
 public:
  Upsample() = default;
  Upsample(ParameterSet& params, const std::string& name, int in_channels, int out_channels,
           std::mt19937_64& rng);
  ag::Var operator()(const ag::Var& x) const { return conv_(ag::upsample_nearest2x(x)); }

 private:
  Conv2d conv_;
};

}  // namespace wavec2r::nn
