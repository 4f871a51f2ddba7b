#pragma once

#include <string_view>
#include <vector>

#include "wavec2r/tensor.hpp"

namespace wavec2r {

enum class Modality { vis, ir069, ir107, lightning, vil, generic };

std::string_view modality_name(Modality m);
Modality modality_from_name(std::string_view name);

/// Single-channel H x W grid of doubles.
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, double fill = 0.0, Modality modality = Modality::generic);
  Raster(int height, int width, std::vector<double> values, Modality modality = Modality::generic);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }
  Modality modality() const noexcept { return modality_; }
  void set_modality(Modality m) noexcept { modality_ = m; }

  double& operator()(int r, int c) { return values_[static_cast<std::size_t>(r) * width_ + c]; }
  double operator()(int r, int c) const { return values_[static_cast<std::size_t>(r) * width_ + c]; }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool same_shape(const Raster& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const;
  double min() const;
  double max() const;

  /// (1, 1, H, W) tensor view copy.
  Tensor to_tensor() const;
  static Raster from_tensor(const Tensor& t, int n = 0, int c = 0,
                            Modality modality = Modality::generic);

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
  Modality modality_ = Modality::generic;
};

}  // namespace wavec2r
