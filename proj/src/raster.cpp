#include "wavec2r/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wavec2r/errors.hpp"

namespace wavec2r {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::vis: return "vis";
    case Modality::ir069: return "ir069";
    case Modality::ir107: return "ir107";
    case Modality::lightning: return "lightning";
    case Modality::vil: return "vil";
    case Modality::generic: return "generic";
  }
  return "generic";
}

Modality modality_from_name(std::string_view name) {
  for (Modality m : {Modality::vis, Modality::ir069, Modality::ir107, Modality::lightning,
                     Modality::vil, Modality::generic}) {
    if (modality_name(m) == name) return m;
  }
  throw ValidationError("unknown modality '" + std::string(name) + "'");
}

Raster::Raster(int height, int width, double fill, Modality modality)
    : height_(height), width_(width), modality_(modality) {
  if (height <= 0 || width <= 0) {
    throw ValidationError("raster dimensions must be positive, got " + std::to_string(height) +
                          "x" + std::to_string(width));
  }
  values_.assign(static_cast<std::size_t>(height) * width, fill);
}

Raster::Raster(int height, int width, std::vector<double> values, Modality modality)
    : height_(height), width_(width), values_(std::move(values)), modality_(modality) {
  if (height <= 0 || width <= 0) {
    throw ValidationError("raster dimensions must be positive");
  }
  if (values_.size() != static_cast<std::size_t>(height) * width) {
    throw ValidationError("raster value count does not match " + std::to_string(height) + "x" +
                          std::to_string(width));
  }
}

bool Raster::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double Raster::min() const { return *std::min_element(values_.begin(), values_.end()); }
double Raster::max() const { return *std::max_element(values_.begin(), values_.end()); }

Tensor Raster::to_tensor() const { return Tensor({1, 1, height_, width_}, values_); }

Raster Raster::from_tensor(const Tensor& t, int n, int c, Modality modality) {
  if (t.rank() != 4) throw ValidationError("expected an NCHW tensor, got " + to_string(t.shape()));
  const int h = t.dim(2), w = t.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t offset = (static_cast<std::size_t>(n) * t.dim(1) + c) * plane;
  std::vector<double> v(t.data() + offset, t.data() + offset + plane);
  return Raster(h, w, std::move(v), modality);
}

}  // namespace wavec2r
