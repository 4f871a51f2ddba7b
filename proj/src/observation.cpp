#include "wavec2r/observation.hpp"

#include <algorithm>
#include <string>

#include "wavec2r/errors.hpp"

namespace wavec2r {

std::vector<Modality> canonical_modalities() {
  return {Modality::vis, Modality::ir069, Modality::ir107, Modality::lightning};
}

Raster ObservationStack::channel(int index) const {
  const int h = height(), w = width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const double* src = channels.data() + static_cast<std::size_t>(index) * plane;
  return Raster(h, w, std::vector<double>(src, src + plane), modalities.at(static_cast<std::size_t>(index)));
}

int ObservationStack::index_of(Modality m) const {
  const auto it = std::find(modalities.begin(), modalities.end(), m);
  return it == modalities.end() ? -1 : static_cast<int>(it - modalities.begin());
}

ObservationStack ObservationStack::without(Modality m) const {
  const int drop = index_of(m);
  if (drop < 0) return *this;
  const int c = channel_count(), h = height(), w = width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  ObservationStack out;
  out.channels = Tensor({c - 1, h, w});
  out.normalized = normalized;
  int k = 0;
  for (int i = 0; i < c; ++i) {
    if (i == drop) continue;
    std::copy(channels.data() + i * plane, channels.data() + (i + 1) * plane,
              out.channels.data() + k * plane);
    out.modalities.push_back(modalities[i]);
    if (!normalization.empty()) out.normalization.push_back(normalization[i]);
    ++k;
  }
  return out;
}

void ObservationStack::validate() const {
  if (channels.rank() != 3) throw ValidationError("observation stack must be (C, H, W)");
  if (modalities.size() != static_cast<std::size_t>(channel_count())) {
    throw ValidationError("observation stack: modality list does not match channel count");
  }
  if (!normalization.empty() && normalization.size() != modalities.size()) {
    throw ValidationError("observation stack: normalization list does not match channel count");
  }
  if (!channels.all_finite()) throw ValidationError("observation stack contains non-finite values");
}

Tensor batch_stacks(std::span<const ObservationStack> stacks) {
  if (stacks.empty()) throw ValidationError("batch_stacks: empty batch");
  const Shape& s = stacks[0].channels.shape();
  Tensor out({static_cast<int>(stacks.size()), s[0], s[1], s[2]});
  const std::size_t per = stacks[0].channels.size();
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    if (stacks[i].channels.shape() != s) {
      throw ValidationError("batch_stacks: inconsistent shapes " + to_string(s) + " and " +
                            to_string(stacks[i].channels.shape()));
    }
    std::copy(stacks[i].channels.data(), stacks[i].channels.data() + per, out.data() + i * per);
  }
  return out;
}

Tensor batch_rasters(std::span<const Raster> rasters) {
  if (rasters.empty()) throw ValidationError("batch_rasters: empty batch");
  const int h = rasters[0].height(), w = rasters[0].width();
  Tensor out({static_cast<int>(rasters.size()), 1, h, w});
  const std::size_t per = rasters[0].size();
  for (std::size_t i = 0; i < rasters.size(); ++i) {
    if (!rasters[i].same_shape(rasters[0])) throw ValidationError("batch_rasters: inconsistent shapes");
    std::copy(rasters[i].values().begin(), rasters[i].values().end(), out.data() + i * per);
  }
  return out;
}

}  // namespace wavec2r
