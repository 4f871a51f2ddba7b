#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>

#include "wavec2r/raster.hpp"

namespace wavec2r::wavelet {

enum class Basis { haar_orthonormal };

enum class SubBand { ll = 0, lh = 1, hl = 2, hh = 3 };

/// Set of sub-bands to keep in a selective reconstruction.
class BandSet {
 public:
  constexpr BandSet() = default;
  constexpr BandSet(std::initializer_list<SubBand> bands) {
    for (SubBand b : bands) bits_ |= 1u << static_cast<unsigned>(b);
  }
  constexpr bool contains(SubBand b) const { return (bits_ >> static_cast<unsigned>(b)) & 1u; }
  constexpr bool empty() const { return bits_ == 0; }

  static constexpr BandSet all() { return {SubBand::ll, SubBand::lh, SubBand::hl, SubBand::hh}; }
  static constexpr BandSet details() { return {SubBand::lh, SubBand::hl, SubBand::hh}; }

 private:
  unsigned bits_ = 0;
};

struct DwtOptions {
  /// Odd dimensions are extended by repeating the last row/column instead of
  /// being rejected. The inverse crops back to the source shape.
  bool pad_symmetric = false;
};

/// One decomposition level. All bands are (ceil(H/2), ceil(W/2)).
struct WaveletPyramid {
  Raster ll;
  Raster lh;
  Raster hl;
  Raster hh;
  Basis basis = Basis::haar_orthonormal;
  int source_height = 0;
  int source_width = 0;

  const Raster& band(SubBand b) const;
  Raster& band(SubBand b);
};

// Orientation convention for a 2x2 block [[a, b], [c, d]]:
//   ll = (a + b + c + d) / 2
//   lh = (a + b - c - d) / 2   low-pass along a row, high-pass down a column
//                              (responds to horizontal edges)
//   hl = (a - b + c - d) / 2   high-pass along a row (vertical edges)
//   hh = (a - b - c + d) / 2   diagonal
// The transform is orthonormal, so the inverse is its transpose.

/// Plane kernel: `in` is H x W row-major with even H, W; each band is
/// (H/2) x (W/2).
template <typename T>
void haar_forward(std::span<const T> in, int height, int width, std::span<T> ll,
                  std::span<T> lh, std::span<T> hl, std::span<T> hh) {
  const int oh = height / 2;
  const int ow = width / 2;
  const T half = T(0.5);
  for (int r = 0; r < oh; ++r) {
    const T* top = in.data() + static_cast<std::size_t>(2 * r) * width;
    const T* bot = top + width;
    for (int c = 0; c < ow; ++c) {
      const T a = top[2 * c], b = top[2 * c + 1];
      const T d0 = bot[2 * c], d1 = bot[2 * c + 1];
      const std::size_t o = static_cast<std::size_t>(r) * ow + c;
      ll[o] = half * ((a + b) + (d0 + d1));
      lh[o] = half * ((a + b) - (d0 + d1));
      hl[o] = half * ((a - b) + (d0 - d1));
      hh[o] = half * ((a - b) - (d0 - d1));
    }
  }
}

template <typename T>
void haar_inverse(std::span<const T> ll, std::span<const T> lh, std::span<const T> hl,
                  std::span<const T> hh, int height, int width, std::span<T> out) {
  const int oh = height / 2;
  const int ow = width / 2;
  const T half = T(0.5);
  for (int r = 0; r < oh; ++r) {
    T* top = out.data() + static_cast<std::size_t>(2 * r) * width;
    T* bot = top + width;
    for (int c = 0; c < ow; ++c) {
      const std::size_t o = static_cast<std::size_t>(r) * ow + c;
      const T s = ll[o], v = lh[o], h = hl[o], d = hh[o];
      top[2 * c] = half * ((s + v) + (h + d));
      top[2 * c + 1] = half * ((s + v) - (h + d));
      bot[2 * c] = half * ((s - v) + (h - d));
      bot[2 * c + 1] = half * ((s - v) - (h - d));
    }
  }
}

WaveletPyramid dwt2(const Raster& field, Basis basis = Basis::haar_orthonormal,
                    DwtOptions options = {});

Raster idwt2(const WaveletPyramid& pyramid);

/// Zeroes the bands not in `keep`, then inverts.
Raster selective_reconstruct(const WaveletPyramid& pyramid, BandSet keep);

/// Elementwise lh + hl + hh.
Raster aggregate_high(const WaveletPyramid& pyramid);

double energy(const Raster& r);

/// Detail energy over total energy of one DWT level; 0 for an all-zero field.
double high_frequency_ratio(const Raster& field);

}  // namespace wavec2r::wavelet
