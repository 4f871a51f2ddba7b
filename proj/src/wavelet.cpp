#include "wavec2r/wavelet.hpp"

#include <algorithm>
#include <string>

#include "wavec2r/errors.hpp"

namespace wavec2r::wavelet {

const Raster& WaveletPyramid::band(SubBand b) const {
  switch (b) {
    case SubBand::ll: return ll;
    case SubBand::lh: return lh;
    case SubBand::hl: return hl;
    case SubBand::hh: return hh;
  }
  return ll;
}

Raster& WaveletPyramid::band(SubBand b) {
  return const_cast<Raster&>(static_cast<const WaveletPyramid&>(*this).band(b));
}

namespace {

Raster pad_to_even(const Raster& field) {
  const int h = field.height() + (field.height() % 2);
  const int w = field.width() + (field.width() % 2);
  Raster out(h, w, 0.0, field.modality());
  for (int r = 0; r < h; ++r) {
    const int sr = std::min(r, field.height() - 1);
    for (int c = 0; c < w; ++c) out(r, c) = field(sr, std::min(c, field.width() - 1));
  }
  return out;
}

void check_basis(Basis basis) {
  if (basis != Basis::haar_orthonormal) throw ValidationError("unsupported wavelet basis");
}

}  // namespace

WaveletPyramid dwt2(const Raster& field, Basis basis, DwtOptions options) {
  check_basis(basis);
  if (!field.all_finite()) throw ValidationError("dwt2: input contains non-finite values");
  const bool odd = (field.height() % 2) || (field.width() % 2);
  if (odd && !options.pad_symmetric) {
    throw ValidationError("dwt2: dimensions must be even, got " + std::to_string(field.height()) +
                          "x" + std::to_string(field.width()));
  }
  Raster padded;
  if (odd) padded = pad_to_even(field);
  const Raster& in = odd ? padded : field;

  const int oh = in.height() / 2, ow = in.width() / 2;
  WaveletPyramid p{Raster(oh, ow), Raster(oh, ow), Raster(oh, ow), Raster(oh, ow), basis,
                   field.height(), field.width()};
  haar_forward<double>(in.values(), in.height(), in.width(), p.ll.values(), p.lh.values(),
                       p.hl.values(), p.hh.values());
  return p;
}

Raster idwt2(const WaveletPyramid& p) {
  check_basis(p.basis);
  if (!p.ll.same_shape(p.lh) || !p.ll.same_shape(p.hl) || !p.ll.same_shape(p.hh)) {
    throw ValidationError("idwt2: sub-band shapes differ");
  }
  const int h = p.ll.height() * 2, w = p.ll.width() * 2;
  const int sh = p.source_height > 0 ? p.source_height : h;
  const int sw = p.source_width > 0 ? p.source_width : w;
  if (sh > h || sw > w || sh < h - 1 || sw < w - 1) {
    throw ValidationError("idwt2: source shape inconsistent with sub-band shape");
  }
  Raster full(h, w);
  haar_inverse<double>(p.ll.values(), p.lh.values(), p.hl.values(), p.hh.values(), h, w,
                       full.values());
  if (sh == h && sw == w) return full;
  Raster cropped(sh, sw);
  for (int r = 0; r < sh; ++r)
    for (int c = 0; c < sw; ++c) cropped(r, c) = full(r, c);
  return cropped;
}

Raster selective_reconstruct(const WaveletPyramid& pyramid, BandSet keep) {
  if (keep.empty()) throw ValidationError("selective_reconstruct: keep set is empty");
  WaveletPyramid masked = pyramid;
  for (SubBand b : {SubBand::ll, SubBand::lh, SubBand::hl, SubBand::hh}) {
    if (!keep.contains(b)) {
      auto& v = masked.band(b).values();
      std::fill(v.begin(), v.end(), 0.0);
    }
  }
  return idwt2(masked);
}

Raster aggregate_high(const WaveletPyramid& p) {
  if (!p.lh.same_shape(p.hl) || !p.lh.same_shape(p.hh)) {
    throw ValidationError("aggregate_high: sub-band shapes differ");
  }
  Raster out(p.lh.height(), p.lh.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = p.lh.values()[i] + p.hl.values()[i] + p.hh.values()[i];
  }
  return out;
}

double energy(const Raster& r) {
  double e = 0.0;
  for (double v : r.values()) e += v * v;
  return e;
}

double high_frequency_ratio(const Raster& field) {
  const WaveletPyramid p = dwt2(field, Basis::haar_orthonormal, {.pad_symmetric = true});
  const double detail = energy(p.lh) + energy(p.hl) + energy(p.hh);
  const double total = detail + energy(p.ll);
  return total > 0.0 ? detail / total : 0.0;
}

}  // namespace wavec2r::wavelet
