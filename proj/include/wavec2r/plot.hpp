#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wavec2r/metrics.hpp"
#include "wavec2r/raster.hpp"

namespace wavec2r::plot {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Image() = default;
  Image(int w, int h, Rgb background = {255, 255, 255});
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  void fill_rect(int x, int y, int w, int h, Rgb c);
};

/// Raw-scale VIL level boundaries of the discrete colormap.
inline constexpr std::array<double, 5> kLevelBoundaries{74.0, 133.0, 160.0, 181.0, 219.0};

/// 0 below 74, k for kLevelBoundaries[k-1] <= v < kLevelBoundaries[k], 5 at or above 219.
int colormap_level(double raw);
Rgb level_color(int level);
Rgb vil_color(double raw);
Rgb gray(double raw);

enum class PanelStyle { vil, grayscale };

struct Panel {
  Raster raw;  // 0-255 scale
  PanelStyle style = PanelStyle::vil;
};

/// Panels side by side, each pixel scaled by `zoom`, with a legend strip of
/// the six colormap levels underneath.
Image render_panels(std::span<const Panel> panels, int zoom = 4);

/// Per-threshold bars: CSI then HSS for each threshold, zero line marked.
/// Undefined scores are left empty.
Image render_scores(const metrics::MetricReport& report);

/// Deterministic PNG (no timestamps or text chunks). Throws IoError.
void write_png(const Image& image, const std::string& path);

}  // namespace wavec2r::plot
