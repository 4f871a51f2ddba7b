#include "wavec2r/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wavec2r/errors.hpp"

namespace wavec2r::plot {

Image::Image(int w, int h, Rgb background) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw ValidationError("image dimensions must be positive");
  rgb.resize(static_cast<std::size_t>(w) * h * 3);
  fill_rect(0, 0, w, h, background);
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  rgb[i] = c.r;
  rgb[i + 1] = c.g;
  rgb[i + 2] = c.b;
}

void Image::fill_rect(int x, int y, int w, int h, Rgb c) {
  for (int yy = y; yy < y + h; ++yy)
    for (int xx = x; xx < x + w; ++xx) set(xx, yy, c);
}

int colormap_level(double raw) {
  int level = 0;
  for (double b : kLevelBoundaries)
    if (raw >= b) ++level;
  return level;
}

Rgb level_color(int level) {
  static constexpr Rgb kColors[] = {
      {235, 235, 235}, {120, 190, 120}, {40, 140, 60}, {240, 220, 60}, {240, 140, 40}, {200, 30, 40},
  };
  return kColors[std::clamp(level, 0, 5)];
}

Rgb vil_color(double raw) { return level_color(colormap_level(raw)); }

Rgb gray(double raw) {
  const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(raw, 0.0, 255.0)));
  return {v, v, v};
}

Image render_panels(std::span<const Panel> panels, int zoom) {
  if (panels.empty()) throw ValidationError("render_panels: no panels");
  if (zoom <= 0) throw ValidationError("render_panels: zoom must be positive");
  const int h = panels[0].raw.height(), w = panels[0].raw.width();
  for (const Panel& p : panels)
    if (p.raw.height() != h || p.raw.width() != w) throw ValidationError("render_panels: panel shapes differ");
  constexpr int kGap = 8, kLegend = 16;
  const int n = static_cast<int>(panels.size());
  Image img(n * w * zoom + (n + 1) * kGap, h * zoom + 3 * kGap + kLegend);
  for (int k = 0; k < n; ++k) {
    const int x0 = kGap + k * (w * zoom + kGap);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double v = panels[k].raw(r, c);
        const Rgb col = panels[k].style == PanelStyle::vil ? vil_color(v) : gray(v);
        img.fill_rect(x0 + c * zoom, kGap + r * zoom, zoom, zoom, col);
      }
  }
  const int ly = h * zoom + 2 * kGap;
  const int cell = std::max(4, (img.width - 2 * kGap) / 6);
  for (int level = 0; level < 6; ++level) img.fill_rect(kGap + level * cell, ly, cell - 2, kLegend, level_color(level));
  return img;
}

Image render_scores(const metrics::MetricReport& report) {
  const int n = static_cast<int>(report.per_threshold.size());
  if (n == 0) throw ValidationError("render_scores: report has no thresholds");
  constexpr int kBar = 14, kGroupGap = 18, kHalf = 100, kPad = 10;
  Image img(2 * kPad + n * (2 * kBar + kGroupGap), 2 * kPad + 2 * kHalf + 1);
  const int zero = kPad + kHalf;
  const Rgb csi_color{40, 90, 180}, hss_color{230, 120, 30};
  auto bar = [&](int x, const std::optional<double>& v, Rgb c) {
    if (!v) return;
    const int len = static_cast<int>(std::lround(std::clamp(*v, -1.0, 1.0) * kHalf));
    if (len >= 0) img.fill_rect(x, zero - len, kBar, len, c);
    else img.fill_rect(x, zero + 1, kBar, -len, c);
  };
  for (int i = 0; i < n; ++i) {
    const int x = kPad + i * (2 * kBar + kGroupGap);
    bar(x, report.per_threshold[i].csi, csi_color);
    bar(x + kBar, report.per_threshold[i].hss, hss_color);
  }
  img.fill_rect(0, zero, img.width, 1, {0, 0, 0});
  return img;
}

void write_png(const Image& image, const std::string& path) {
  if (image.width <= 0 || image.height <= 0) throw ValidationError("write_png: empty image");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot write image " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("PNG encoding failed for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, image.rgb.data() + static_cast<std::size_t>(y) * image.width * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw IoError("write failed for image " + path);
}

}  // namespace wavec2r::plot
