#include "wavec2r/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "wavec2r/errors.hpp"

namespace wavec2r::metrics {

namespace {

void require_same(const Raster& a, const Raster& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ValidationError(std::string(what) + ": shape mismatch " + std::to_string(a.height()) + "x" +
                          std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                          std::to_string(b.width()));
  }
}

}  // namespace

ConfusionCounts confusion(const Raster& pred, const Raster& target, double threshold) {
  require_same(pred, target, "confusion");
  ConfusionCounts c;
  const auto p = pred.values(), t = target.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool hp = p[i] >= threshold, ht = t[i] >= threshold;
    if (hp && ht) ++c.tp;
    else if (hp) ++c.fp;
    else if (ht) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::optional<double> csi(const ConfusionCounts& c) {
  const std::uint64_t d = c.tp + c.fp + c.fn;
  if (d == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(d);
}

std::optional<double> hss(const ConfusionCounts& c) {
  const double tp = c.tp, fp = c.fp, fn = c.fn, tn = c.tn;
  const double d = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn);
  if (d == 0.0) return std::nullopt;
  return 2.0 * (tp * tn - fn * fp) / d;
}

Raster max_pool(const Raster& field, int pool) {
  if (pool <= 0) throw ValidationError("max_pool: pool must be positive");
  if (field.height() % pool || field.width() % pool) {
    throw ValidationError("max_pool: " + std::to_string(field.height()) + "x" + std::to_string(field.width()) +
                          " is not divisible by pool " + std::to_string(pool));
  }
  if (pool == 1) return field;
  Raster out(field.height() / pool, field.width() / pool, -INFINITY, field.modality());
  for (int r = 0; r < field.height(); ++r)
    for (int c = 0; c < field.width(); ++c) {
      double& m = out(r / pool, c / pool);
      m = std::max(m, field(r, c));
    }
  return out;
}

ConfusionCounts pooled_confusion(const Raster& pred, const Raster& target, double threshold, int pool) {
  require_same(pred, target, "pooled_csi");
  return confusion(max_pool(pred, pool), max_pool(target, pool), threshold);
}

std::optional<double> pooled_csi(const Raster& pred, const Raster& target, double threshold, int pool) {
  return csi(pooled_confusion(pred, target, threshold, pool));
}

double ssim(const Raster& pred, const Raster& target) {
  require_same(pred, target, "ssim");
  constexpr int kRadius = 5;
  constexpr double kSigma = 1.5, kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  double kernel[2 * kRadius + 1];
  for (int i = -kRadius; i <= kRadius; ++i) kernel[i + kRadius] = std::exp(-0.5 * i * i / (kSigma * kSigma));

  const int h = pred.height(), w = pred.width();
  double total = 0.0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double sw = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = -kRadius; dy <= kRadius; ++dy) {
        const int y = r + dy;
        if (y < 0 || y >= h) continue;
        for (int dx = -kRadius; dx <= kRadius; ++dx) {
          const int x = c + dx;
          if (x < 0 || x >= w) continue;
          const double k = kernel[dy + kRadius] * kernel[dx + kRadius];
          const double a = pred(y, x), b = target(y, x);
          sw += k;
          sx += k * a;
          sy += k * b;
          sxx += k * a * a;
          syy += k * b * b;
          sxy += k * a * b;
        }
      }
      const double mx = sx / sw, my = sy / sw;
      const double vx = std::max(0.0, sxx / sw - mx * mx), vy = std::max(0.0, syy / sw - my * my);
      const double cov = sxy / sw - mx * my;
      total += (2 * mx * my + kC1) * (2 * cov + kC2) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
    }
  return total / (static_cast<double>(h) * w);
}

namespace {

std::optional<double> mean_defined(const std::vector<std::optional<double>>& v) {
  double s = 0.0;
  int n = 0;
  for (const auto& x : v)
    if (x) {
      s += *x;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / n;
}

}  // namespace

MetricReport report(std::span<const Raster> pred, std::span<const Raster> target,
                    std::span<const double> thresholds) {
  if (pred.empty()) throw ValidationError("report: empty prediction set");
  if (pred.size() != target.size()) throw ValidationError("report: prediction and target counts differ");
  static constexpr double kDefault[] = {74.0, 133.0, 160.0, 181.0, 219.0};
  if (thresholds.empty()) thresholds = kDefault;

  MetricReport r;
  r.samples = pred.size();
  const bool pool4 = pred[0].height() % 4 == 0 && pred[0].width() % 4 == 0;
  const bool pool16 = pred[0].height() % 16 == 0 && pred[0].width() % 16 == 0;
  for (double thr : thresholds) {
    ThresholdScore s;
    s.threshold = thr;
    ConfusionCounts p4, p16;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      s.counts += confusion(pred[i], target[i], thr);
      if (pool4) p4 += pooled_confusion(pred[i], target[i], thr, 4);
      if (pool16) p16 += pooled_confusion(pred[i], target[i], thr, 16);
    }
    s.csi = csi(s.counts);
    s.hss = hss(s.counts);
    if (pool4) s.csi_pool4 = csi(p4);
    if (pool16) s.csi_pool16 = csi(p16);
    r.per_threshold.push_back(s);
  }
  auto collect = [&](auto member) {
    std::vector<std::optional<double>> v;
    for (const auto& s : r.per_threshold) v.push_back(s.*member);
    return mean_defined(v);
  };
  r.avg_csi = collect(&ThresholdScore::csi);
  r.avg_hss = collect(&ThresholdScore::hss);
  r.csi_pool4 = collect(&ThresholdScore::csi_pool4);
  r.csi_pool16 = collect(&ThresholdScore::csi_pool16);

  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    Raster a = pred[i], b = target[i];
    for (double& v : a.values()) v /= 255.0;
    for (double& v : b.values()) v /= 255.0;
    total += ssim(a, b);
  }
  r.ssim = total / static_cast<double>(pred.size());
  return r;
}

// ------------------------------------------------------------- serialization

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "undefined";
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << *v;
  return os.str();
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::string to_text(const MetricReport& r) {
  std::ostringstream os;
  if (!r.label.empty()) os << "label = " << r.label << "\n";
  os << "samples = " << r.samples << "\n";
  for (const auto& s : r.per_threshold) {
    const auto t = static_cast<long>(std::lround(s.threshold));
    os << "csi_" << t << " = " << fmt(s.csi) << "\n";
    os << "hss_" << t << " = " << fmt(s.hss) << "\n";
  }
  os << "avg_csi = " << fmt(r.avg_csi) << "\n";
  os << "avg_hss = " << fmt(r.avg_hss) << "\n";
  os << "csi_pool4 = " << fmt(r.csi_pool4) << "\n";
  os << "csi_pool16 = " << fmt(r.csi_pool16) << "\n";
  os << "ssim = " << fmt(r.ssim) << "\n";
  os << "lpips = " << (r.lpips ? fmt(r.lpips) : "not computed") << "\n";
  os << "pooling_recipe = " << r.pooling_recipe << "\n";
  return os.str();
}

std::string to_json(const MetricReport& r) {
  nlohmann::json j;
  j["label"] = r.label;
  j["samples"] = r.samples;
  j["per_threshold"] = nlohmann::json::array();
  for (const auto& s : r.per_threshold) {
    j["per_threshold"].push_back({{"threshold", s.threshold},
                                  {"tp", s.counts.tp},
                                  {"fp", s.counts.fp},
                                  {"fn", s.counts.fn},
                                  {"tn", s.counts.tn},
                                  {"csi", opt(s.csi)},
                                  {"hss", opt(s.hss)},
                                  {"csi_pool4", opt(s.csi_pool4)},
                                  {"csi_pool16", opt(s.csi_pool16)}});
  }
  j["avg_csi"] = opt(r.avg_csi);
  j["avg_hss"] = opt(r.avg_hss);
  j["csi_pool4"] = opt(r.csi_pool4);
  j["csi_pool16"] = opt(r.csi_pool16);
  j["ssim"] = r.ssim;
  j["lpips"] = opt(r.lpips);
  j["pooling_recipe"] = r.pooling_recipe;
  return j.dump(2);
}

MetricReport report_from_json(const std::string& text) {
  MetricReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.label = j.value("label", "");
    r.samples = j.at("samples").get<std::size_t>();
    for (const auto& e : j.at("per_threshold")) {
      ThresholdScore s;
      s.threshold = e.at("threshold").get<double>();
      s.counts = {e.at("tp").get<std::uint64_t>(), e.at("fp").get<std::uint64_t>(), e.at("fn").get<std::uint64_t>(),
                  e.at("tn").get<std::uint64_t>()};
      s.csi = opt_from(e, "csi");
      s.hss = opt_from(e, "hss");
      s.csi_pool4 = opt_from(e, "csi_pool4");
      s.csi_pool16 = opt_from(e, "csi_pool16");
      r.per_threshold.push_back(s);
    }
    r.avg_csi = opt_from(j, "avg_csi");
    r.avg_hss = opt_from(j, "avg_hss");
    r.csi_pool4 = opt_from(j, "csi_pool4");
    r.csi_pool16 = opt_from(j, "csi_pool16");
    r.ssim = j.at("ssim").get<double>();
    r.lpips = opt_from(j, "lpips");
    r.pooling_recipe = j.value("pooling_recipe", std::string(kPoolingRecipe));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed metric report: ") + e.what());
  }
  return r;
}

}  // namespace wavec2r::metrics
