#include "wavec2r/data.hpp"

#include <hdf5.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "wavec2r/errors.hpp"

namespace wavec2r::data {

// ------------------------------------------------------------------ synthetic

void SyntheticStormSpec::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("synthetic spec: " + m); };
  if (height < 4 || width < 4) fail("grid must be at least 4x4");
  if (min_cells < 1 || max_cells < min_cells) fail("cell count range must satisfy 1 <= min <= max");
  if (!(min_amplitude >= 0.0 && min_amplitude <= max_amplitude && max_amplitude <= kRawMax)) {
    fail("amplitudes must satisfy 0 <= min <= max <= 255");
  }
  if (max_amplitude < 225.0) fail("max_amplitude must be >= 225 so every threshold is reachable");
  if (!(min_radius > 0.0 && min_radius <= max_radius)) fail("radii must satisfy 0 < min <= max");
  if (!(front_sharpness > 0.0 && std::isfinite(front_sharpness))) fail("front sharpness must be positive");
  if (!(smoothing_sigma > 0.0 && std::isfinite(smoothing_sigma))) fail("smoothing sigma must be positive");
  for (double c : {ir_coupling, vis_coupling, lightning_coupling}) {
    if (!(c >= 0.0 && c <= 1.0)) fail("coupling coefficients must lie in [0, 1]");
  }
}

namespace {

// Separable Gaussian blur, truncated at 3 sigma, edge-clamped.
Raster blur(const Raster& src, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double norm = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= norm;

  const int h = src.height(), w = src.width();
  Raster tmp(h, w), out(h, w, 0.0, src.modality());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * src(r, std::clamp(c + i, 0, w - 1));
      tmp(r, c) = s;
    }
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp(std::clamp(r + i, 0, h - 1), c);
      out(r, c) = s;
    }
  return out;
}

double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string synthetic_timestamp(int index) {
  const std::time_t t = 1559347200 + static_cast<std::time_t>(index) * 300;  // 2019-06-01, 5 min apart
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string synthetic_id(std::uint64_t seed, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "syn%llu_%05d", static_cast<unsigned long long>(seed), index);
  return buf;
}

}  // namespace

std::vector<EventRecord> generate_synthetic(const SyntheticStormSpec& spec, int n) {
  spec.validate();
  if (n < 1) throw ValidationError("generate_synthetic: n must be >= 1");
  const int h = spec.height, w = spec.width;
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  std::vector<EventRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int e = 0; e < n; ++e) {
    const int cells = std::uniform_int_distribution<int>(spec.min_cells, spec.max_cells)(rng);
    Raster field(h, w, 0.0, Modality::vil);
    for (int c = 0; c < cells; ++c) {
      const double amp = uniform(c == 0 ? std::max(225.0, spec.min_amplitude) : spec.min_amplitude,
                                 spec.max_amplitude);
      // The first cell sits on a pixel centre so its peak value is attained.
      const double cy = c == 0 ? std::uniform_int_distribution<int>(0, h - 1)(rng) : uniform(0.0, h - 1.0);
      const double cx = c == 0 ? std::uniform_int_distribution<int>(0, w - 1)(rng) : uniform(0.0, w - 1.0);
      const double ry = uniform(spec.min_radius, spec.max_radius);
      const double rx = uniform(spec.min_radius, spec.max_radius);
      const double theta = uniform(0.0, M_PI);
      const double ct = std::cos(theta), st = std::sin(theta);
      for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col) {
          const double dy = r - cy, dx = col - cx;
          const double u = (ct * dx + st * dy) / rx, v = (-st * dx + ct * dy) / ry;
          field(r, col) += amp * std::exp(-std::pow(u * u + v * v, spec.front_sharpness));
        }
    }
    for (double& v : field.values()) v = std::round(std::clamp(v, 0.0, kRawMax));

    const Raster smooth = blur(field, spec.smoothing_sigma);
    const Raster wide = blur(field, 2.0 * spec.smoothing_sigma);
    Raster cloud(h, w);
    for (std::size_t i = 0; i < cloud.size(); ++i) cloud.values()[i] = field.values()[i] > 16.0 ? 1.0 : 0.0;
    const Raster cloud_blur = blur(cloud, 2.0 * spec.smoothing_sigma);

    Tensor channels({4, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < plane; ++i) {
      const double vil = field.values()[i];
      const double vis = kRawMax * spec.vis_coupling * cloud_blur.values()[i] * (0.6 + 0.4 * smooth.values()[i] / kRawMax);
      const double ir069 = 235.0 - 0.8 * spec.ir_coupling * wide.values()[i];
      const double ir107 = kRawMax - spec.ir_coupling * smooth.values()[i];
      double flash = 0.0;
      if (vil >= 160.0) {
        const double p = spec.lightning_coupling * std::pow((vil - 160.0) / (kRawMax - 160.0), 2.0);
        if (std::bernoulli_distribution(std::clamp(p, 0.0, 1.0))(rng)) flash = spec.lightning_coupling * vil;
      }
      channels[0 * plane + i] = as_float(std::clamp(vis, 0.0, kRawMax));
      channels[1 * plane + i] = as_float(std::clamp(ir069, 0.0, kRawMax));
      channels[2 * plane + i] = as_float(std::clamp(ir107, 0.0, kRawMax));
      channels[3 * plane + i] = as_float(std::clamp(flash, 0.0, kRawMax));
    }

    EventRecord rec;
    rec.event_id = synthetic_id(spec.seed, e);
    rec.timestamp = synthetic_timestamp(e);
    rec.stack.channels = std::move(channels);
    rec.stack.modalities = canonical_modalities();
    rec.target = std::move(field);
    out.push_back(std::move(rec));
  }
  return out;
}

// -------------------------------------------------------------- normalization

EventRecord normalize(const EventRecord& record) {
  if (record.stack.normalized) throw ValidationError("normalize: record " + record.event_id + " is already normalized");
  record.stack.validate();
  EventRecord out = record;
  const int c = record.stack.channel_count();
  const std::size_t plane = static_cast<std::size_t>(record.stack.height()) * record.stack.width();
  out.stack.normalization.assign(static_cast<std::size_t>(c), {});
  for (int k = 0; k < c; ++k) {
    double* v = out.stack.channels.data() + k * plane;
    ChannelNormalization norm{0.0, kRawMax};
    const Modality m = record.stack.modalities[k];
    if (m != Modality::vis && m != Modality::vil) {
      const auto [lo, hi] = std::minmax_element(v, v + plane);
      norm.offset = *lo;
      norm.scale = *hi > *lo ? *hi - *lo : 1.0;
    }
    for (std::size_t i = 0; i < plane; ++i) v[i] = (v[i] - norm.offset) / norm.scale;
    out.stack.normalization[k] = norm;
  }
  out.stack.normalized = true;
  for (double& v : out.target.values()) v /= kRawMax;
  return out;
}

EventRecord denormalize(const EventRecord& record) {
  if (!record.stack.normalized) throw ValidationError("denormalize: record " + record.event_id + " is not normalized");
  record.stack.validate();
  const int c = record.stack.channel_count();
  if (record.stack.normalization.size() != static_cast<std::size_t>(c)) {
    throw ValidationError("denormalize: record " + record.event_id + " lacks normalization constants");
  }
  EventRecord out = record;
  const std::size_t plane = static_cast<std::size_t>(record.stack.height()) * record.stack.width();
  for (int k = 0; k < c; ++k) {
    const ChannelNormalization& n = record.stack.normalization[k];
    double* v = out.stack.channels.data() + k * plane;
    for (std::size_t i = 0; i < plane; ++i) v[i] = v[i] * n.scale + n.offset;
  }
  out.stack.normalization.clear();
  out.stack.normalized = false;
  for (double& v : out.target.values()) v *= kRawMax;
  return out;
}

Raster resample_bilinear(const Raster& src, int height, int width) {
  if (height <= 0 || width <= 0 || src.height() <= 0 || src.width() <= 0) {
    throw ValidationError("resample_bilinear: empty grid");
  }
  if (src.height() == height && src.width() == width) return src;
  Raster out(height, width, 0.0, src.modality());
  const double sy = static_cast<double>(src.height()) / height, sx = static_cast<double>(src.width()) / width;
  for (int r = 0; r < height; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(y), y1 = std::min(y0 + 1, src.height() - 1);
    const double fy = y - y0;
    for (int c = 0; c < width; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(x), x1 = std::min(x0 + 1, src.width() - 1);
      const double fx = x - x0;
      out(r, c) = (1 - fy) * ((1 - fx) * src(y0, x0) + fx * src(y0, x1)) +
                  fy * ((1 - fx) * src(y1, x0) + fx * src(y1, x1));
    }
  }
  return out;
}

// ---------------------------------------------------------------------- split

Split split(std::span<const EventRecord> records, std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("split: fractions must lie in [0, 1]");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ValidationError("split: fractions must sum to 1");
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return records[a].event_id < records[b].event_id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (records[order[i]].event_id == records[order[i - 1]].event_id) {
      throw ValidationError("split: duplicate event id " + records[order[i]].event_id);
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n = static_cast<double>(records.size());
  const auto n_train = std::min(order.size(), static_cast<std::size_t>(std::llround(fractions[0] * n)));
  const auto n_val = std::min(order.size() - n_train, static_cast<std::size_t>(std::llround(fractions[1] * n)));
  Split s;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < n_train ? s.train : i < n_train + n_val ? s.val : s.test;
    dst.push_back(records[order[i]]);
  }
  return s;
}

std::vector<wtformer::Sample> to_samples(std::span<const EventRecord> records) {
  std::vector<wtformer::Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.stack.normalized) throw ValidationError("to_samples: record " + r.event_id + " is not normalized");
    out.push_back({r.stack, r.target});
  }
  return out;
}

// ------------------------------------------------------------------- archives

namespace {

struct Handle {
  hid_t id = -1;
  herr_t (*close)(hid_t) = nullptr;
  Handle(hid_t i, herr_t (*c)(hid_t)) : id(i), close(c) {}
  Handle(Handle&& o) noexcept : id(o.id), close(o.close) { o.id = -1; }
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() {
    if (id >= 0) close(id);
  }
  explicit operator bool() const { return id >= 0; }
};

// Suppresses the library's automatic error printing for the guard's lifetime.
class QuietErrors {
 public:
  QuietErrors() {
    H5Eget_auto2(H5E_DEFAULT, &func_, &data_);
    H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
  }
  ~QuietErrors() { H5Eset_auto2(H5E_DEFAULT, func_, data_); }

 private:
  H5E_auto2_t func_ = nullptr;
  void* data_ = nullptr;
};

const Modality kArchiveModalities[] = {Modality::vis, Modality::ir069, Modality::ir107, Modality::lightning};

std::string event_path(const std::string& id) { return "/events/" + id; }

bool link_exists(hid_t loc, const std::string& path) { return H5Lexists(loc, path.c_str(), H5P_DEFAULT) > 0; }

Handle untracked(hid_t cls) {
  Handle p(H5Pcreate(cls), H5Pclose);
  H5Pset_obj_track_times(p.id, false);
  return p;
}

}  // namespace

struct ArchiveWriter::Impl {
  std::string path;
  hid_t file = -1;
};

ArchiveWriter::ArchiveWriter(const std::string& path) : impl_(std::make_unique<Impl>()) {
  QuietErrors quiet;
  impl_->path = path;
  impl_->file = H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT);
  if (impl_->file < 0) throw IoError("cannot create archive " + path);
  Handle gcpl = untracked(H5P_GROUP_CREATE);
  Handle events(H5Gcreate2(impl_->file, "/events", H5P_DEFAULT, gcpl.id, H5P_DEFAULT), H5Gclose);
  if (!events) throw IoError("cannot create /events in " + path);
}

ArchiveWriter::~ArchiveWriter() {
  if (impl_ && impl_->file >= 0) H5Fclose(impl_->file);
}

void ArchiveWriter::write_raster(const std::string& event_id, const Raster& raster) {
  QuietErrors quiet;
  if (event_id.empty() || event_id.find('/') != std::string::npos) {
    throw ValidationError("archive: invalid event id '" + event_id + "'");
  }
  const std::string group = event_path(event_id);
  if (!link_exists(impl_->file, group)) {
    Handle gcpl = untracked(H5P_GROUP_CREATE);
    Handle g(H5Gcreate2(impl_->file, group.c_str(), H5P_DEFAULT, gcpl.id, H5P_DEFAULT), H5Gclose);
    if (!g) throw IoError("archive: cannot create group " + group);
  }
  const std::string name = group + "/" + std::string(modality_name(raster.modality()));
  if (link_exists(impl_->file, name)) throw ValidationError("archive: " + name + " already written");

  const hsize_t dims[2] = {static_cast<hsize_t>(raster.height()), static_cast<hsize_t>(raster.width())};
  Handle space(H5Screate_simple(2, dims, nullptr), H5Sclose);
  Handle dcpl = untracked(H5P_DATASET_CREATE);
  const bool u8 = raster.modality() == Modality::vil;
  Handle ds(H5Dcreate2(impl_->file, name.c_str(), u8 ? H5T_STD_U8LE : H5T_IEEE_F32LE, space.id, H5P_DEFAULT,
                       dcpl.id, H5P_DEFAULT),
            H5Dclose);
  if (!ds) throw IoError("archive: cannot create dataset " + name);
  herr_t status;
  if (u8) {
    std::vector<std::uint8_t> buf(raster.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
      const double v = raster.values()[i];
      if (!(v >= 0.0 && v <= kRawMax) || v != std::round(v)) {
        throw ValidationError("archive: VIL of " + event_id + " must hold integers in [0, 255]");
      }
      buf[i] = static_cast<std::uint8_t>(v);
    }
    status = H5Dwrite(ds.id, H5T_NATIVE_UINT8, H5S_ALL, H5S_ALL, H5P_DEFAULT, buf.data());
  } else {
    std::vector<float> buf(raster.values().begin(), raster.values().end());
    status = H5Dwrite(ds.id, H5T_NATIVE_FLOAT, H5S_ALL, H5S_ALL, H5P_DEFAULT, buf.data());
  }
  if (status < 0) throw IoError("archive: write failed for " + name);
}

void ArchiveWriter::write_event(const EventRecord& record) {
  if (record.stack.normalized) throw ValidationError("archive: record " + record.event_id + " must be raw-scale");
  record.stack.validate();
  for (int k = 0; k < record.stack.channel_count(); ++k) write_raster(record.event_id, record.stack.channel(k));
  write_raster(record.event_id, record.target);

  QuietErrors quiet;
  Handle g(H5Gopen2(impl_->file, event_path(record.event_id).c_str(), H5P_DEFAULT), H5Gclose);
  Handle type(H5Tcopy(H5T_C_S1), H5Tclose);
  H5Tset_size(type.id, std::max<std::size_t>(1, record.timestamp.size()));
  Handle space(H5Screate(H5S_SCALAR), H5Sclose);
  Handle attr(H5Acreate2(g.id, "timestamp", type.id, space.id, H5P_DEFAULT, H5P_DEFAULT), H5Aclose);
  std::string buf = record.timestamp.empty() ? std::string(1, '\0') : record.timestamp;
  if (!attr || H5Awrite(attr.id, type.id, buf.data()) < 0) {
    throw IoError("archive: cannot write timestamp of " + record.event_id);
  }
}

void write_fixture(const std::string& path, std::span<const EventRecord> records) {
  ArchiveWriter writer(path);
  for (const auto& r : records) writer.write_event(r);
}

namespace {

Handle open_archive(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ArchiveError(ArchiveError::Kind::missing_file, "", "archive not found: " + path);
  }
  Handle f(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
  if (!f) throw ArchiveError(ArchiveError::Kind::corrupt_record, "", "not a readable archive: " + path);
  if (!link_exists(f.id, "/events")) {
    throw ArchiveError(ArchiveError::Kind::corrupt_record, "", "archive lacks /events: " + path);
  }
  return f;
}

herr_t collect_name(hid_t, const char* name, const H5L_info_t*, void* out) {
  static_cast<std::vector<std::string>*>(out)->emplace_back(name);
  return 0;
}

Raster read_raster(hid_t file, const std::string& id, Modality m) {
  using Kind = ArchiveError::Kind;
  const std::string name = event_path(id) + "/" + std::string(modality_name(m));
  if (!link_exists(file, name)) {
    throw ArchiveError(Kind::missing_modality, id,
                       "event " + id + " lacks modality " + std::string(modality_name(m)));
  }
  Handle ds(H5Dopen2(file, name.c_str(), H5P_DEFAULT), H5Dclose);
  auto corrupt = [&](const std::string& why) {
    return ArchiveError(Kind::corrupt_record, id, "event " + id + ", " + std::string(modality_name(m)) + ": " + why);
  };
  if (!ds) throw corrupt("not a dataset");
  Handle space(H5Dget_space(ds.id), H5Sclose);
  hsize_t dims[2] = {0, 0};
  if (H5Sget_simple_extent_ndims(space.id) != 2) throw corrupt("expected a 2-D array");
  H5Sget_simple_extent_dims(space.id, dims, nullptr);
  if (dims[0] == 0 || dims[1] == 0 || dims[0] > (1u << 16) || dims[1] > (1u << 16)) throw corrupt("bad extent");
  Handle type(H5Dget_type(ds.id), H5Tclose);
  const H5T_class_t cls = H5Tget_class(type.id);
  if (cls != H5T_INTEGER && cls != H5T_FLOAT) throw corrupt("non-numeric element type");

  std::vector<double> values(dims[0] * dims[1]);
  if (H5Dread(ds.id, H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, values.data()) < 0) {
    throw corrupt("read failed");
  }
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0 || v > kRawMax) throw corrupt("value outside [0, 255]");
  }
  return Raster(static_cast<int>(dims[0]), static_cast<int>(dims[1]), std::move(values), m);
}

std::string read_timestamp(hid_t file, const std::string& id) {
  Handle g(H5Gopen2(file, event_path(id).c_str(), H5P_DEFAULT), H5Gclose);
  if (!g || H5Aexists(g.id, "timestamp") <= 0) return {};
  Handle attr(H5Aopen(g.id, "timestamp", H5P_DEFAULT), H5Aclose);
  Handle type(H5Aget_type(attr.id), H5Tclose);
  if (H5Tget_class(type.id) != H5T_STRING || H5Tis_variable_str(type.id) > 0) {
    throw ArchiveError(ArchiveError::Kind::corrupt_record, id, "event " + id + ": malformed timestamp");
  }
  std::string buf(H5Tget_size(type.id), '\0');
  H5Aread(attr.id, type.id, buf.data());
  buf.erase(std::find(buf.begin(), buf.end(), '\0'), buf.end());
  return buf;
}

}  // namespace

std::vector<std::string> list_events(const std::string& path) {
  QuietErrors quiet;
  Handle f = open_archive(path);
  Handle g(H5Gopen2(f.id, "/events", H5P_DEFAULT), H5Gclose);
  std::vector<std::string> names;
  H5Literate(g.id, H5_INDEX_NAME, H5_ITER_INC, nullptr, collect_name, &names);
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<EventRecord> load_archive(const std::string& path, std::span<const std::string> event_ids) {
  const std::vector<std::string> ids =
      event_ids.empty() ? list_events(path) : std::vector<std::string>(event_ids.begin(), event_ids.end());
  QuietErrors quiet;
  Handle f = open_archive(path);
  std::vector<EventRecord> out;
  for (const std::string& id : ids) {
    if (id.empty() || id.find('/') != std::string::npos || !link_exists(f.id, event_path(id))) {
      throw ArchiveError(ArchiveError::Kind::missing_event, id, "event not found in archive: " + id);
    }
    EventRecord rec;
    rec.event_id = id;
    rec.target = read_raster(f.id, id, Modality::vil);
    const int h = rec.target.height(), w = rec.target.width();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    rec.stack.channels = Tensor({4, h, w});
    rec.stack.modalities = canonical_modalities();
    for (int k = 0; k < 4; ++k) {
      const Raster r = resample_bilinear(read_raster(f.id, id, kArchiveModalities[k]), h, w);
      std::copy(r.values().begin(), r.values().end(), rec.stack.channels.data() + k * plane);
    }
    rec.timestamp = read_timestamp(f.id, id);
    out.push_back(std::move(rec));
  }
  return out;
}

// --------------------------------------------------------------- tensor files

namespace {

constexpr char kTensorMagic[16] = {'W', 'C', '2', 'R', '_', 'T', 'E', 'N', 'S', 'O', 'R', '_', 'v', '1', '\0', '\0'};

}  // namespace

void write_tensor_file(const std::string& path, const Tensor& tensor, DType dtype) {
  if (tensor.rank() > 8) throw ValidationError("tensor file: rank above 8 unsupported");
  if (!tensor.all_finite()) throw ValidationError("tensor file: non-finite values");
  if (dtype == DType::u8) {
    for (double v : tensor.values()) {
      if (v < 0.0 || v > 255.0 || v != std::round(v)) {
        throw ValidationError("tensor file: u8 payload requires integers in [0, 255]");
      }
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write tensor file " + path);
  os.write(kTensorMagic, sizeof kTensorMagic);
  detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
  detail::write_le<std::uint8_t>(os, 0);
  detail::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(tensor.rank()));
  for (int d : tensor.shape()) detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
  for (double v : tensor.values()) {
    switch (dtype) {
      case DType::f32: detail::write_le<float>(os, static_cast<float>(v)); break;
      case DType::f64: detail::write_le<double>(os, v); break;
      case DType::u8: detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(v)); break;
    }
  }
  if (!os) throw IoError("write failed for tensor file " + path);
}

Tensor read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open tensor file " + path);
  char magic[16];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kTensorMagic, sizeof magic) != 0) {
    throw IoError(path + " is not a tensor file (bad magic)");
  }
  const auto dtype = detail::read_le<std::uint8_t>(is, "tensor dtype");
  const auto endian = detail::read_le<std::uint8_t>(is, "tensor endianness");
  const auto rank = detail::read_le<std::uint16_t>(is, "tensor rank");
  if (dtype < 1 || dtype > 3) throw IoError(path + ": unknown dtype " + std::to_string(dtype));
  if (endian != 0) throw IoError(path + ": only little-endian payloads are supported");
  if (rank > 8) throw IoError(path + ": rank " + std::to_string(rank) + " unsupported");
  Shape shape;
  std::uint64_t count = 1;
  for (int i = 0; i < rank; ++i) {
    const auto d = detail::read_le<std::uint64_t>(is, "tensor dims");
    if (d > (1u << 30)) throw IoError(path + ": implausible dimension");
    shape.push_back(static_cast<int>(d));
    count *= d;
    if (count > (1ull << 31)) throw IoError(path + ": implausible element count");
  }
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    switch (static_cast<DType>(dtype)) {
      case DType::f32: t[i] = detail::read_le<float>(is, "tensor payload"); break;
      case DType::f64: t[i] = detail::read_le<double>(is, "tensor payload"); break;
      case DType::u8: t[i] = detail::read_le<std::uint8_t>(is, "tensor payload"); break;
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes after payload");
  return t;
}

}  // namespace wavec2r::data
