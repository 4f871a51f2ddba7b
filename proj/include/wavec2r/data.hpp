#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wavec2r/observation.hpp"
#include "wavec2r/raster.hpp"
#include "wavec2r/wtformer.hpp"

namespace wavec2r::data {

/// Raw-scale VIL evaluation thresholds.
inline constexpr std::array<double, 5> kVilThresholds{74.0, 133.0, 160.0, 181.0, 219.0};
inline constexpr double kRawMax = 255.0;

struct SyntheticStormSpec {
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  int min_cells = 2;
  int max_cells = 5;
  /// Peak amplitude range on the raw 0-255 scale. The first cell of every
  /// record is drawn from [max(225, min_amplitude), max_amplitude].
  double min_amplitude = 90.0;
  double max_amplitude = 250.0;
  /// Semi-axis range in pixels; each cell draws two radii and an angle.
  double min_radius = 2.0;
  double max_radius = 8.0;
  /// Shape exponent p in exp(-q^p): 1 is Gaussian, larger gives flat tops
  /// with steep fronts.
  double front_sharpness = 1.5;
  /// Blur used to derive the satellite proxies from the VIL field.
  double smoothing_sigma = 1.5;
  double ir_coupling = 0.9;
  double vis_coupling = 0.9;
  double lightning_coupling = 1.0;

  /// Throws ValidationError on inconsistent ranges.
  void validate() const;
};

struct EventRecord {
  std::string event_id;
  ObservationStack stack;
  Raster target;  // VIL
  std::string timestamp;
};

/// Deterministic in (spec, n). Raw values are float-representable and lie in
/// [0, 255]; VIL is integer-valued.
std::vector<EventRecord> generate_synthetic(const SyntheticStormSpec& spec, int n);

/// VIL and vis: raw / 255. ir069, ir107, lightning: per-record min-max, with
/// the constants stored in stack.normalization.
EventRecord normalize(const EventRecord& record);
EventRecord denormalize(const EventRecord& record);

inline double normalize_threshold(double raw) { return raw / kRawMax; }

/// Half-pixel-centre bilinear interpolation with edge clamping.
Raster resample_bilinear(const Raster& src, int height, int width);

struct Split {
  std::vector<EventRecord> train;
  std::vector<EventRecord> val;
  std::vector<EventRecord> test;
};

/// Seeded partition by event id. Sizes are round(f * n) for train and val,
/// the remainder for test.
Split split(std::span<const EventRecord> records, std::array<double, 3> fractions, std::uint64_t seed);

/// Normalized records -> training pairs.
std::vector<wtformer::Sample> to_samples(std::span<const EventRecord> records);

// ---------------------------------------------------------------- archives
//
// HDF5 layout:
//   /events/<event_id>/            group, attribute "timestamp" (string)
//   /events/<event_id>/vil         uint8  (H, W)
//   /events/<event_id>/vis         float32 (h, w), likewise ir069, ir107, lightning
// Non-VIL grids may differ from the VIL grid; they are resampled on load.
// Object timestamps are not recorded, so identical input gives identical bytes.

class ArchiveWriter {
 public:
  /// Creates or truncates `path`.
  explicit ArchiveWriter(const std::string& path);
  ~ArchiveWriter();
  ArchiveWriter(const ArchiveWriter&) = delete;
  ArchiveWriter& operator=(const ArchiveWriter&) = delete;

  /// Writes all modalities of a raw-scale record.
  void write_event(const EventRecord& record);
  /// Writes one modality array, creating the event group if needed.
  void write_raster(const std::string& event_id, const Raster& raster);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

void write_fixture(const std::string& path, std::span<const EventRecord> records);

/// Event ids in the archive, sorted.
std::vector<std::string> list_events(const std::string& path);

/// Raw-scale records for `event_ids` (all events when empty), in request
/// order. Throws ArchiveError with the matching kind.
std::vector<EventRecord> load_archive(const std::string& path, std::span<const std::string> event_ids = {});

// ------------------------------------------------------------ tensor files
//
// 16-byte magic "WC2R_TENSOR_v1\0\0", u8 dtype, u8 endianness (0 = little),
// u16 rank, rank x u64 dims, then the little-endian payload.

enum class DType : std::uint8_t { f32 = 1, f64 = 2, u8 = 3 };

void write_tensor_file(const std::string& path, const Tensor& tensor, DType dtype = DType::f32);
Tensor read_tensor_file(const std::string& path);

}  // namespace wavec2r::data
