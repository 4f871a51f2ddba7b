#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "wavec2r/data.hpp"
#include "wavec2r/errors.hpp"

using namespace wavec2r;
using namespace wavec2r::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "wavec2r_test_data";
  fs::create_directories(dir);
  return dir / name;
}

SyntheticStormSpec small_spec(std::uint64_t seed = 3) {
  SyntheticStormSpec s;
  s.seed = seed;
  s.height = s.width = 32;
  s.min_radius = 2.0;
  s.max_radius = 6.5;
  return s;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("synthetic generation is deterministic and in range") {
  const auto a = generate_synthetic(small_spec(), 8), b = generate_synthetic(small_spec(), 8);
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].event_id == b[i].event_id);
    CHECK(a[i].target.values() == b[i].target.values());
    CHECK(std::equal(a[i].stack.channels.values().begin(), a[i].stack.channels.values().end(),
                     b[i].stack.channels.values().begin()));
    CHECK(a[i].stack.modalities == canonical_modalities());
    for (double v : a[i].target.values()) {
      CHECK((v >= 0.0 && v <= 255.0));
      CHECK(v == std::round(v));
    }
    for (double v : a[i].stack.channels.values()) CHECK((v >= 0.0 && v <= 255.0));
  }
  CHECK(generate_synthetic(small_spec(4), 1)[0].target.values() != a[0].target.values());
  CHECK_THROWS_AS(generate_synthetic(small_spec(), 0), ValidationError);
  SyntheticStormSpec bad = small_spec();
  bad.max_amplitude = 200.0;
  CHECK_THROWS_AS(generate_synthetic(bad, 1), ValidationError);
  bad = small_spec();
  bad.ir_coupling = 1.5;
  CHECK_THROWS_AS(generate_synthetic(bad, 1), ValidationError);
}

TEST_CASE("threshold coverage over a batch of 8 is non-zero and monotone") {
  const auto recs = generate_synthetic(small_spec(11), 8);
  std::vector<std::uint64_t> counts;
  for (double thr : kVilThresholds) {
    std::uint64_t n = 0;
    for (const auto& r : recs)
      for (double v : r.target.values()) n += v >= thr;
    counts.push_back(n);
  }
  CHECK(counts.back() > 0);
  for (std::size_t i = 1; i < counts.size(); ++i) CHECK(counts[i] <= counts[i - 1]);
}

TEST_CASE("proxies follow the storm field") {
  const auto rec = generate_synthetic(small_spec(5), 1)[0];
  const Raster ir = rec.stack.channel(rec.stack.index_of(Modality::ir107));
  // Cold tops: the IR minimum sits where VIL is high.
  const auto ir_min = std::min_element(ir.values().begin(), ir.values().end()) - ir.values().begin();
  const double vil_max = *std::max_element(rec.target.values().begin(), rec.target.values().end());
  CHECK(rec.target.values()[ir_min] >= 0.5 * vil_max);
  // Lightning only where VIL is strong.
  const Raster li = rec.stack.channel(rec.stack.index_of(Modality::lightning));
  for (std::size_t i = 0; i < li.size(); ++i)
    if (li.values()[i] > 0.0) CHECK(rec.target.values()[i] > 160.0);
}

TEST_CASE("normalize / denormalize") {
  const auto rec = generate_synthetic(small_spec(), 2)[1];
  const auto n = normalize(rec);
  CHECK(n.stack.normalized);
  CHECK_THROWS(normalize(n));
  for (std::size_t i = 0; i < rec.target.size(); ++i) {
    CHECK(n.target.values()[i] == rec.target.values()[i] / 255.0);
    // Binarization commutes with normalization.
    CHECK((rec.target.values()[i] >= 219.0) == (n.target.values()[i] >= normalize_threshold(219.0)));
  }
  CHECK(normalize_threshold(219.0) == doctest::Approx(0.8588).epsilon(1e-4));
  CHECK(normalize_threshold(255.0) == 1.0);
  CHECK(normalize_threshold(0.0) == 0.0);
  for (double v : n.stack.channels.values()) CHECK((v >= 0.0 && v <= 1.0));

  const auto back = denormalize(n);
  CHECK_FALSE(back.stack.normalized);
  for (std::size_t i = 0; i < rec.target.size(); ++i) CHECK(std::abs(back.target.values()[i] - rec.target.values()[i]) <= 1e-6);
  for (std::size_t i = 0; i < rec.stack.channels.size(); ++i) {
    CHECK(std::abs(back.stack.channels[i] - rec.stack.channels[i]) <= 1e-6);
  }
}

TEST_CASE("split sizes, determinism and set algebra") {
  const auto recs = generate_synthetic(small_spec(), 10);
  const auto s = split(recs, {0.8, 0.1, 0.1}, 7);
  CHECK(s.train.size() == 8);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 1);
  const auto again = split(recs, {0.8, 0.1, 0.1}, 7);
  for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(s.train[i].event_id == again.train[i].event_id);

  std::set<std::string> all;
  std::size_t total = 0;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (const auto& r : *part) {
      all.insert(r.event_id);
      ++total;
    }
  CHECK(total == recs.size());
  CHECK(all.size() == recs.size());
  for (const auto& r : recs) CHECK(all.count(r.event_id) == 1);

  // Input order does not matter, only ids and seed.
  auto reversed = recs;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(split(reversed, {0.8, 0.1, 0.1}, 7).test[0].event_id == s.test[0].event_id);

  CHECK_THROWS_AS(split(recs, {0.5, 0.2, 0.2}, 7), ValidationError);
  CHECK_THROWS_AS(split(recs, {1.2, -0.1, -0.1}, 7), ValidationError);
  auto dup = recs;
  dup[1].event_id = dup[0].event_id;
  CHECK_THROWS_AS(split(dup, {0.8, 0.1, 0.1}, 7), ValidationError);
}

TEST_CASE("bilinear resampling") {
  Raster r(2, 2, std::vector<double>{0, 1, 2, 3});
  const Raster same = resample_bilinear(r, 2, 2);
  CHECK(same.values() == r.values());
  const Raster up = resample_bilinear(r, 4, 4);
  // Half-pixel centres: output (0,0) sits at source (-0.25,-0.25), clamped.
  CHECK(up(0, 0) == doctest::Approx(0.0));
  CHECK(up(1, 1) == doctest::Approx(0.75));  // source (0.25, 0.25)
  CHECK(up(3, 3) == doctest::Approx(3.0));
  const Raster c = resample_bilinear(Raster(3, 5, 7.0), 8, 6);
  for (double v : c.values()) CHECK(v == doctest::Approx(7.0));
}

TEST_CASE("archive round trip") {
  const auto recs = generate_synthetic(small_spec(), 2);
  const fs::path path = scratch("fixture.h5");
  write_fixture(path.string(), recs);
  CHECK(list_events(path.string()) == std::vector<std::string>{recs[0].event_id, recs[1].event_id});

  const auto loaded = load_archive(path.string());
  REQUIRE(loaded.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(loaded[i].event_id == recs[i].event_id);
    CHECK(loaded[i].timestamp == recs[i].timestamp);
    CHECK(loaded[i].stack.modalities == canonical_modalities());
    CHECK(loaded[i].target.values() == recs[i].target.values());
    CHECK(std::equal(loaded[i].stack.channels.values().begin(), loaded[i].stack.channels.values().end(),
                     recs[i].stack.channels.values().begin()));
  }

  // Re-creation is bitwise identical.
  const fs::path again = scratch("fixture_again.h5");
  write_fixture(again.string(), recs);
  CHECK(read_bytes(path) == read_bytes(again));

  const std::string one[] = {recs[1].event_id};
  CHECK(load_archive(path.string(), one)[0].event_id == recs[1].event_id);
}

TEST_CASE("archive errors carry kind and event id") {
  const auto recs = generate_synthetic(small_spec(), 1);
  const std::string id = recs[0].event_id;

  try {
    load_archive(scratch("nope.h5").string());
    FAIL("expected an error");
  } catch (const ArchiveError& e) {
    CHECK(e.kind() == ArchiveError::Kind::missing_file);
  }

  const fs::path path = scratch("partial.h5");
  {
    ArchiveWriter w(path.string());
    w.write_raster(id, recs[0].target);
    w.write_raster(id, recs[0].stack.channel(0));
  }
  try {
    load_archive(path.string());
    FAIL("expected an error");
  } catch (const ArchiveError& e) {
    CHECK(e.kind() == ArchiveError::Kind::missing_modality);
    CHECK(std::string(e.what()).find(id) != std::string::npos);
  }

  const fs::path full = scratch("full.h5");
  write_fixture(full.string(), recs);
  const std::string absent[] = {"no_such_event"};
  try {
    load_archive(full.string(), absent);
    FAIL("expected an error");
  } catch (const ArchiveError& e) {
    CHECK(e.kind() == ArchiveError::Kind::missing_event);
    CHECK(std::string(e.what()).find("no_such_event") != std::string::npos);
  }

  const fs::path junk = scratch("junk.h5");
  std::ofstream(junk) << "not an archive";
  try {
    load_archive(junk.string());
    FAIL("expected an error");
  } catch (const ArchiveError& e) {
    CHECK(e.kind() == ArchiveError::Kind::corrupt_record);
  }
}

TEST_CASE("coarser modality grids are resampled to the VIL grid") {
  auto rec = generate_synthetic(small_spec(), 1)[0];
  const fs::path path = scratch("mixed.h5");
  {
    ArchiveWriter w(path.string());
    w.write_raster(rec.event_id, rec.target);
    for (int c = 0; c < 4; ++c) {
      const Raster ch = rec.stack.channel(c);
      w.write_raster(rec.event_id, c == 0 ? ch : resample_bilinear(ch, 16, 16));
    }
  }
  const auto loaded = load_archive(path.string());
  CHECK(loaded[0].stack.height() == 32);
  CHECK(loaded[0].stack.width() == 32);
}

TEST_CASE("tensor files") {
  std::mt19937_64 rng(1);
  const Tensor t = Tensor::randn({1, 3, 5}, rng);
  const fs::path p64 = scratch("t64.tensor"), p32 = scratch("t32.tensor");
  write_tensor_file(p64.string(), t, DType::f64);
  const Tensor r64 = read_tensor_file(p64.string());
  CHECK(r64.shape() == t.shape());
  CHECK(std::equal(r64.values().begin(), r64.values().end(), t.values().begin()));

  write_tensor_file(p32.string(), t, DType::f32);
  const Tensor r32 = read_tensor_file(p32.string());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(r32[i] == static_cast<double>(static_cast<float>(t[i])));

  const std::string bytes = read_bytes(p64);
  CHECK(bytes.substr(0, 14) == "WC2R_TENSOR_v1");
  CHECK(bytes.size() == 16 + 1 + 1 + 2 + 3 * 8 + 15 * 8);

  std::ofstream(scratch("bad.tensor")) << "garbage";
  CHECK_THROWS_AS(read_tensor_file(scratch("bad.tensor").string()), IoError);
  CHECK_THROWS_AS(read_tensor_file(scratch("missing.tensor").string()), IoError);
}
