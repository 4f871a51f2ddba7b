#include "wavec2r/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "wavec2r/errors.hpp"

namespace wavec2r::config {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw ConfigurationError("config " + key + " = '" + value + "': expected " + expected);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) bad_value(key, s, "a number");
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& s) {
  Int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) bad_value(key, s, "an integer");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, s, "true or false");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  return out;
}

template <std::size_t N>
std::array<int, N> parse_int_list(const std::string& key, const std::string& s) {
  const auto parts = split_list(s);
  if (parts.size() != N) bad_value(key, s, std::to_string(N) + " comma-separated integers");
  std::array<int, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_int<int>(key, parts[i]);
  return out;
}

template <std::size_t N>
std::array<double, N> parse_double_list(const std::string& key, const std::string& s) {
  const auto parts = split_list(s);
  if (parts.size() != N) bad_value(key, s, std::to_string(N) + " comma-separated numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_double(key, parts[i]);
  return out;
}

template <typename T, std::size_t N>
std::string join(const std::array<T, N>& a) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<T>) s += format_double(a[i]);
    else s += std::to_string(a[i]);
  }
  return s;
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
};

#define WC2R_DOUBLE(sec, name, member)                                                       \
  Field {                                                                                    \
    sec, name, [](const RunConfig& c) { return format_double(c.member); },                   \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_double(k, v); } \
  }
#define WC2R_INT(sec, name, member, type)                                                    \
  Field {                                                                                    \
    sec, name, [](const RunConfig& c) { return std::to_string(c.member); },                  \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_int<type>(k, v); } \
  }
#define WC2R_BOOL(sec, name, member)                                                         \
  Field {                                                                                    \
    sec, name, [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); },  \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"data", "source",
            [](const RunConfig& c) {
              return std::string(c.data.source == DataSource::synthetic ? "synthetic" : "archive");
            },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "synthetic") c.data.source = DataSource::synthetic;
              else if (v == "archive") c.data.source = DataSource::archive;
              else bad_value(k, v, "synthetic or archive");
            }},
      Field{"data", "archive", [](const RunConfig& c) { return c.data.archive; },
            [](RunConfig& c, const std::string&, const std::string& v) { c.data.archive = v; }},
      WC2R_INT("data", "events", data.events, int),
      WC2R_INT("data", "seed", data.spec.seed, std::uint64_t),
      WC2R_INT("data", "height", data.spec.height, int),
      WC2R_INT("data", "width", data.spec.width, int),
      WC2R_INT("data", "min_cells", data.spec.min_cells, int),
      WC2R_INT("data", "max_cells", data.spec.max_cells, int),
      WC2R_DOUBLE("data", "min_amplitude", data.spec.min_amplitude),
      WC2R_DOUBLE("data", "max_amplitude", data.spec.max_amplitude),
      WC2R_DOUBLE("data", "min_radius", data.spec.min_radius),
      WC2R_DOUBLE("data", "max_radius", data.spec.max_radius),
      WC2R_DOUBLE("data", "front_sharpness", data.spec.front_sharpness),
      WC2R_DOUBLE("data", "smoothing_sigma", data.spec.smoothing_sigma),
      WC2R_DOUBLE("data", "ir_coupling", data.spec.ir_coupling),
      WC2R_DOUBLE("data", "vis_coupling", data.spec.vis_coupling),
      WC2R_DOUBLE("data", "lightning_coupling", data.spec.lightning_coupling),
      WC2R_INT("data", "split_seed", data.split_seed, std::uint64_t),
      Field{"data", "split", [](const RunConfig& c) { return join(c.data.fractions); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.data.fractions = parse_double_list<3>(k, v);
            }},

      Field{"model", "widths", [](const RunConfig& c) { return join(c.model.widths); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.model.widths = parse_int_list<2>(k, v); }},
      WC2R_INT("model", "heads", model.heads, int),
      WC2R_INT("model", "window", model.window, int),
      WC2R_INT("model", "expansion", model.expansion, int),
      WC2R_BOOL("model", "use_wtf", model.use_wtf),
      WC2R_BOOL("model", "use_vis", model.use_vis),
      Field{"model", "basis", [](const RunConfig& c) { return c.model.basis; },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v != "haar") bad_value(k, v, "haar");
              c.model.basis = v;
            }},

      Field{"loss", "alpha_mode",
            [](const RunConfig& c) {
              return std::string(c.loss.alpha_mode == wtformer::AlphaMode::fixed ? "fixed" : "energy");
            },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "fixed") c.loss.alpha_mode = wtformer::AlphaMode::fixed;
              else if (v == "energy") c.loss.alpha_mode = wtformer::AlphaMode::energy;
              else bad_value(k, v, "fixed or energy");
            }},
      WC2R_DOUBLE("loss", "alpha", loss.alpha),
      Field{"loss", "w_d", [](const RunConfig& c) { return join(c.loss.w_d); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.loss.w_d = parse_double_list<3>(k, v); }},
      WC2R_DOUBLE("loss", "alpha_min", loss.alpha_min),
      WC2R_DOUBLE("loss", "alpha_max", loss.alpha_max),
      WC2R_DOUBLE("loss", "lambda_freq", loss.lambda_freq),
      Field{"loss", "direction", [](const RunConfig& c) { return std::string(losses::direction_name(c.loss.direction)); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              try {
                c.loss.direction = losses::direction_from_name(v);
              } catch (const Error&) {
                bad_value(k, v, "as_written or as_described");
              }
            }},

      WC2R_INT("diffusion", "steps", diffusion.steps, int),
      Field{"diffusion", "schedule",
            [](const RunConfig& c) { return std::string(diffusion::schedule_kind_name(c.diffusion.schedule)); },
            [](RunConfig& c, const std::string&, const std::string& v) {
              c.diffusion.schedule = diffusion::schedule_kind_from_name(v);
            }},
      WC2R_DOUBLE("diffusion", "beta_start", diffusion.beta_start),
      WC2R_DOUBLE("diffusion", "beta_end", diffusion.beta_end),
      WC2R_INT("diffusion", "sampler_steps", diffusion.sampler_steps, int),
      Field{"diffusion", "sampler",
            [](const RunConfig& c) { return std::string(diffusion::sampler_kind_name(c.diffusion.sampler)); },
            [](RunConfig& c, const std::string&, const std::string& v) {
              c.diffusion.sampler = diffusion::sampler_kind_from_name(v);
            }},
      WC2R_BOOL("diffusion", "residual", diffusion.residual),
      WC2R_BOOL("diffusion", "use_hlf", diffusion.use_hlf),
      Field{"diffusion", "widths", [](const RunConfig& c) { return join(c.diffusion.widths); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.diffusion.widths = parse_int_list<2>(k, v);
            }},
      WC2R_INT("diffusion", "feature_width", diffusion.feature_width, int),
      WC2R_DOUBLE("diffusion", "sigma_data", diffusion.sigma_data),
      WC2R_DOUBLE("diffusion", "learning_rate", diffusion.learning_rate),

      WC2R_INT("run", "seed", run.seed, std::uint64_t),
      WC2R_INT("run", "stage1_steps", run.stage1_steps, int),
      WC2R_INT("run", "stage2_steps", run.stage2_steps, int),
      WC2R_INT("run", "batch_size", run.batch_size, int),
      WC2R_DOUBLE("run", "learning_rate", run.learning_rate),
      WC2R_DOUBLE("run", "clip_norm", run.clip_norm),
      Field{"run", "checkpoint_dir", [](const RunConfig& c) { return c.run.checkpoint_dir; },
            [](RunConfig& c, const std::string&, const std::string& v) { c.run.checkpoint_dir = v; }},
  };
  return table;
}

#undef WC2R_DOUBLE
#undef WC2R_INT
#undef WC2R_BOOL

void set_field(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
  const std::string full = section + "." + key;
  for (const Field& f : fields()) {
    if (section == f.section && key == f.key) {
      f.set(cfg, full, value);
      return;
    }
  }
  throw ConfigurationError("unknown config key '" + full + "'");
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigurationError("config: " + m); };
  if (data.source == DataSource::archive && data.archive.empty()) fail("data.archive is required when data.source = archive");
  if (data.events < 1) fail("data.events must be >= 1");
  try {
    data.spec.validate();
  } catch (const ValidationError& e) {
    fail(e.what());
  }
  double fsum = 0.0;
  for (double f : data.fractions) {
    if (f < 0.0 || f > 1.0) fail("data.split fractions must lie in [0, 1]");
    fsum += f;
  }
  if (std::abs(fsum - 1.0) > 1e-9) fail("data.split fractions must sum to 1");
  for (int w : model.widths)
    if (w <= 0 || w % model.heads) fail("model.widths must be positive multiples of model.heads");
  if (model.heads <= 0 || model.window <= 0 || model.expansion <= 0) fail("model.heads, window, expansion must be positive");
  if (!(loss.alpha > 0.0) || !(loss.alpha_min > 0.0) || loss.alpha_max < loss.alpha_min) fail("loss alpha settings invalid");
  for (double w : loss.w_d)
    if (w < 0.0) fail("loss.w_d must be non-negative");
  if (loss.lambda_freq < 0.0) fail("loss.lambda_freq must be non-negative");
  if (diffusion.steps < 1) fail("diffusion.steps must be >= 1");
  if (diffusion.sampler_steps < 1 || diffusion.sampler_steps > diffusion.steps) {
    fail("diffusion.sampler_steps must lie in [1, diffusion.steps]");
  }
  if (!(diffusion.beta_start > 0.0 && diffusion.beta_start <= diffusion.beta_end && diffusion.beta_end < 1.0)) {
    fail("diffusion betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  for (int w : diffusion.widths)
    if (w <= 0) fail("diffusion.widths must be positive");
  if (diffusion.widths[0] % 2) fail("diffusion.widths[0] must be even");
  if (diffusion.feature_width <= 0) fail("diffusion.feature_width must be positive");
  if (!(diffusion.sigma_data >= 0.0) || !std::isfinite(diffusion.sigma_data)) {
    fail("diffusion.sigma_data must be finite and non-negative");
  }
  if (run.stage1_steps < 1 || run.stage2_steps < 1 || run.batch_size < 1) fail("run steps and batch size must be >= 1");
  if (!(run.learning_rate > 0.0)) fail("run.learning_rate must be positive");
  if (!(diffusion.learning_rate > 0.0)) fail("diffusion.learning_rate must be positive");
}

losses::FiblConfig RunConfig::fibl_config() const {
  losses::FiblConfig f;
  f.alpha = loss.alpha;
  f.w_lh = loss.w_d[0];
  f.w_hl = loss.w_d[1];
  f.w_hh = loss.w_d[2];
  return f;
}

wtformer::WtformerConfig RunConfig::wtformer_config() const {
  wtformer::WtformerConfig w;
  w.in_channels = input_channels();
  w.widths = model.widths;
  w.heads = model.heads;
  w.window = model.window;
  w.expansion = model.expansion;
  w.use_wtf = model.use_wtf;
  w.seed = run.seed;
  return w;
}

wtformer::Stage1Config RunConfig::stage1_config() const {
  wtformer::Stage1Config s;
  s.steps = run.stage1_steps;
  s.batch_size = run.batch_size;
  s.learning_rate = run.learning_rate;
  s.clip_norm = run.clip_norm;
  s.fibl = fibl_config();
  s.alpha_mode = loss.alpha_mode;
  s.alpha_bounds = {loss.alpha_min, loss.alpha_max};
  s.direction = loss.direction;
  s.seed = run.seed + 1;
  return s;
}

diffusion::DenoiserConfig RunConfig::denoiser_config() const {
  diffusion::DenoiserConfig d;
  d.in_channels = input_channels();
  d.widths = diffusion.widths;
  d.feature_width = diffusion.feature_width;
  d.use_hlf = diffusion.use_hlf;
  d.sigma_data = diffusion.sigma_data;
  d.schedule = noise_schedule();
  d.seed = run.seed + 2;
  return d;
}

diffusion::Stage2Config RunConfig::stage2_config() const {
  diffusion::Stage2Config s;
  s.steps = run.stage2_steps;
  s.batch_size = run.batch_size;
  s.learning_rate = diffusion.learning_rate;
  s.clip_norm = run.clip_norm;
  s.lambda_freq = loss.lambda_freq;
  s.fibl = fibl_config();
  s.residual = diffusion.residual;
  s.seed = run.seed + 3;
  return s;
}

diffusion::NoiseSchedule RunConfig::noise_schedule() const {
  return diffusion.schedule == diffusion::ScheduleKind::linear
             ? diffusion::NoiseSchedule::linear(diffusion.steps, diffusion.beta_start, diffusion.beta_end)
             : diffusion::NoiseSchedule::cosine(diffusion.steps);
}

RunConfig parse(const std::string& ini_text) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream is(ini_text);
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigurationError(std::string("malformed config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigurationError("config key '" + section + "' must sit inside a section");
    }
    for (const auto& [key, value] : body) set_field(cfg, section, key, value.data());
  }
  return cfg;
}

RunConfig load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const std::string& o : overrides) {
    const auto eq = o.find('='), dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigurationError("override '" + o + "' must look like section.key=value");
    }
    set_field(cfg, o.substr(0, dot), o.substr(dot + 1, eq - dot - 1), o.substr(eq + 1));
  }
}

std::string to_ini(const RunConfig& cfg) {
  std::ostringstream os;
  std::string current;
  for (const Field& f : fields()) {
    if (current != f.section) {
      if (!current.empty()) os << "\n";
      current = f.section;
      os << "[" << current << "]\n";
    }
    os << f.key << " = " << f.get(cfg) << "\n";
  }
  return os.str();
}

void save_snapshot(const RunConfig& cfg, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write config snapshot " + path);
  os << to_ini(cfg);
  if (!os) throw IoError("write failed for config snapshot " + path);
}

}  // namespace wavec2r::config
