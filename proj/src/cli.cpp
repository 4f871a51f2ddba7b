#include "wavec2r/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "wavec2r/checkpoint.hpp"
#include "wavec2r/errors.hpp"
#include "wavec2r/plot.hpp"

namespace fs = std::filesystem;

namespace wavec2r::cli {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return kValidation;
  if (dynamic_cast<const ConfigurationError*>(&e)) return kConfiguration;
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  return kUnexpected;
}

std::string resolve_checkpoint_dir(const config::RunConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!cfg.run.checkpoint_dir.empty()) return cfg.run.checkpoint_dir;
  if (const char* env = std::getenv(config::kCheckpointDirEnv); env && *env) return env;
  return "checkpoints";
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

std::ofstream open_append(const fs::path& path) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw IoError("cannot append to " + path.string());
  return os;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::vector<std::string> ids_of(std::span<const data::EventRecord> records) {
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.event_id);
  return ids;
}

std::vector<data::EventRecord> select_subset(std::vector<data::EventRecord> all, const config::RunConfig& cfg,
                                             const std::string& subset) {
  if (subset == "all") return all;
  data::Split s = data::split(all, cfg.data.fractions, cfg.data.split_seed);
  if (subset == "train") return std::move(s.train);
  if (subset == "val") return std::move(s.val);
  if (subset == "test") return std::move(s.test);
  throw ValidationError("unknown split '" + subset + "' (expected all, train, val or test)");
}

struct LoadedStage1 {
  config::RunConfig cfg;
  std::unique_ptr<wtformer::Wtformer> model;
};

struct LoadedStage2 {
  config::RunConfig cfg;
  std::unique_ptr<diffusion::Denoiser> model;
};

void require_checkpoint(const fs::path& path, const std::string& hint) {
  if (!fs::is_regular_file(path)) {
    throw ConfigurationError("checkpoint not found: " + path.string() + "; " + hint);
  }
}

LoadedStage1 load_stage1(const fs::path& path) {
  require_checkpoint(path, "run `wavec2r train --stage 1` first or pass --stage1-checkpoint");
  const Checkpoint ckpt = read_checkpoint(path);
  LoadedStage1 out{config::parse(ckpt.config), nullptr};
  out.model = std::make_unique<wtformer::Wtformer>(out.cfg.wtformer_config());
  restore_parameters(out.model->parameters(), ckpt, "stage1");
  return out;
}

LoadedStage2 load_stage2(const fs::path& path) {
  require_checkpoint(path, "run `wavec2r train --stage 2` first, pass --stage2-checkpoint, or use --coarse-only");
  const Checkpoint ckpt = read_checkpoint(path);
  LoadedStage2 out{config::parse(ckpt.config), nullptr};
  out.model = std::make_unique<diffusion::Denoiser>(out.cfg.denoiser_config());
  restore_parameters(out.model->parameters(), ckpt, "stage2");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace

std::vector<data::EventRecord> load_records(const config::RunConfig& cfg, const std::string& subset,
                                            const std::string& archive) {
  std::vector<data::EventRecord> raw;
  if (!archive.empty()) raw = data::load_archive(archive);
  else if (cfg.data.source == config::DataSource::archive) raw = data::load_archive(cfg.data.archive);
  else raw = data::generate_synthetic(cfg.data.spec, cfg.data.events);
  std::vector<data::EventRecord> out;
  for (auto& r : select_subset(std::move(raw), cfg, subset)) out.push_back(data::normalize(r));
  return out;
}

ObservationStack model_input(const ObservationStack& stack, const config::RunConfig& cfg) {
  return cfg.model.use_vis ? stack : stack.without(Modality::vis);
}

// ------------------------------------------------------------------ make-data

void cmd_make_data(const config::RunConfig& cfg, const std::string& out_path, std::ostream& log) {
  if (cfg.data.events < 1) throw ValidationError("make-data: event count must be >= 1");
  cfg.validate();
  if (out_path.empty()) throw ValidationError("make-data: output path required");
  const auto records = data::generate_synthetic(cfg.data.spec, cfg.data.events);
  ensure_parent(out_path);
  data::write_fixture(out_path, records);
  config::save_snapshot(cfg, out_path + ".config.ini");
  log << "wrote " << records.size() << " events to " << out_path << "\n";
  for (double thr : data::kVilThresholds) {
    std::uint64_t pixels = 0;
    int events = 0;
    for (const auto& r : records) {
      std::uint64_t n = 0;
      for (double v : r.target.values()) n += v >= thr;
      pixels += n;
      events += n > 0;
    }
    log << "threshold " << thr << ": pixels " << pixels << ", events " << events << "\n";
  }
}

// ---------------------------------------------------------------------- train

void cmd_train(const config::RunConfig& cfg, const TrainOptions& opts, std::ostream& log) {
  cfg.validate();
  if (opts.stage != 1 && opts.stage != 2) throw ValidationError("train: --stage must be 1 or 2");
  const fs::path dir = resolve_checkpoint_dir(cfg, opts.checkpoint_dir);
  const std::string tag = "stage" + std::to_string(opts.stage);

  // Stage 2 prerequisites are checked before any data work.
  std::optional<LoadedStage1> stage1;
  if (opts.stage == 2) {
    const fs::path s1 = opts.stage1_checkpoint.empty() ? dir / "stage1.ckpt" : fs::path(opts.stage1_checkpoint);
    stage1 = load_stage1(s1);
  }

  const auto train = load_records(cfg, "train", opts.archive);
  if (train.empty()) throw ValidationError("train: the training split is empty");
  ensure_dir(dir);
  const std::string snapshot = config::to_ini(cfg);
  write_text(dir / (tag + ".config.ini"), snapshot);

  auto records = open_append(dir / (tag + ".log"));
  auto timing = open_append(dir / (tag + ".timing.log"));
  records << nlohmann::json{{"event", "start"}, {"stage", opts.stage}, {"config_hash", hex(fnv1a(snapshot))},
                            {"train_events", ids_of(train)}}
                 .dump()
          << "\n";
  const auto t0 = std::chrono::steady_clock::now();

  if (opts.stage == 1) {
    std::vector<wtformer::Sample> samples;
    for (const auto& r : train) samples.push_back({model_input(r.stack, cfg), r.target});
    wtformer::Wtformer model(cfg.wtformer_config());
    const auto s1cfg = cfg.stage1_config();
    const double before = wtformer::evaluate_fibl(model, samples, s1cfg.fibl);
    auto on_nan = [&](const wtformer::Wtformer& m, int step) {
      write_checkpoint(dir / "stage1.nan.ckpt", capture_parameters(m.parameters(), "stage1", step, snapshot));
    };
    const auto result = wtformer::train_stage1(model, samples, s1cfg, on_nan);
    for (const auto& h : result.history) {
      records << nlohmann::json{{"step", h.step},
                                {"tag", std::string(losses::loss_kind_name(h.tag))},
                                {"p", h.probability},
                                {"loss", h.loss},
                                {"grad_norm", h.grad_norm}}
                     .dump()
              << "\n";
    }
    wtformer::Stage1Config eval_cfg = s1cfg;
    eval_cfg.fibl.alpha = result.alpha;
    const double after = wtformer::evaluate_fibl(model, samples, eval_cfg.fibl);
    write_checkpoint(dir / "stage1.ckpt", capture_parameters(model.parameters(), "stage1", result.history.size(), snapshot));
    records << nlohmann::json{{"event", "end"}, {"alpha", result.alpha}, {"fibl_before", before}, {"fibl_after", after}}.dump()
            << "\n";
    log << "stage 1: " << result.history.size() << " steps, FIBL " << before << " -> " << after << "\n";
  } else {
    const config::RunConfig& s1cfg = stage1->cfg;
    std::vector<diffusion::Stage2Sample> samples;
    for (const auto& r : train) {
      samples.push_back({model_input(r.stack, cfg),
                         wtformer::wtformer_forward(model_input(r.stack, s1cfg), *stage1->model), r.target});
    }
    diffusion::Denoiser model(cfg.denoiser_config());
    auto on_nan = [&](const diffusion::Denoiser& m, int step) {
      write_checkpoint(dir / "stage2.nan.ckpt", capture_parameters(m.parameters(), "stage2", step, snapshot));
    };
    const auto result = diffusion::train_stage2(model, samples, cfg.noise_schedule(), cfg.stage2_config(), on_nan);
    for (const auto& h : result.history) {
      records << nlohmann::json{{"step", h.step},         {"t", h.t},
                                {"total", h.total},       {"diffusion", h.diffusion},
                                {"wavelet", h.wavelet},   {"grad_norm", h.grad_norm}}
                     .dump()
              << "\n";
    }
    write_checkpoint(dir / "stage2.ckpt", capture_parameters(model.parameters(), "stage2", result.history.size(), snapshot));
    records << nlohmann::json{{"event", "end"}}.dump() << "\n";
    log << "stage 2: " << result.history.size() << " steps, L_diff " << result.history.front().diffusion << " -> "
        << result.history.back().diffusion << "\n";
  }
  timing << nlohmann::json{{"stage", opts.stage}, {"wall_s", seconds_since(t0)}}.dump() << "\n";
  if (!records || !timing) throw IoError("failed to append training logs in " + dir.string());
}

// ------------------------------------------------------------------- retrieve

int cmd_retrieve(const config::RunConfig& cfg, const RetrieveOptions& opts, std::ostream& log, std::ostream& err) {
  cfg.validate();
  if (opts.out_dir.empty()) throw ValidationError("retrieve: output directory required");
  const fs::path dir = resolve_checkpoint_dir(cfg, opts.checkpoint_dir);
  const LoadedStage1 s1 = load_stage1(opts.stage1_checkpoint.empty() ? dir / "stage1.ckpt" : fs::path(opts.stage1_checkpoint));
  std::optional<LoadedStage2> s2;
  if (!opts.coarse_only) {
    s2 = load_stage2(opts.stage2_checkpoint.empty() ? dir / "stage2.ckpt" : fs::path(opts.stage2_checkpoint));
  }
  ensure_dir(opts.out_dir);
  config::save_snapshot(cfg, (fs::path(opts.out_dir) / "retrieve.config.ini").string());

  // Per-event loading so one bad event does not stop the rest.
  const std::string archive =
      !opts.archive.empty() ? opts.archive : cfg.data.source == config::DataSource::archive ? cfg.data.archive : "";
  std::vector<std::string> ids = opts.events;
  std::vector<data::EventRecord> synthetic;
  if (archive.empty()) {
    synthetic = load_records(cfg, opts.subset);
    if (ids.empty()) ids = ids_of(synthetic);
  } else if (ids.empty()) {
    std::vector<data::EventRecord> all;
    for (const auto& id : data::list_events(archive)) all.push_back({id, {}, {}, {}});
    ids = ids_of(select_subset(std::move(all), cfg, opts.subset));
  }

  int status = kOk;
  int written = 0;
  for (const std::string& id : ids) {
    try {
      data::EventRecord rec;
      if (archive.empty()) {
        const auto it = std::find_if(synthetic.begin(), synthetic.end(), [&](const auto& r) { return r.event_id == id; });
        if (it == synthetic.end()) {
          throw ArchiveError(ArchiveError::Kind::missing_event, id, "event not found: " + id);
        }
        rec = *it;
      } else {
        const std::string one[] = {id};
        rec = data::normalize(data::load_archive(archive, one).front());
      }
      Raster out = wtformer::wtformer_forward(model_input(rec.stack, s1.cfg), *s1.model);
      if (!opts.coarse_only) {
        std::mt19937_64 rng(cfg.run.seed ^ fnv1a(id));
        // Residual mode is fixed at training time; sampler settings are per run.
        diffusion::RefineOptions ro{.sampling_steps = cfg.diffusion.sampler_steps,
                                    .residual = s2->cfg.diffusion.residual,
                                    .sampler = cfg.diffusion.sampler};
        out = diffusion::refine(out, model_input(rec.stack, s2->cfg), *s2->model, s2->cfg.noise_schedule(), rng, ro);
      }
      data::write_tensor_file((fs::path(opts.out_dir) / (id + ".tensor")).string(), out.to_tensor().reshaped({1, out.height(), out.width()}),
                              data::DType::f64);
      ++written;
    } catch (const Error& e) {
      err << "event " << id << ": " << e.what() << "\n";
      if (status == kOk) status = exit_code_for(e);
    }
  }
  log << "retrieve: wrote " << written << " of " << ids.size() << " events to " << opts.out_dir
      << (opts.coarse_only ? " (coarse only)" : "") << "\n";
  return status;
}

// ------------------------------------------------------------------- evaluate

metrics::MetricReport cmd_evaluate(const config::RunConfig& cfg, const EvaluateOptions& opts, std::ostream& log) {
  if (opts.pred_dir.empty() || opts.out_prefix.empty()) throw ValidationError("evaluate: --pred and --out are required");
  auto records = load_records(cfg, opts.subset, opts.archive);
  if (!opts.events.empty()) {
    std::vector<data::EventRecord> chosen;
    for (const auto& id : opts.events) {
      const auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.event_id == id; });
      if (it == records.end()) throw ArchiveError(ArchiveError::Kind::missing_event, id, "target event not found: " + id);
      chosen.push_back(*it);
    }
    records = std::move(chosen);
  }
  if (records.empty()) throw ValidationError("evaluate: no target events selected");

  std::vector<Raster> preds, targets;
  for (const auto& r : records) {
    const fs::path file = fs::path(opts.pred_dir) / (r.event_id + ".tensor");
    if (!fs::is_regular_file(file)) throw IoError("missing prediction for event " + r.event_id + " (" + file.string() + ")");
    const Tensor t = data::read_tensor_file(file.string());
    if (t.size() != r.target.size()) {
      throw ValidationError("prediction for event " + r.event_id + " has shape " + to_string(t.shape()));
    }
    Raster p(r.target.height(), r.target.width(), std::vector<double>(t.values().begin(), t.values().end()), Modality::vil);
    for (double& v : p.values()) v *= data::kRawMax;
    Raster y = r.target;
    for (double& v : y.values()) v *= data::kRawMax;
    preds.push_back(std::move(p));
    targets.push_back(std::move(y));
  }
  metrics::MetricReport rep = metrics::report(preds, targets);
  rep.label = opts.label;
  write_text(opts.out_prefix + ".txt", metrics::to_text(rep));
  write_text(opts.out_prefix + ".json", metrics::to_json(rep));
  log << "evaluate: " << rep.samples << " events, avg CSI "
      << (rep.avg_csi ? std::to_string(*rep.avg_csi) : std::string("undefined")) << "\n";
  return rep;
}

// ----------------------------------------------------------------------- plot

void cmd_plot_report(const std::string& report_json, const std::string& out_png) {
  std::ifstream is(report_json);
  if (!is) throw IoError("cannot read report " + report_json);
  std::stringstream ss;
  ss << is.rdbuf();
  ensure_parent(out_png);
  plot::write_png(plot::render_scores(metrics::report_from_json(ss.str())), out_png);
}

void cmd_plot_event(const config::RunConfig& cfg, const PlotEventOptions& opts) {
  if (opts.event.empty() || opts.out_png.empty()) throw ValidationError("plot: --event and --out are required");
  const auto records = load_records(cfg, "all", opts.archive);
  const auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.event_id == opts.event; });
  if (it == records.end()) throw ArchiveError(ArchiveError::Kind::missing_event, opts.event, "event not found: " + opts.event);
  const data::EventRecord raw = data::denormalize(*it);

  std::vector<plot::Panel> panels;
  panels.push_back({raw.stack.channel(raw.stack.index_of(Modality::ir107)), plot::PanelStyle::grayscale});
  for (const std::string& dir : {opts.coarse_dir, opts.refined_dir}) {
    if (dir.empty()) continue;
    const fs::path file = fs::path(dir) / (opts.event + ".tensor");
    if (!fs::is_regular_file(file)) throw IoError("missing prediction " + file.string());
    const Tensor t = data::read_tensor_file(file.string());
    if (t.size() != raw.target.size()) throw ValidationError("prediction shape mismatch in " + file.string());
    Raster p(raw.target.height(), raw.target.width(), std::vector<double>(t.values().begin(), t.values().end()), Modality::vil);
    for (double& v : p.values()) v *= data::kRawMax;
    panels.push_back({p, plot::PanelStyle::vil});
  }
  panels.push_back({raw.target, plot::PanelStyle::vil});
  ensure_parent(opts.out_png);
  plot::write_png(plot::render_panels(panels), opts.out_png);
}

// --------------------------------------------------------------------- ablate

std::vector<metrics::MetricReport> cmd_ablate(const config::RunConfig& cfg, const std::string& out_dir,
                                              std::ostream& log) {
  cfg.validate();
  if (out_dir.empty()) throw ValidationError("ablate: output directory required");
  const fs::path root = out_dir;
  ensure_dir(root);
  config::save_snapshot(cfg, (root / "ablate.config.ini").string());

  struct Variant {
    std::string name;
    config::RunConfig cfg;
    std::string stage1_from;  // reuse another variant's stage-1 checkpoint
    bool coarse_only = false;
  };
  std::vector<Variant> variants;
  variants.push_back({"full", cfg, "", false});
  variants.push_back({"no_wtf", cfg, "", false});
  variants.back().cfg.model.use_wtf = false;
  variants.push_back({"no_vis", cfg, "", false});
  variants.back().cfg.model.use_vis = false;
  variants.push_back({"no_dedr", cfg, "full", true});
  variants.push_back({"no_hlf", cfg, "full", false});
  variants.back().cfg.diffusion.use_hlf = false;

  std::vector<metrics::MetricReport> reports;
  std::ostringstream summary;
  summary << std::left << std::setw(10) << "variant" << std::setw(12) << "avg_csi" << std::setw(12) << "avg_hss"
          << std::setw(12) << "csi_pool4" << std::setw(12) << "csi_pool16" << "ssim\n";
  for (const Variant& v : variants) {
    const fs::path dir = root / v.name;
    const std::string s1 = v.stage1_from.empty() ? (dir / "stage1.ckpt").string()
                                                 : (root / v.stage1_from / "stage1.ckpt").string();
    TrainOptions to;
    to.checkpoint_dir = dir.string();
    if (v.stage1_from.empty()) cmd_train(v.cfg, to, log);
    if (!v.coarse_only) {
      to.stage = 2;
      to.stage1_checkpoint = s1;
      cmd_train(v.cfg, to, log);
    }
    RetrieveOptions ro;
    ro.checkpoint_dir = dir.string();
    ro.stage1_checkpoint = s1;
    ro.out_dir = (dir / "pred").string();
    ro.subset = "test";
    ro.coarse_only = v.coarse_only;
    std::ostringstream errs;
    if (const int code = cmd_retrieve(v.cfg, ro, log, errs); code != kOk) {
      throw IoError("ablate: retrieval failed for variant " + v.name + ": " + errs.str());
    }
    EvaluateOptions eo;
    eo.pred_dir = ro.out_dir;
    eo.subset = "test";
    eo.out_prefix = (root / (v.name + ".report")).string();
    eo.label = v.name;
    reports.push_back(cmd_evaluate(v.cfg, eo, log));

    const auto& r = reports.back();
    auto f = [](const std::optional<double>& x) {
      std::ostringstream os;
      if (x) os << std::fixed << std::setprecision(4) << *x;
      else os << "undef";
      return os.str();
    };
    summary << std::setw(10) << v.name << std::setw(12) << f(r.avg_csi) << std::setw(12) << f(r.avg_hss)
            << std::setw(12) << f(r.csi_pool4) << std::setw(12) << f(r.csi_pool16) << f(r.ssim) << "\n";
  }
  write_text(root / "ablation.txt", summary.str());
  log << summary.str();
  return reports;
}

// ------------------------------------------------------------------- dispatch

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Satellite-to-radar retrieval: wavelet coarse stage plus diffusion refinement"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "INI run configuration");
  app.add_option("--set", overrides, "Override, e.g. --set run.seed=3 (repeatable)");

  std::string out_path;
  int count = -1;
  auto* make = app.add_subcommand("make-data", "Write a synthetic fixture archive");
  make->add_option("--out", out_path, "Archive path")->required();
  make->add_option("--count", count, "Number of events (overrides data.events)");

  TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "Train stage 1 (coarse) or stage 2 (refinement)");
  train->add_option("--stage", train_opts.stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--checkpoint-dir", train_opts.checkpoint_dir, "Checkpoint directory");
  train->add_option("--stage1-checkpoint", train_opts.stage1_checkpoint, "Stage-1 checkpoint for stage 2");
  train->add_option("--data", train_opts.archive, "Archive path (overrides the configured source)");

  RetrieveOptions ret_opts;
  auto* retrieve = app.add_subcommand("retrieve", "Write per-event predictions");
  retrieve->add_option("--checkpoint-dir", ret_opts.checkpoint_dir, "Checkpoint directory");
  retrieve->add_option("--stage1-checkpoint", ret_opts.stage1_checkpoint);
  retrieve->add_option("--stage2-checkpoint", ret_opts.stage2_checkpoint);
  retrieve->add_option("--data", ret_opts.archive, "Input archive");
  retrieve->add_option("--out", ret_opts.out_dir, "Output directory")->required();
  retrieve->add_option("--split", ret_opts.subset, "all, train, val or test");
  retrieve->add_option("--events", ret_opts.events, "Explicit event ids");
  retrieve->add_flag("--coarse-only", ret_opts.coarse_only, "Emit the stage-1 estimate");

  EvaluateOptions eval_opts;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against targets");
  evaluate->add_option("--pred", eval_opts.pred_dir, "Prediction directory")->required();
  evaluate->add_option("--data", eval_opts.archive, "Target archive");
  evaluate->add_option("--split", eval_opts.subset, "all, train, val or test");
  evaluate->add_option("--events", eval_opts.events, "Explicit event ids");
  evaluate->add_option("--out", eval_opts.out_prefix, "Report prefix (.txt and .json)")->required();
  evaluate->add_option("--label", eval_opts.label);

  std::string report_path;
  PlotEventOptions plot_opts;
  auto* plot_cmd = app.add_subcommand("plot", "Render a report chart or event panels to PNG");
  plot_cmd->add_option("--report", report_path, "Report JSON");
  plot_cmd->add_option("--event", plot_opts.event, "Event id");
  plot_cmd->add_option("--data", plot_opts.archive, "Archive holding the event");
  plot_cmd->add_option("--coarse", plot_opts.coarse_dir, "Coarse prediction directory");
  plot_cmd->add_option("--refined", plot_opts.refined_dir, "Refined prediction directory");
  plot_cmd->add_option("--out", plot_opts.out_png, "PNG path")->required();

  std::string ablate_dir;
  auto* ablate = app.add_subcommand("ablate", "Run the WTF / VIS / DEDR / HLF ablations");
  ablate->add_option("--out", ablate_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    config::RunConfig cfg = config_path.empty() ? config::RunConfig{} : config::load(config_path);
    config::apply_overrides(cfg, overrides);
    if (*make) {
      if (count >= 0) cfg.data.events = count;
      cmd_make_data(cfg, out_path, out);
    } else if (*train) {
      cmd_train(cfg, train_opts, out);
    } else if (*retrieve) {
      return cmd_retrieve(cfg, ret_opts, out, err);
    } else if (*evaluate) {
      cmd_evaluate(cfg, eval_opts, out);
    } else if (*plot_cmd) {
      plot_opts.out_png = plot_opts.out_png;
      if (!report_path.empty()) cmd_plot_report(report_path, plot_opts.out_png);
      else cmd_plot_event(cfg, plot_opts);
    } else if (*ablate) {
      cmd_ablate(cfg, ablate_dir, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kOk;
}

}  // namespace wavec2r::cli
