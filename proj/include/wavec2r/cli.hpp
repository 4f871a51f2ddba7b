#pragma once

#include <exception>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wavec2r/config.hpp"
#include "wavec2r/data.hpp"
#include "wavec2r/diffusion.hpp"
#include "wavec2r/metrics.hpp"
#include "wavec2r/wtformer.hpp"

namespace wavec2r::cli {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kValidation = 2,
  kConfiguration = 3,
  kIo = 4,
  kNumeric = 5,
};

int exit_code_for(const std::exception& e);

/// Flag > config file > $WAVEC2R_CHECKPOINT_DIR > "checkpoints".
std::string resolve_checkpoint_dir(const config::RunConfig& cfg, const std::string& flag = {});

/// Records named by `subset` ("all", "train", "val", "test") after the
/// configured seeded split. `archive` overrides the configured source.
std::vector<data::EventRecord> load_records(const config::RunConfig& cfg, const std::string& subset,
                                            const std::string& archive = {});

/// Drops the vis channel when the config disables it.
ObservationStack model_input(const ObservationStack& stack, const config::RunConfig& cfg);

// --------------------------------------------------------------- commands

/// Writes cfg.data.events synthetic events to `out_path`, a config snapshot
/// beside it, and per-threshold pixel counts to `log`.
void cmd_make_data(const config::RunConfig& cfg, const std::string& out_path, std::ostream& log);

struct TrainOptions {
  int stage = 1;
  std::string checkpoint_dir;
  /// Stage 2 only; defaults to <checkpoint_dir>/stage1.ckpt.
  std::string stage1_checkpoint;
  std::string archive;
};

/// Trains one stage; writes stageN.ckpt, stageN.config.ini and appends to
/// stageN.log (deterministic records) and stageN.timing.log (wall time).
void cmd_train(const config::RunConfig& cfg, const TrainOptions& opts, std::ostream& log);

struct RetrieveOptions {
  std::string checkpoint_dir;
  std::string stage1_checkpoint;
  std::string stage2_checkpoint;
  std::string archive;
  std::string out_dir;
  std::string subset = "all";
  std::vector<std::string> events;
  bool coarse_only = false;
};

/// Writes <out_dir>/<event_id>.tensor (f64, shape (1, H, W), normalized).
/// Per-event failures are reported and skipped; returns the exit code of the
/// first failure, or kOk.
int cmd_retrieve(const config::RunConfig& cfg, const RetrieveOptions& opts, std::ostream& log, std::ostream& err);

struct EvaluateOptions {
  std::string pred_dir;
  std::string archive;
  std::string subset = "all";
  std::vector<std::string> events;
  /// Writes <out_prefix>.txt and <out_prefix>.json.
  std::string out_prefix;
  std::string label;
};

metrics::MetricReport cmd_evaluate(const config::RunConfig& cfg, const EvaluateOptions& opts, std::ostream& log);

/// Bar chart of a saved report.
void cmd_plot_report(const std::string& report_json, const std::string& out_png);

struct PlotEventOptions {
  std::string archive;
  std::string event;
  std::string coarse_dir;
  std::string refined_dir;
  std::string out_png;
};

/// Panels: ir107 input, coarse, refined, target (missing prediction dirs are
/// skipped).
void cmd_plot_event(const config::RunConfig& cfg, const PlotEventOptions& opts);

/// Runs the full model and the WTF / VIS / DEDR / HLF ablations at the
/// configured scale, writing one report per variant plus ablation.txt.
std::vector<metrics::MetricReport> cmd_ablate(const config::RunConfig& cfg, const std::string& out_dir,
                                              std::ostream& log);

/// Parses arguments and dispatches; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wavec2r::cli
