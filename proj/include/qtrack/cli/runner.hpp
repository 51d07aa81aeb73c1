#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "qtrack/cli/config.hpp"
#include "qtrack/metrics/metrics.hpp"

namespace qtrack::cli {

// --- training ---------------------------------------------------------------

struct TrainResult {
  std::string checkpoint_path;
  int steps = 0;
  double first_total = 0.0;  // window loss of the first optimization step
  double last_total = 0.0;
};

// Trains on sliding windows of `train.window` consecutive frames per
// scenario seed. Writes checkpoint.json, train_log.jsonl (one LossBreakdown
// per step) and train_summary.json into out_dir. Deterministic in
// (config, seeds): reruns are byte-identical.
TrainResult run_train(const ExperimentConfig& cfg, const std::string& out_dir);

// --- evaluation ---------------------------------------------------------------

struct ProbeReport {
  bool ran = false;
  double entropy = 0.0;        // mean over probed frames
  double score_std = 0.0;
  double center_spread = 0.0;  // mean per-coordinate std of box centers
  int frames = 0;              // probed frames
};

struct SeedMetrics {
  std::uint64_t seed = 0;
  metrics::ClearMotResult clear;
  metrics::AmotaResult amota;
  metrics::StratifiedAmota strat;
  metrics::StratifiedResult bands;
  double latency = 0.0;
  ProbeReport probe;
};

struct EvalReport {
  std::vector<SeedMetrics> per_seed;
  // means over seeds with defined metrics; count sums
  double amota = 0.0, amotp = 0.0, mota = 0.0, motp = 0.0, recall = 0.0;
  double latency = 0.0;
  int ids = 0, fp = 0, fn = 0, n_gt = 0;
  ProbeReport probe;
};

// Evaluates the checkpoint on every eval seed (worker pool, results merged
// in seed order). Empty checkpoint path keeps freshly initialized weights;
// eval.oracle bypasses the model and replays ground truth. Writes
// metrics.json, metrics.csv, report.txt and (optionally) scene_<seed>.svg
// into out_dir; all outputs are byte-reproducible.
EvalReport run_eval(const ExperimentConfig& cfg,
                    const std::string& checkpoint_path,
                    const std::string& out_dir);

// --- ablation -----------------------------------------------------------------

struct AblationRow {
  std::string name;
  EvalReport report;
};

// One train+eval per cell (module toggles, optionally the HQD labeling-mode
// rows and the beta threshold grid), shared seeds. Writes ablation.csv and
// per-cell artifacts under out_dir/<cell>/.
std::vector<AblationRow> run_ablate(const ExperimentConfig& cfg,
                                    const std::string& out_dir);

// --- self tests -----------------------------------------------------------------

// Frozen-seed gradient spot checks (losses + attention). Prints one line per
// check; returns 0 when all pass.
int run_gradcheck(std::ostream& os);

// Hand-arithmetic metric fixtures. Prints one line per fixture; returns 0
// when all pass.
int run_metrics_selftest(std::ostream& os);

// --- plots ----------------------------------------------------------------------

// BEV trajectory plot: gt tracks in one gray stroke style, predictions
// colored by track id, ego path dashed.
std::string render_bev_svg(const scene::Scenario& scenario,
                           const std::vector<metrics::FrameData>& frames);

}  // namespace qtrack::cli
