#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qtrack/hqd/hqd.hpp"
#include "qtrack/losses/losses.hpp"
#include "qtrack/scenegen/scenegen.hpp"
#include "qtrack/tracker/lifecycle.hpp"
#include "qtrack/tracker/model.hpp"

namespace qtrack::cli {

// How noised denoise-queries are labeled during training.
enum class HqdMode {
  Hierarchical,  // three-way split at (beta_lower, beta_upper)
  Single,        // two-way split at beta_single (no ignore band)
  AllPos,        // every noised query supervised toward its gt
};

struct TrainConfig {
  std::vector<std::uint64_t> seeds{0};  // scenario seeds to train on
  std::uint64_t model_seed = 0;         // weight initialization stream
  int epochs = 1;
  int window = 3;         // consecutive frames per optimization step
  int window_stride = 1;  // start-frame spacing between windows
  double lr = 0.01;
  double lr_floor = 0.0;  // cosine schedule floor, as a fraction of lr
  double weight_decay = 0.001;
  bool use_pqi = true;
  bool use_hqd = true;
  int hqd_groups = 3;
  double hqd_beta_lower = 0.3;
  double hqd_beta_upper = 0.7;
  double hqd_beta_single = 0.5;  // used by HqdMode::Single
  HqdMode hqd_mode = HqdMode::Hierarchical;
  hqd::NoiseConfig noise{0.4, 0.4, 0.1, 0.5};
};

// Observation noise, shared by training and evaluation.
struct DetConfig {
  scene::DetectionNoise noise{2.0, 0.1, 0.1, 0.1, 0.05};
  double feat_noise_std = 0.02;  // token evidence-channel noise
};

struct EvalConfig {
  std::vector<std::uint64_t> seeds{0};
  double gate = 2.0;            // BEV association gate, meters
  int uncertainty_samples = 0;  // 0 disables the probe; otherwise >= 2
  int probe_stride = 10;        // probe every k-th frame
  double probe_dropout = 0.1;   // dropout rate forced during probe decodes
  bool stratified = true;
  bool svg = true;
  bool oracle = false;  // emit ground truth instead of running the model
  int workers = 1;
  std::vector<std::string> ensemble;  // checkpoint paths; >= 2 switches the
                                      // probe from mc-dropout to ensemble
};

struct AblateConfig {
  std::vector<std::string> cells{"baseline", "upd", "pqi", "hqd", "full"};
  bool beta_modes = false;  // add all_pos / single / hierarchical rows
  bool beta_grid = false;   // add the (lower x upper) threshold grid
  std::vector<double> beta_lowers{0.2, 0.3, 0.4};
  std::vector<double> beta_uppers{0.6, 0.65, 0.7, 0.75};
};

struct ExperimentConfig {
  scene::ScenarioConfig scenario;  // per-run seeds override scenario.seed
  tracker::DecoderConfig model;
  tracker::LifecycleConfig lifecycle;
  losses::LossWeights weights;
  losses::FocalConfig focal;
  TrainConfig train;
  DetConfig det;
  EvalConfig eval;
  AblateConfig ablate;

  // Cross-field consistency + the sub-config validators. Throws
  // std::invalid_argument naming the offending field.
  void validate() const;
};

// Flat `key = value` text: one assignment per line, '#' comments, blank
// lines ignored. Unknown keys and malformed values throw with the key named.
// The result is validated.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Applies a `--toggle` flag value of the form pqi|upd|hqd=on|off.
void apply_toggle(ExperimentConfig& cfg, const std::string& spec);

const char* hqd_mode_name(HqdMode m);

}  // namespace qtrack::cli
