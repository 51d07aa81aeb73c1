#include "qtrack/cli/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace qtrack::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& val) {
  throw std::invalid_argument("config: bad value '" + val + "' for key '" +
                              key + "'");
}

double to_double(const std::string& key, const std::string& val) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(val, &used);
  } catch (const std::exception&) {
    bad_value(key, val);
  }
  if (used != val.size()) bad_value(key, val);
  return d;
}

int to_int(const std::string& key, const std::string& val) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(val, &used);
  } catch (const std::exception&) {
    bad_value(key, val);
  }
  if (used != val.size()) bad_value(key, val);
  return static_cast<int>(v);
}

std::uint64_t to_u64(const std::string& key, const std::string& val) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(val, &used);
  } catch (const std::exception&) {
    bad_value(key, val);
  }
  if (used != val.size()) bad_value(key, val);
  return v;
}

bool to_bool(const std::string& key, const std::string& val) {
  if (val == "true" || val == "on" || val == "1") return true;
  if (val == "false" || val == "off" || val == "0") return false;
  bad_value(key, val);
}

std::vector<std::string> split_list(const std::string& val) {
  std::vector<std::string> out;
  std::stringstream ss(val);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// An empty value is a legal empty list (e.g. evaluating nothing).
std::vector<std::uint64_t> to_seeds(const std::string& key,
                                    const std::string& val) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(val)) out.push_back(to_u64(key, item));
  return out;
}

std::vector<double> to_doubles(const std::string& key,
                               const std::string& val) {
  std::vector<double> out;
  for (const auto& item : split_list(val)) out.push_back(to_double(key, item));
  if (out.empty()) bad_value(key, val);
  return out;
}

HqdMode to_hqd_mode(const std::string& key, const std::string& val) {
  if (val == "hierarchical") return HqdMode::Hierarchical;
  if (val == "single") return HqdMode::Single;
  if (val == "all_pos") return HqdMode::AllPos;
  bad_value(key, val);
}

using Setter = std::function<void(ExperimentConfig&, const std::string&,
                                  const std::string&)>;

const std::map<std::string, Setter>& key_table() {
  static const std::map<std::string, Setter> table = {
      // scenario
      {"scenario.n_frames", [](auto& c, auto& k, auto& v) { c.scenario.n_frames = to_int(k, v); }},
      {"scenario.n_objects", [](auto& c, auto& k, auto& v) { c.scenario.n_objects = to_int(k, v); }},
      {"scenario.dt", [](auto& c, auto& k, auto& v) { c.scenario.dt = to_double(k, v); }},
      {"scenario.tracking_range", [](auto& c, auto& k, auto& v) { c.scenario.tracking_range = to_double(k, v); }},
      {"scenario.spawn_radius_lo", [](auto& c, auto& k, auto& v) { c.scenario.spawn_radius_lo = to_double(k, v); }},
      {"scenario.spawn_radius_hi", [](auto& c, auto& k, auto& v) { c.scenario.spawn_radius_hi = to_double(k, v); }},
      {"scenario.speed_scale", [](auto& c, auto& k, auto& v) { c.scenario.speed_scale = to_double(k, v); }},
      {"scenario.ego_speed", [](auto& c, auto& k, auto& v) { c.scenario.ego_speed = to_double(k, v); }},
      {"scenario.ego_yaw_rate", [](auto& c, auto& k, auto& v) { c.scenario.ego_yaw_rate = to_double(k, v); }},
      {"scenario.yaw_walk_std", [](auto& c, auto& k, auto& v) { c.scenario.yaw_walk_std = to_double(k, v); }},
      {"scenario.yaw_walk_bound", [](auto& c, auto& k, auto& v) { c.scenario.yaw_walk_bound = to_double(k, v); }},
      {"scenario.image_width", [](auto& c, auto& k, auto& v) { c.scenario.image_width = to_int(k, v); }},
      {"scenario.image_height", [](auto& c, auto& k, auto& v) { c.scenario.image_height = to_int(k, v); }},
      {"scenario.token_stride", [](auto& c, auto& k, auto& v) { c.scenario.token_stride = to_int(k, v); }},
      {"scenario.n_cameras", [](auto& c, auto& k, auto& v) { c.scenario.n_cameras = to_int(k, v); }},
      {"scenario.hfov_deg", [](auto& c, auto& k, auto& v) { c.scenario.hfov_deg = to_double(k, v); }},
      {"scenario.max_spawn_attempts", [](auto& c, auto& k, auto& v) { c.scenario.max_spawn_attempts = to_int(k, v); }},
      // model
      {"model.d_model", [](auto& c, auto& k, auto& v) { c.model.d_model = to_int(k, v); }},
      {"model.n_layers", [](auto& c, auto& k, auto& v) { c.model.n_layers = to_int(k, v); }},
      {"model.pair_hidden", [](auto& c, auto& k, auto& v) { c.model.pair_hidden = to_int(k, v); }},
      {"model.ffn_hidden", [](auto& c, auto& k, auto& v) { c.model.ffn_hidden = to_int(k, v); }},
      {"model.n_init_queries", [](auto& c, auto& k, auto& v) { c.model.n_init_queries = to_int(k, v); }},
      {"model.n_bands", [](auto& c, auto& k, auto& v) { c.model.n_bands = to_int(k, v); }},
      {"model.sigma_min", [](auto& c, auto& k, auto& v) { c.model.sigma_min = to_double(k, v); }},
      {"model.temperature", [](auto& c, auto& k, auto& v) { c.model.temperature = to_double(k, v); }},
      {"model.dropout_rate", [](auto& c, auto& k, auto& v) { c.model.dropout_rate = to_double(k, v); }},
      {"model.probabilistic", [](auto& c, auto& k, auto& v) { c.model.probabilistic = to_bool(k, v); }},
      // lifecycle
      {"lifecycle.tau_out", [](auto& c, auto& k, auto& v) { c.lifecycle.tau_out = to_double(k, v); }},
      {"lifecycle.tau_keep", [](auto& c, auto& k, auto& v) { c.lifecycle.tau_keep = to_double(k, v); }},
      {"lifecycle.patience", [](auto& c, auto& k, auto& v) { c.lifecycle.patience = to_int(k, v); }},
      {"lifecycle.pqi_min_score", [](auto& c, auto& k, auto& v) { c.lifecycle.pqi_min_score = to_double(k, v); }},
      {"lifecycle.pqi_nms_dist", [](auto& c, auto& k, auto& v) { c.lifecycle.pqi_nms_dist = to_double(k, v); }},
      {"lifecycle.birth_nms_dist", [](auto& c, auto& k, auto& v) { c.lifecycle.birth_nms_dist = to_double(k, v); }},
      // loss
      {"loss.lambda_tracking", [](auto& c, auto& k, auto& v) { c.weights.tracking = to_double(k, v); }},
      {"loss.lambda_pqi", [](auto& c, auto& k, auto& v) { c.weights.pqi = to_double(k, v); }},
      {"loss.lambda_upd", [](auto& c, auto& k, auto& v) { c.weights.upd = to_double(k, v); }},
      {"loss.lambda_hqd", [](auto& c, auto& k, auto& v) { c.weights.hqd = to_double(k, v); }},
      {"loss.focal_alpha", [](auto& c, auto& k, auto& v) { c.focal.alpha = to_double(k, v); }},
      {"loss.focal_gamma", [](auto& c, auto& k, auto& v) { c.focal.gamma = to_double(k, v); }},
      // train
      {"train.seeds", [](auto& c, auto& k, auto& v) { c.train.seeds = to_seeds(k, v); }},
      {"train.model_seed", [](auto& c, auto& k, auto& v) { c.train.model_seed = to_u64(k, v); }},
      {"train.epochs", [](auto& c, auto& k, auto& v) { c.train.epochs = to_int(k, v); }},
      {"train.window", [](auto& c, auto& k, auto& v) { c.train.window = to_int(k, v); }},
      {"train.window_stride", [](auto& c, auto& k, auto& v) { c.train.window_stride = to_int(k, v); }},
      {"train.lr", [](auto& c, auto& k, auto& v) { c.train.lr = to_double(k, v); }},
      {"train.lr_floor", [](auto& c, auto& k, auto& v) { c.train.lr_floor = to_double(k, v); }},
      {"train.weight_decay", [](auto& c, auto& k, auto& v) { c.train.weight_decay = to_double(k, v); }},
      {"train.use_pqi", [](auto& c, auto& k, auto& v) { c.train.use_pqi = to_bool(k, v); }},
      {"train.use_hqd", [](auto& c, auto& k, auto& v) { c.train.use_hqd = to_bool(k, v); }},
      {"train.hqd_groups", [](auto& c, auto& k, auto& v) { c.train.hqd_groups = to_int(k, v); }},
      {"train.hqd_beta_lower", [](auto& c, auto& k, auto& v) { c.train.hqd_beta_lower = to_double(k, v); }},
      {"train.hqd_beta_upper", [](auto& c, auto& k, auto& v) { c.train.hqd_beta_upper = to_double(k, v); }},
      {"train.hqd_beta_single", [](auto& c, auto& k, auto& v) { c.train.hqd_beta_single = to_double(k, v); }},
      {"train.hqd_mode", [](auto& c, auto& k, auto& v) { c.train.hqd_mode = to_hqd_mode(k, v); }},
      {"train.hqd_lambda_center", [](auto& c, auto& k, auto& v) { c.train.noise.lambda_center = to_double(k, v); }},
      {"train.hqd_lambda_size", [](auto& c, auto& k, auto& v) { c.train.noise.lambda_size = to_double(k, v); }},
      {"train.hqd_yaw_jitter", [](auto& c, auto& k, auto& v) { c.train.noise.yaw_jitter = to_double(k, v); }},
      {"train.hqd_group_scale_step", [](auto& c, auto& k, auto& v) { c.train.noise.group_scale_step = to_double(k, v); }},
      // det
      {"det.pixel_std", [](auto& c, auto& k, auto& v) { c.det.noise.pixel_std = to_double(k, v); }},
      {"det.size_frac_std", [](auto& c, auto& k, auto& v) { c.det.noise.size_frac_std = to_double(k, v); }},
      {"det.score_std", [](auto& c, auto& k, auto& v) { c.det.noise.score_std = to_double(k, v); }},
      {"det.drop_rate", [](auto& c, auto& k, auto& v) { c.det.noise.drop_rate = to_double(k, v); }},
      {"det.min_visibility", [](auto& c, auto& k, auto& v) { c.det.noise.min_visibility = to_double(k, v); }},
      {"det.feat_noise_std", [](auto& c, auto& k, auto& v) { c.det.feat_noise_std = to_double(k, v); }},
      // eval
      {"eval.seeds", [](auto& c, auto& k, auto& v) { c.eval.seeds = to_seeds(k, v); }},
      {"eval.gate", [](auto& c, auto& k, auto& v) { c.eval.gate = to_double(k, v); }},
      {"eval.uncertainty_samples", [](auto& c, auto& k, auto& v) { c.eval.uncertainty_samples = to_int(k, v); }},
      {"eval.probe_stride", [](auto& c, auto& k, auto& v) { c.eval.probe_stride = to_int(k, v); }},
      {"eval.probe_dropout", [](auto& c, auto& k, auto& v) { c.eval.probe_dropout = to_double(k, v); }},
      {"eval.stratified", [](auto& c, auto& k, auto& v) { c.eval.stratified = to_bool(k, v); }},
      {"eval.svg", [](auto& c, auto& k, auto& v) { c.eval.svg = to_bool(k, v); }},
      {"eval.oracle", [](auto& c, auto& k, auto& v) { c.eval.oracle = to_bool(k, v); }},
      {"eval.workers", [](auto& c, auto& k, auto& v) { c.eval.workers = to_int(k, v); }},
      {"eval.ensemble", [](auto& c, auto&, auto& v) { c.eval.ensemble = split_list(v); }},
      // ablate
      {"ablate.cells", [](auto& c, auto&, auto& v) { c.ablate.cells = split_list(v); }},
      {"ablate.beta_modes", [](auto& c, auto& k, auto& v) { c.ablate.beta_modes = to_bool(k, v); }},
      {"ablate.beta_grid", [](auto& c, auto& k, auto& v) { c.ablate.beta_grid = to_bool(k, v); }},
      {"ablate.beta_lowers", [](auto& c, auto& k, auto& v) { c.ablate.beta_lowers = to_doubles(k, v); }},
      {"ablate.beta_uppers", [](auto& c, auto& k, auto& v) { c.ablate.beta_uppers = to_doubles(k, v); }},
  };
  return table;
}

void check_distinct(const std::vector<std::uint64_t>& seeds,
                    const std::string& key) {
  std::set<std::uint64_t> seen;
  for (auto s : seeds)
    if (!seen.insert(s).second)
      throw std::invalid_argument("config: duplicate seed " +
                                  std::to_string(s) + " in " + key);
}

}  // namespace

void ExperimentConfig::validate() const {
  scenario.validate();
  tracker::DecoderConfig m = model;
  m.tracking_range = scenario.tracking_range;
  m.token_feat_dim = scene::token_feat_dim();
  m.validate();
  train.noise.validate();
  check_distinct(train.seeds, "train.seeds");
  check_distinct(eval.seeds, "eval.seeds");
  if (train.epochs < 0)
    throw std::invalid_argument("config: train.epochs must be >= 0");
  if (train.window < 1)
    throw std::invalid_argument("config: train.window must be >= 1");
  if (train.window_stride < 1)
    throw std::invalid_argument("config: train.window_stride must be >= 1");
  if (train.lr <= 0.0)
    throw std::invalid_argument("config: train.lr must be positive");
  if (train.lr_floor < 0.0 || train.lr_floor > 1.0)
    throw std::invalid_argument("config: train.lr_floor must be in [0, 1]");
  if (train.weight_decay < 0.0)
    throw std::invalid_argument("config: train.weight_decay must be >= 0");
  if (train.hqd_groups < 1)
    throw std::invalid_argument("config: train.hqd_groups must be >= 1");
  // exercises the threshold validation (throws on bad ranges)
  hqd::classify(0.5, train.hqd_beta_lower, train.hqd_beta_upper);
  hqd::classify(0.5, train.hqd_beta_single, train.hqd_beta_single);
  if (eval.gate <= 0.0)
    throw std::invalid_argument("config: eval.gate must be positive");
  if (eval.uncertainty_samples == 1 || eval.uncertainty_samples < 0)
    throw std::invalid_argument(
        "config: eval.uncertainty_samples must be 0 or >= 2");
  if (eval.probe_stride < 1)
    throw std::invalid_argument("config: eval.probe_stride must be >= 1");
  if (eval.probe_dropout < 0.0 || eval.probe_dropout >= 1.0)
    throw std::invalid_argument("config: eval.probe_dropout must be in [0, 1)");
  if (eval.workers < 1)
    throw std::invalid_argument("config: eval.workers must be >= 1");
  for (const auto& cell : ablate.cells)
    if (cell != "baseline" && cell != "upd" && cell != "pqi" &&
        cell != "hqd" && cell != "full")
      throw std::invalid_argument("config: unknown ablate cell '" + cell +
                                  "'");
  for (double b : ablate.beta_lowers) hqd::classify(0.5, b, b);
  for (double b : ablate.beta_uppers) hqd::classify(0.5, b, b);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " is not a key = value assignment");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = key_table().find(key);
    if (it == key_table().end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(cfg, key, value);
  }
  // derived model fields pinned to the scenario
  cfg.model.tracking_range = cfg.scenario.tracking_range;
  cfg.model.token_feat_dim = scene::token_feat_dim();
  cfg.model.n_classes = scene::kNumClasses;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f)
    throw std::invalid_argument("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void apply_toggle(ExperimentConfig& cfg, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("toggle: expected module=on|off, got '" +
                                spec + "'");
  const std::string mod = trim(spec.substr(0, eq));
  const std::string val = trim(spec.substr(eq + 1));
  bool on = false;
  if (val == "on")
    on = true;
  else if (val == "off")
    on = false;
  else
    throw std::invalid_argument("toggle: expected on or off, got '" + val +
                                "'");
  if (mod == "pqi")
    cfg.train.use_pqi = on;
  else if (mod == "hqd")
    cfg.train.use_hqd = on;
  else if (mod == "upd")
    cfg.model.probabilistic = on;
  else
    throw std::invalid_argument("toggle: unknown module '" + mod + "'");
}

const char* hqd_mode_name(HqdMode m) {
  switch (m) {
    case HqdMode::Hierarchical: return "hierarchical";
    case HqdMode::Single: return "single";
    case HqdMode::AllPos: return "all_pos";
  }
  return "?";
}

}  // namespace qtrack::cli
