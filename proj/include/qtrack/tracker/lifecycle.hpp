#pragma once

#include <cstdint>
#include <vector>

#include "qtrack/tracker/decoder.hpp"

namespace qtrack::tracker {

struct LifecycleConfig {
  double tau_out = 0.4;       // minimum score to emit a box
  double tau_keep = 0.3;      // minimum score to keep a track alive
  int patience = 5;           // missed frames tolerated before dropping
  double pqi_min_score = 0.1; // 2D detections below this never seed queries
  double pqi_nms_dist = 0.0;  // BEV meters; 0 keeps duplicate-camera seeds
  double birth_nms_dist = 1.0;  // suppress births this close to live tracks
};

struct Track {
  std::int64_t id = -1;
  geom::Box3D box;           // ego frame of the track's last frame
  std::vector<double> emb;   // detached query embedding
  double score = 0.0;
  int class_id = 0;
  int misses = 0;
  int age = 0;
  int hits = 0;
};

struct TrackerState {
  std::vector<Track> tracks;
  std::int64_t next_id = 0;  // never reused
  scene::EgoPose last_ego;
  bool has_ego = false;
};

// Constant-velocity roll-forward of an ego-frame box across an ego move.
geom::Box3D propagate_box(const geom::Box3D& box, const scene::EgoPose& prev,
                          const scene::EgoPose& cur, double dt);

struct StepInput {
  const scene::Scenario* scenario = nullptr;
  int frame = 0;
  Tensor token_feats;  // (n_cameras * cells) x token_feat_dim
  std::vector<scene::Detection2D> detections;  // PQI prompts; may be empty
  std::vector<geom::DepthMap> depth_maps;      // needed when detections given
};

// 3D query boxes lifted from 2D prompts: score-gated detections whose center
// pixel has a depth reading become class-prior-sized boxes at the lifted
// center. `skipped` counts prompts without a usable depth cell.
struct PqiSeeds {
  std::vector<geom::Box3D> boxes;
  std::vector<int> classes;  // aligned with boxes
  int skipped = 0;
};

PqiSeeds seed_pqi_queries(const scene::Scenario& sc,
                          const std::vector<scene::Detection2D>& detections,
                          const std::vector<geom::DepthMap>& depth_maps,
                          const LifecycleConfig& lc);

struct StepResult {
  std::vector<geom::Box3D> outputs_world;  // score >= tau_out, world frame
  int n_propagated = 0;
  int n_pqi = 0;
  int n_init = 0;
  int skipped_detections = 0;  // prompts without a usable depth cell
  DecodeResult decode;
};

// One inference step: propagate state, assemble [propagated | prompt-seeded |
// learned-init] queries, decode, update lifecycles. Query embeddings are
// detached into the state; ids increase monotonically and are never reused.
// use_dropout enables FFN dropout during the decode (MC-dropout probes).
StepResult track_step(const TrackModel& model, const LifecycleConfig& lc,
                      TrackerState& state, const StepInput& in, AttnMode mode,
                      Rng* rng, bool use_dropout = false);

}  // namespace qtrack::tracker
