#include "qtrack/tracker/lifecycle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qtrack::tracker {

using namespace numcore;
using geom::Box3D;
using geom::Vec3;

Box3D propagate_box(const Box3D& box, const scene::EgoPose& prev,
                    const scene::EgoPose& cur, double dt) {
  Box3D b = box;
  // Advance in the previous ego frame, then re-express in the current one.
  b.center.x += b.vx * dt;
  b.center.y += b.vy * dt;
  const geom::Mat4 t = cur.world_to_ego() * prev.ego_to_world();
  b.center = t.apply(b.center);
  const double dyaw = prev.yaw - cur.yaw;
  b.yaw = geom::wrap_angle(b.yaw + dyaw);
  const double c = std::cos(dyaw), s = std::sin(dyaw);
  const double vx = b.vx, vy = b.vy;
  b.vx = c * vx - s * vy;
  b.vy = s * vx + c * vy;
  return b;
}

PqiSeeds seed_pqi_queries(const scene::Scenario& sc,
                          const std::vector<scene::Detection2D>& detections,
                          const std::vector<geom::DepthMap>& depth_maps,
                          const LifecycleConfig& lc) {
  PqiSeeds out;
  for (const auto& det : detections) {
    if (det.box.score < lc.pqi_min_score) continue;
    const int cam = det.box.camera_id;
    if (cam < 0 || cam >= static_cast<int>(depth_maps.size())) {
      ++out.skipped;
      continue;
    }
    const auto depth = depth_maps[static_cast<std::size_t>(cam)].depth_at(
        det.box.u, det.box.v);
    if (!depth) {
      ++out.skipped;
      continue;
    }
    const Vec3 center = geom::lift_pixel(
        sc.cameras[static_cast<std::size_t>(cam)], det.box.u, det.box.v,
        *depth);
    if (lc.pqi_nms_dist > 0.0) {
      bool dup = false;
      for (const auto& b : out.boxes)
        if (std::hypot(b.center.x - center.x, b.center.y - center.y) <
            lc.pqi_nms_dist) {
          dup = true;
          break;
        }
      if (dup) continue;
    }
    Box3D b;
    b.center = center;
    const auto& spec = scene::class_specs()[static_cast<std::size_t>(
        std::clamp(det.box.class_id, 0, scene::kNumClasses - 1))];
    b.length = spec.length;
    b.width = spec.width;
    b.height = spec.height;
    b.yaw = 0.0;
    b.class_id = det.box.class_id;
    b.score = det.box.score;
    b.track_id = -1;
    out.boxes.push_back(b);
    out.classes.push_back(det.box.class_id);
  }
  return out;
}

StepResult track_step(const TrackModel& model, const LifecycleConfig& lc,
                      TrackerState& state, const StepInput& in, AttnMode mode,
                      Rng* rng, bool use_dropout) {
  if (!in.scenario) throw std::invalid_argument("track_step: null scenario");
  const scene::Scenario& sc = *in.scenario;
  const DecoderConfig& cfg = model.config();
  const scene::EgoPose cur_ego =
      sc.frames.at(static_cast<std::size_t>(in.frame)).ego;
  const double dt = sc.config.dt;

  StepResult res;

  // 1. Propagate live tracks into the current frame.
  std::vector<Box3D> prop_boxes;
  for (auto& tr : state.tracks) {
    if (state.has_ego) tr.box = propagate_box(tr.box, state.last_ego, cur_ego, dt);
    tr.box.track_id = tr.id;
    prop_boxes.push_back(tr.box);
    ++tr.age;
  }
  res.n_propagated = static_cast<int>(prop_boxes.size());

  // 2. Prompt-seeded queries from 2D detections + depth lookups.
  PqiSeeds seeds = seed_pqi_queries(sc, in.detections, in.depth_maps, lc);
  std::vector<Box3D>& pqi_boxes = seeds.boxes;
  std::vector<int>& pqi_classes = seeds.classes;
  res.skipped_detections = seeds.skipped;
  res.n_pqi = static_cast<int>(pqi_boxes.size());

  // 3. Learned initial queries.
  const Tensor init_emb = model.init_embeddings();
  const Tensor init_loc = model.init_locations();
  res.n_init = cfg.n_init_queries;

  // 4. Assemble the batch: propagated first, then prompts, then init.
  QueryBatch batch;
  const int n_total = res.n_propagated + res.n_pqi + res.n_init;
  if (n_total == 0) {
    state.last_ego = cur_ego;
    state.has_ego = true;
    return res;
  }
  {
    Tensor emb = Tensor::zeros(res.n_propagated + res.n_pqi, cfg.d_model);
    for (int i = 0; i < res.n_propagated; ++i)
      for (int c = 0; c < cfg.d_model; ++c)
        emb.at(i, c) = state.tracks[static_cast<std::size_t>(i)]
                           .emb[static_cast<std::size_t>(c)];
    for (int i = 0; i < res.n_pqi; ++i) {
      const Tensor ce = model.class_embedding(
          std::clamp(pqi_classes[static_cast<std::size_t>(i)], 0,
                     scene::kNumClasses - 1));
      for (int c = 0; c < cfg.d_model; ++c)
        emb.at(res.n_propagated + i, c) = ce.at(0, c);
    }
    batch.emb = (res.n_propagated + res.n_pqi > 0)
                    ? concat_rows(emb.detach(), init_emb)
                    : init_emb;
    batch.boxes = prop_boxes;
    batch.boxes.insert(batch.boxes.end(), pqi_boxes.begin(), pqi_boxes.end());
    for (int i = 0; i < cfg.n_init_queries; ++i) {
      Box3D b;
      b.center = {init_loc.at(i, 0), init_loc.at(i, 1), init_loc.at(i, 2)};
      b.track_id = -1;
      batch.boxes.push_back(b);
    }
  }

  // 5. Decode.
  res.decode = decode(model, batch, in.token_feats, mode, rng, use_dropout);

  // 6. Lifecycle update for existing tracks.
  std::vector<Track> survivors;
  for (int i = 0; i < res.n_propagated; ++i) {
    Track tr = state.tracks[static_cast<std::size_t>(i)];
    const Box3D& dec = res.decode.boxes[static_cast<std::size_t>(i)];
    tr.box = dec;
    tr.box.track_id = tr.id;
    tr.score = dec.score;
    tr.class_id = dec.class_id;
    tr.emb.resize(static_cast<std::size_t>(cfg.d_model));
    for (int c = 0; c < cfg.d_model; ++c)
      tr.emb[static_cast<std::size_t>(c)] = res.decode.emb.at(i, c);
    if (dec.score >= lc.tau_keep) {
      tr.misses = 0;
      ++tr.hits;
    } else {
      ++tr.misses;
    }
    if (tr.misses <= lc.patience) survivors.push_back(std::move(tr));
  }

  // 7. Births from fresh queries, strongest first, suppressed near live
  // tracks and already accepted births.
  struct Candidate {
    int row;
    double score;
  };
  std::vector<Candidate> cands;
  for (int i = res.n_propagated; i < n_total; ++i) {
    const double s = res.decode.boxes[static_cast<std::size_t>(i)].score;
    if (s >= lc.tau_out) cands.push_back({i, s});
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.score > b.score;
                   });
  for (const auto& cand : cands) {
    const Box3D& dec = res.decode.boxes[static_cast<std::size_t>(cand.row)];
    bool dup = false;
    for (const auto& tr : survivors) {
      if (std::hypot(tr.box.center.x - dec.center.x,
                     tr.box.center.y - dec.center.y) < lc.birth_nms_dist) {
        dup = true;
        break;
      }
    }
    if (dup) continue;
    Track tr;
    tr.id = state.next_id++;
    tr.box = dec;
    tr.box.track_id = tr.id;
    tr.score = dec.score;
    tr.class_id = dec.class_id;
    tr.misses = 0;
    tr.age = 1;
    tr.hits = 1;
    tr.emb.resize(static_cast<std::size_t>(cfg.d_model));
    for (int c = 0; c < cfg.d_model; ++c)
      tr.emb[static_cast<std::size_t>(c)] = res.decode.emb.at(cand.row, c);
    survivors.push_back(std::move(tr));
  }
  state.tracks = std::move(survivors);
  state.last_ego = cur_ego;
  state.has_ego = true;

  // 8. Emit world-frame boxes for confident tracks.
  const geom::Mat4 e2w = cur_ego.ego_to_world();
  for (const auto& tr : state.tracks) {
    if (tr.score < lc.tau_out) continue;
    Box3D b = tr.box;
    b.center = e2w.apply(b.center);
    b.yaw = geom::wrap_angle(b.yaw + cur_ego.yaw);
    const double c = std::cos(cur_ego.yaw), s = std::sin(cur_ego.yaw);
    const double vx = b.vx, vy = b.vy;
    b.vx = c * vx - s * vy;
    b.vy = s * vx + c * vy;
    b.track_id = tr.id;
    b.score = tr.score;
    b.class_id = tr.class_id;
    res.outputs_world.push_back(b);
  }
  return res;
}

}  // namespace qtrack::tracker
