#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "qtrack/cli/runner.hpp"
#include "qtrack/losses/losses.hpp"
#include "qtrack/matcher/matcher.hpp"
#include "qtrack/numcore/checkpoint.hpp"
#include "qtrack/tracker/decoder.hpp"

namespace qtrack::cli {

using numcore::Rng;
using numcore::Tensor;
using tracker::AttnMode;

namespace {

// Flattens per-camera token grids into one (total_cells x feat_dim) tensor,
// cameras in id order.
Tensor tokens_tensor(const std::vector<scene::TokenGrid>& grids) {
  int total = 0;
  const int fd = grids.empty() ? scene::token_feat_dim() : grids[0].feat_dim;
  for (const auto& g : grids) total += g.grid_w * g.grid_h;
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(total) * fd);
  for (const auto& g : grids)
    flat.insert(flat.end(), g.feats.begin(), g.feats.end());
  return Tensor::from(std::move(flat), total, fd);
}

// Queries matched to a gt in the previous frame, re-fed with their refined
// box and the graph-carrying embedding row.
struct Carried {
  Tensor prev_emb;  // full embedding matrix of the previous decode
  std::vector<int> rows;
  std::vector<geom::Box3D> boxes;       // refined numeric, previous ego frame
  std::vector<std::int64_t> gt_ids;     // teacher-forced identity
};

struct FrameLosses {
  losses::LossBreakdown breakdown;
  Carried next;
};

FrameLosses train_frame(const ExperimentConfig& cfg,
                        const tracker::TrackModel& model,
                        const scene::Scenario& scn, int f,
                        const Carried& carried, Rng& rng) {
  const auto& mc = model.config();
  const int n_classes = mc.n_classes;
  const std::vector<geom::Box3D> gts = scene::gts_in_ego(scn, f);
  std::map<std::int64_t, int> gt_by_id;
  for (std::size_t g = 0; g < gts.size(); ++g)
    gt_by_id[gts[g].track_id] = static_cast<int>(g);

  // observations
  const auto grids =
      scene::render_frame_features(scn, f, cfg.det.feat_noise_std, rng);
  const Tensor tokens = tokens_tensor(grids);

  // -- batch assembly: [carried | pqi seeds | learned init | denoise] --------
  const auto& prev_ego = scn.frames[static_cast<std::size_t>(f > 0 ? f - 1 : f)].ego;
  const auto& cur_ego = scn.frames[static_cast<std::size_t>(f)].ego;

  tracker::QueryBatch batch;
  std::vector<int> pre_assigned;  // gt index or -1, carried rows only
  const int n_prop = static_cast<int>(carried.rows.size());
  for (int i = 0; i < n_prop; ++i) {
    geom::Box3D b = tracker::propagate_box(
        carried.boxes[static_cast<std::size_t>(i)], prev_ego, cur_ego,
        scn.config.dt);
    batch.boxes.push_back(b);
    const auto it = gt_by_id.find(carried.gt_ids[static_cast<std::size_t>(i)]);
    pre_assigned.push_back(it == gt_by_id.end() ? -1 : it->second);
  }

  tracker::PqiSeeds seeds;
  if (cfg.train.use_pqi) {
    const auto dets = scene::oracle_detections(scn, f, cfg.det.noise, rng);
    const auto depth_maps = scene::make_depth_maps(scn, f);
    seeds = tracker::seed_pqi_queries(scn, dets, depth_maps, cfg.lifecycle);
  }
  const int n_pqi = static_cast<int>(seeds.boxes.size());
  batch.boxes.insert(batch.boxes.end(), seeds.boxes.begin(),
                     seeds.boxes.end());

  const Tensor init_emb = model.init_embeddings();
  const Tensor init_loc = model.init_locations();
  const int n_init = mc.n_init_queries;
  for (int i = 0; i < n_init; ++i) {
    geom::Box3D b;
    b.center = {init_loc.at(i, 0), init_loc.at(i, 1), init_loc.at(i, 2)};
    b.track_id = -1;
    batch.boxes.push_back(b);
  }
  const int n_normal = n_prop + n_pqi + n_init;

  std::vector<hqd::NoisedQuery> noised;
  if (cfg.train.use_hqd && !gts.empty()) {
    double bl = cfg.train.hqd_beta_lower, bu = cfg.train.hqd_beta_upper;
    if (cfg.train.hqd_mode == HqdMode::Single)
      bl = bu = cfg.train.hqd_beta_single;
    noised = hqd::make_noised_queries(gts, cfg.train.hqd_groups,
                                      cfg.train.noise, bl, bu, rng);
    if (cfg.train.hqd_mode == HqdMode::AllPos)
      for (auto& q : noised) q.label = hqd::DenoiseLabel::Pos;
    for (const auto& q : noised) batch.boxes.push_back(q.box);
    batch.self_mask = hqd::build_attention_mask(
        n_normal, cfg.train.hqd_groups, static_cast<int>(gts.size()));
  }
  const int n_total = n_normal + static_cast<int>(noised.size());

  // embeddings, in the same row order
  const Tensor cls_emb = model.store().get("cls_emb");
  std::vector<Tensor> parts;
  if (n_prop > 0)
    parts.push_back(numcore::select_rows(carried.prev_emb, carried.rows));
  if (n_pqi > 0) {
    std::vector<int> cls;
    for (int c : seeds.classes)
      cls.push_back(std::clamp(c, 0, n_classes - 1));
    parts.push_back(numcore::select_rows(cls_emb, cls));
  }
  parts.push_back(init_emb);
  if (!noised.empty()) {
    std::vector<int> cls;
    for (const auto& q : noised)
      cls.push_back(std::clamp(
          gts[static_cast<std::size_t>(q.gt_index)].class_id, 0,
          n_classes - 1));
    parts.push_back(numcore::select_rows(cls_emb, cls));
  }
  Tensor emb = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i)
    emb = numcore::concat_rows(emb, parts[i]);
  batch.emb = emb;

  // -- decode -----------------------------------------------------------------
  const AttnMode mode =
      mc.probabilistic ? AttnMode::Sample : AttnMode::Deterministic;
  const tracker::DecodeResult dec = tracker::decode(
      model, batch, tokens, mode, &rng, mc.dropout_rate > 0.0);

  // -- assignment ---------------------------------------------------------------
  std::vector<int> assigned(static_cast<std::size_t>(n_normal), -1);
  std::vector<char> gt_claimed(gts.size(), 0);
  for (int i = 0; i < n_prop; ++i) {
    const int g = pre_assigned[static_cast<std::size_t>(i)];
    if (g >= 0 && !gt_claimed[static_cast<std::size_t>(g)]) {
      assigned[static_cast<std::size_t>(i)] = g;
      gt_claimed[static_cast<std::size_t>(g)] = 1;
    }
  }
  std::vector<int> free_gts;
  for (std::size_t g = 0; g < gts.size(); ++g)
    if (!gt_claimed[g]) free_gts.push_back(static_cast<int>(g));
  if (!free_gts.empty() && n_normal > n_prop) {
    const int n_free = n_normal - n_prop;
    std::vector<double> probs;
    probs.reserve(static_cast<std::size_t>(n_free) * (n_classes + 1));
    std::vector<geom::Vec3> centers;
    for (int i = n_prop; i < n_normal; ++i) {
      for (int c = 0; c <= n_classes; ++c)
        probs.push_back(dec.cls_probs.at(i, c));
      centers.push_back(dec.boxes[static_cast<std::size_t>(i)].center);
    }
    std::vector<geom::Box3D> sub_gts;
    for (int g : free_gts) sub_gts.push_back(gts[static_cast<std::size_t>(g)]);
    const auto cost = match::build_train_costs(probs, n_classes + 1, centers,
                                               sub_gts, {});
    const auto as = match::hungarian(cost, n_free,
                                     static_cast<int>(sub_gts.size()));
    for (int r = 0; r < n_free; ++r) {
      const int c = as.row_to_col[static_cast<std::size_t>(r)];
      if (c >= 0)
        assigned[static_cast<std::size_t>(n_prop + r)] =
            free_gts[static_cast<std::size_t>(c)];
    }
  }

  // -- losses --------------------------------------------------------------------
  const Tensor cls_n = numcore::slice_rows(dec.cls_logits, 0, n_normal);
  const Tensor box_n = numcore::slice_rows(dec.box_pred, 0, n_normal);
  const losses::TrackingLoss tr =
      losses::tracking_loss(cls_n, box_n, assigned, gts, n_classes, cfg.focal);

  losses::PqiLoss pqi{Tensor::scalar(0.0), Tensor::scalar(0.0)};
  if (cfg.train.use_pqi) {
    const auto aux = scene::aux_targets(scn, f);
    const int cells_per_cam =
        grids.empty() ? 0 : grids[0].grid_w * grids[0].grid_h;
    std::vector<int> cls_targets(static_cast<std::size_t>(tokens.rows()),
                                 n_classes);
    std::vector<int> pos_rows;
    std::vector<double> box_tgt, depth_tgt;
    for (const auto& t : aux) {
      const int row = t.camera_id * cells_per_cam + t.cell;
      if (row < 0 || row >= tokens.rows()) continue;
      cls_targets[static_cast<std::size_t>(row)] = t.class_id;
      pos_rows.push_back(row);
      const auto& g = grids[static_cast<std::size_t>(t.camera_id)];
      const double su = g.token_u[static_cast<std::size_t>(t.cell)];
      const double sv = g.token_v[static_cast<std::size_t>(t.cell)];
      const double stride = scn.config.token_stride;
      box_tgt.push_back((t.u - su) / stride);
      box_tgt.push_back((t.v - sv) / stride);
      box_tgt.push_back(std::log(std::max(t.w, 1e-3)));
      box_tgt.push_back(std::log(std::max(t.h, 1e-3)));
      depth_tgt.push_back(t.depth / scene::kDepthScale);
    }
    const Tensor pqi_logits = model.pqi_cls_logits(tokens);
    Tensor box_pred_rows, box_tgt_t, depth_pred_rows, depth_tgt_t;
    if (!pos_rows.empty()) {
      box_pred_rows = numcore::select_rows(model.pqi_box(tokens), pos_rows);
      box_tgt_t = Tensor::from(std::move(box_tgt),
                               static_cast<int>(pos_rows.size()), 4);
      depth_pred_rows =
          numcore::select_rows(model.pqi_depth(tokens), pos_rows);
      depth_tgt_t = Tensor::from(std::move(depth_tgt),
                                 static_cast<int>(pos_rows.size()), 1);
    }
    pqi = losses::pqi_aux_loss(pqi_logits, cls_targets, box_pred_rows,
                               box_tgt_t, depth_pred_rows, depth_tgt_t,
                               cfg.focal);
  }

  losses::HqdLoss hq{Tensor::scalar(0.0), Tensor::scalar(0.0),
                     Tensor::scalar(0.0)};
  if (!noised.empty()) {
    const Tensor cls_d = numcore::slice_rows(dec.cls_logits, n_normal, n_total);
    const Tensor box_d = numcore::slice_rows(dec.box_pred, n_normal, n_total);
    hq = losses::hqd_loss(cls_d, box_d, noised, gts, n_classes, cfg.focal);
  }

  FrameLosses out;
  out.breakdown =
      losses::total_loss(tr, pqi, dec.upd_nll, hq, cfg.weights);

  // -- carry matched queries forward ---------------------------------------------
  out.next.prev_emb = dec.emb;
  for (int i = 0; i < n_normal; ++i) {
    const int g = assigned[static_cast<std::size_t>(i)];
    if (g < 0) continue;
    out.next.rows.push_back(i);
    geom::Box3D b = dec.boxes[static_cast<std::size_t>(i)];
    b.track_id = gts[static_cast<std::size_t>(g)].track_id;
    out.next.boxes.push_back(b);
    out.next.gt_ids.push_back(gts[static_cast<std::size_t>(g)].track_id);
  }

  // Also carry the most confident unmatched queries as background-supervised
  // rows: at inference the state accumulates such clutter, and without seeing
  // carried clutter during training the model never learns to keep it
  // suppressed.
  std::vector<std::pair<double, int>> junk;
  for (int i = 0; i < n_normal; ++i) {
    if (assigned[static_cast<std::size_t>(i)] >= 0) continue;
    const double s = tracker::decoded_score(dec.cls_probs, i, n_classes);
    if (s > 0.1) junk.push_back({s, i});
  }
  std::sort(junk.begin(), junk.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  const std::size_t junk_cap = gts.size();
  for (std::size_t j = 0; j < junk.size() && j < junk_cap; ++j) {
    const int i = junk[j].second;
    out.next.rows.push_back(i);
    out.next.boxes.push_back(dec.boxes[static_cast<std::size_t>(i)]);
    out.next.gt_ids.push_back(-1);  // never a gt id: supervised as background
  }
  return out;
}

}  // namespace

TrainResult run_train(const ExperimentConfig& cfg,
                      const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  tracker::DecoderConfig mc = cfg.model;
  mc.tracking_range = cfg.scenario.tracking_range;
  mc.token_feat_dim = scene::token_feat_dim();
  ExperimentConfig ecfg = cfg;
  ecfg.model = mc;

  tracker::TrackModel model(mc, cfg.train.model_seed);
  numcore::AdamW opt(model.store().params(), cfg.train.lr,
                     cfg.train.weight_decay);

  std::vector<scene::Scenario> scenarios;
  for (auto seed : cfg.train.seeds) {
    scene::ScenarioConfig sc = cfg.scenario;
    sc.seed = seed;
    scenarios.push_back(scene::generate_scenario(sc));
  }

  std::vector<std::pair<int, int>> windows;  // (scenario idx, start frame)
  for (std::size_t s = 0; s < scenarios.size(); ++s)
    for (int f0 = 0;
         f0 + cfg.train.window <= scenarios[s].config.n_frames;
         f0 += cfg.train.window_stride)
      windows.push_back({static_cast<int>(s), f0});
  const int total_steps =
      cfg.train.epochs * static_cast<int>(windows.size());

  std::ofstream log(out_dir + "/train_log.jsonl");
  if (!log)
    throw std::runtime_error("train: cannot write to " + out_dir);

  TrainResult res;
  int step = 0;
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    for (const auto& [si, f0] : windows) {
      const auto& scn = scenarios[static_cast<std::size_t>(si)];
      Rng rng(numcore::derive_seed(
          numcore::derive_seed(cfg.train.seeds[static_cast<std::size_t>(si)],
                               static_cast<std::uint64_t>(epoch)),
          static_cast<std::uint64_t>(f0)));

      Carried carried;
      Tensor window_total;
      nlohmann::json leaves;
      double acc[8] = {};
      for (int f = f0; f < f0 + cfg.train.window; ++f) {
        FrameLosses fl = train_frame(ecfg, model, scn, f, carried, rng);
        carried = std::move(fl.next);
        const auto& b = fl.breakdown;
        window_total = window_total.defined()
                           ? numcore::add(window_total, b.total)
                           : b.total;
        acc[0] += b.tracking_cls.item();
        acc[1] += b.tracking_box.item();
        acc[2] += b.pqi_det2d.item();
        acc[3] += b.pqi_depth.item();
        acc[4] += b.upd.item();
        acc[5] += b.hqd_cls_pos.item();
        acc[6] += b.hqd_cls_neg.item();
        acc[7] += b.hqd_box_pos.item();
      }
      numcore::backward(window_total);
      const double lr_scale =
          numcore::cosine_lr_scale(step, total_steps, cfg.train.lr_floor);
      opt.step(lr_scale);
      model.store().zero_grad();

      const double total = window_total.item();
      if (step == 0) res.first_total = total;
      res.last_total = total;
      leaves["step"] = step;
      leaves["epoch"] = epoch;
      leaves["scenario"] =
          cfg.train.seeds[static_cast<std::size_t>(si)];
      leaves["frame0"] = f0;
      leaves["lr_scale"] = lr_scale;
      leaves["total"] = total;
      leaves["tracking_cls"] = acc[0];
      leaves["tracking_box"] = acc[1];
      leaves["pqi_det2d"] = acc[2];
      leaves["pqi_depth"] = acc[3];
      leaves["upd"] = acc[4];
      leaves["hqd_cls_pos"] = acc[5];
      leaves["hqd_cls_neg"] = acc[6];
      leaves["hqd_box_pos"] = acc[7];
      log << leaves.dump() << "\n";
      ++step;
    }
  }
  res.steps = step;

  res.checkpoint_path = out_dir + "/checkpoint.json";
  numcore::save_checkpoint(model.store(), res.checkpoint_path);

  nlohmann::json summary;
  summary["steps"] = res.steps;
  summary["first_total"] = res.first_total;
  summary["last_total"] = res.last_total;
  std::ofstream sf(out_dir + "/train_summary.json");
  sf << summary.dump(1) << "\n";
  return res;
}

}  // namespace qtrack::cli
