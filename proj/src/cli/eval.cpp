#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "qtrack/cli/runner.hpp"
#include "qtrack/numcore/checkpoint.hpp"

namespace qtrack::cli {
namespace {

using numcore::Rng;
using numcore::Tensor;
using numcore::derive_seed;

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

// Distinct stream tags so feature noise, detection noise and probe draws
// never alias.
constexpr std::uint64_t kFeatStream = 11;
constexpr std::uint64_t kDetStream = 12;
constexpr std::uint64_t kProbeStream = 13;

struct SeedRun {
  SeedMetrics m;
  std::string svg;  // empty when disabled
};

std::vector<geom::Vec3> box_centers(const std::vector<geom::Box3D>& boxes) {
  std::vector<geom::Vec3> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back(b.center);
  return out;
}

SeedRun eval_one(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                 std::uint64_t seed) {
  scene::ScenarioConfig sc_cfg = cfg.scenario;
  sc_cfg.seed = seed;
  const scene::Scenario sc = scene::generate_scenario(sc_cfg);
  const int n_frames = static_cast<int>(sc.frames.size());

  std::vector<metrics::FrameData> frames;
  frames.reserve(static_cast<std::size_t>(n_frames));

  ProbeReport probe;
  if (cfg.eval.oracle) {
    for (const scene::Frame& fr : sc.frames) {
      metrics::FrameData fd;
      fd.gts = fr.gts_world;
      fd.preds = fr.gts_world;
      for (geom::Box3D& p : fd.preds) p.score = 1.0;
      frames.push_back(std::move(fd));
    }
  } else {
    tracker::TrackModel model(cfg.model, cfg.train.model_seed);
    if (!checkpoint_path.empty())
      numcore::load_checkpoint(model.store(), checkpoint_path);

    const bool probing = cfg.eval.uncertainty_samples >= 2;
    const bool ensemble = probing && cfg.eval.ensemble.size() >= 2;
    std::unique_ptr<tracker::TrackModel> dropout_model;
    std::vector<std::unique_ptr<tracker::TrackModel>> members;
    if (probing && !ensemble) {
      tracker::DecoderConfig pc = cfg.model;
      pc.dropout_rate = cfg.eval.probe_dropout;
      dropout_model =
          std::make_unique<tracker::TrackModel>(pc, cfg.train.model_seed);
      numcore::checkpoint_from_json(dropout_model->store(),
                                    numcore::checkpoint_to_json(model.store()));
    }
    if (ensemble) {
      for (const std::string& path : cfg.eval.ensemble) {
        members.push_back(std::make_unique<tracker::TrackModel>(
            cfg.model, cfg.train.model_seed));
        numcore::load_checkpoint(members.back()->store(), path);
      }
    }

    const tracker::AttnMode run_mode = cfg.model.probabilistic
                                           ? tracker::AttnMode::Mean
                                           : tracker::AttnMode::Deterministic;
    tracker::TrackerState state;
    double ent_sum = 0.0, std_sum = 0.0, spread_sum = 0.0;

    for (int f = 0; f < n_frames; ++f) {
      Rng feat_rng(derive_seed(derive_seed(seed, kFeatStream), f));
      const auto grids =
          scene::render_frame_features(sc, f, cfg.det.feat_noise_std, feat_rng);

      tracker::StepInput in;
      in.scenario = &sc;
      in.frame = f;
      in.token_feats = tokens_tensor(grids);
      if (cfg.train.use_pqi) {
        Rng det_rng(derive_seed(derive_seed(seed, kDetStream), f));
        in.detections = scene::oracle_detections(sc, f, cfg.det.noise, det_rng);
        in.depth_maps = scene::make_depth_maps(sc, f);
      }

      if (probing && f % cfg.eval.probe_stride == 0) {
        std::vector<Tensor> prob_samples;
        std::vector<std::vector<geom::Vec3>> center_samples;
        if (ensemble) {
          for (const auto& mem : members) {
            tracker::TrackerState copy = state;
            auto r = tracker::track_step(*mem, cfg.lifecycle, copy, in,
                                         run_mode, nullptr);
            prob_samples.push_back(r.decode.cls_probs);
            center_samples.push_back(box_centers(r.decode.boxes));
          }
        } else {
          const tracker::AttnMode probe_mode =
              cfg.model.probabilistic ? tracker::AttnMode::Sample
                                      : tracker::AttnMode::Deterministic;
          for (int k = 0; k < cfg.eval.uncertainty_samples; ++k) {
            Rng prng(derive_seed(derive_seed(derive_seed(seed, kProbeStream), f),
                                 static_cast<std::uint64_t>(k)));
            tracker::TrackerState copy = state;
            auto r = tracker::track_step(*dropout_model, cfg.lifecycle, copy,
                                         in, probe_mode, &prng, true);
            prob_samples.push_back(r.decode.cls_probs);
            center_samples.push_back(box_centers(r.decode.boxes));
          }
        }
        const auto up =
            metrics::uncertainty_probe(prob_samples, cfg.model.n_classes);
        ent_sum += up.entropy;
        std_sum += up.score_std;
        spread_sum += metrics::center_spread(center_samples);
        ++probe.frames;
      }

      auto res = tracker::track_step(model, cfg.lifecycle, state, in, run_mode,
                                     nullptr);
      metrics::FrameData fd;
      fd.gts = sc.frames[static_cast<std::size_t>(f)].gts_world;
      fd.preds = std::move(res.outputs_world);
      frames.push_back(std::move(fd));
    }
    if (probe.frames > 0) {
      probe.ran = true;
      probe.entropy = ent_sum / probe.frames;
      probe.score_std = std_sum / probe.frames;
      probe.center_spread = spread_sum / probe.frames;
    }
  }

  std::vector<std::vector<scene::Strata>> strata;
  strata.reserve(sc.frames.size());
  for (const scene::Frame& fr : sc.frames) {
    std::vector<scene::Strata> row;
    row.reserve(fr.gts_world.size());
    for (std::size_t g = 0; g < fr.gts_world.size(); ++g)
      row.push_back(scene::strata_of(fr.gts_world[g], fr.visibility[g], fr.ego));
    strata.push_back(std::move(row));
  }

  SeedRun run;
  run.m.seed = seed;
  run.m.clear = metrics::clear_mot(frames, cfg.eval.gate, 0.0);
  run.m.amota = metrics::amota_eval(frames, cfg.eval.gate);
  if (cfg.eval.stratified) {
    run.m.strat = metrics::stratified_amota(frames, strata, cfg.eval.gate);
    run.m.bands = metrics::stratified_eval(frames, strata, cfg.eval.gate, 0.0);
  }
  run.m.latency = metrics::detection_latency(frames, cfg.eval.gate, 0.0);
  run.m.probe = probe;
  if (cfg.eval.svg) run.svg = render_bev_svg(sc, frames);
  return run;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

nlohmann::json amota_json(const metrics::AmotaResult& a) {
  nlohmann::json j;
  j["defined"] = a.defined;
  j["amota"] = a.amota;
  j["amotp"] = a.amotp;
  j["best_recall"] = a.best_recall;
  j["n_gt"] = a.n_gt;
  return j;
}

nlohmann::json bands_json(const std::array<metrics::BandCount, 3>& bc) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& b : bc)
    j.push_back({{"n_gt", b.n_gt}, {"n_matched", b.n_matched},
                 {"recall", b.recall()}});
  return j;
}

nlohmann::json strat_json(const std::array<metrics::AmotaResult, 3>& arr) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& a : arr) j.push_back(amota_json(a));
  return j;
}

nlohmann::json probe_json(const ProbeReport& p) {
  if (!p.ran) return nullptr;
  nlohmann::json j;
  j["entropy"] = p.entropy;
  j["score_std"] = p.score_std;
  j["center_spread"] = p.center_spread;
  j["frames"] = p.frames;
  return j;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("eval: cannot write " + path.string());
  out << text;
}

const char* kBandNames[3] = {"vis", "size", "dist"};

void csv_strat_rows(std::ostream& os, const std::string& scope,
                    const SeedMetrics& m) {
  const std::array<metrics::AmotaResult, 3>* groups[3] = {
      &m.strat.by_visibility, &m.strat.by_size, &m.strat.by_distance};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const metrics::AmotaResult& r = (*groups[a])[static_cast<std::size_t>(b)];
      os << scope << ",amota_" << kBandNames[a] << b << ','
         << (r.defined ? fmt(r.amota) : "nan") << '\n';
    }
  const std::array<metrics::BandCount, 3>* counts[3] = {
      &m.bands.by_visibility, &m.bands.by_size, &m.bands.by_distance};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      os << scope << ",recall_" << kBandNames[a] << b << ','
         << fmt((*counts[a])[static_cast<std::size_t>(b)].recall()) << '\n';
}

void report_strat_line(std::ostream& os, const char* label,
                       const std::array<metrics::AmotaResult, 3>& arr) {
  os << "  amota by " << label << ":";
  for (const auto& a : arr)
    os << ' ' << (a.defined ? fmt6(a.amota) : "undefined");
  os << '\n';
}

}  // namespace

EvalReport run_eval(const ExperimentConfig& cfg,
                    const std::string& checkpoint_path,
                    const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  const std::vector<std::uint64_t>& seeds = cfg.eval.seeds;
  const int n = static_cast<int>(seeds.size());
  std::vector<SeedRun> runs(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));

  const int workers =
      std::max(1, std::min(cfg.eval.workers, n > 0 ? n : 1));
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i)
      runs[static_cast<std::size_t>(i)] =
          eval_one(cfg, checkpoint_path, seeds[static_cast<std::size_t>(i)]);
  } else {
    std::atomic<int> next{0};
    auto work = [&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          runs[static_cast<std::size_t>(i)] = eval_one(
              cfg, checkpoint_path, seeds[static_cast<std::size_t>(i)]);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors)
      if (e) std::rethrow_exception(e);
  }

  EvalReport rep;
  int amota_defined = 0, clear_defined = 0, probed = 0;
  for (const SeedRun& r : runs) {
    rep.per_seed.push_back(r.m);
    if (r.m.amota.defined) {
      rep.amota += r.m.amota.amota;
      rep.amotp += r.m.amota.amotp;
      ++amota_defined;
    }
    if (r.m.clear.defined) {
      rep.mota += r.m.clear.mota;
      rep.motp += r.m.clear.motp;
      rep.recall += r.m.clear.recall;
      ++clear_defined;
    }
    rep.latency += r.m.latency;
    rep.ids += r.m.clear.ids;
    rep.fp += r.m.clear.fp;
    rep.fn += r.m.clear.fn;
    rep.n_gt += r.m.clear.n_gt;
    if (r.m.probe.ran) {
      rep.probe.entropy += r.m.probe.entropy;
      rep.probe.score_std += r.m.probe.score_std;
      rep.probe.center_spread += r.m.probe.center_spread;
      rep.probe.frames += r.m.probe.frames;
      ++probed;
    }
  }
  if (amota_defined > 0) {
    rep.amota /= amota_defined;
    rep.amotp /= amota_defined;
  }
  if (clear_defined > 0) {
    rep.mota /= clear_defined;
    rep.motp /= clear_defined;
    rep.recall /= clear_defined;
  }
  if (n > 0) rep.latency /= n;
  if (probed > 0) {
    rep.probe.ran = true;
    rep.probe.entropy /= probed;
    rep.probe.score_std /= probed;
    rep.probe.center_spread /= probed;
  }

  // metrics.json
  nlohmann::json doc;
  nlohmann::json agg;
  agg["amota"] = rep.amota;
  agg["amotp"] = rep.amotp;
  agg["mota"] = rep.mota;
  agg["motp"] = rep.motp;
  agg["recall"] = rep.recall;
  agg["latency"] = rep.latency;
  agg["ids"] = rep.ids;
  agg["fp"] = rep.fp;
  agg["fn"] = rep.fn;
  agg["n_gt"] = rep.n_gt;
  agg["probe"] = probe_json(rep.probe);
  doc["aggregate"] = agg;
  doc["seeds"] = nlohmann::json::array();
  for (const SeedMetrics& m : rep.per_seed) {
    nlohmann::json j;
    j["seed"] = m.seed;
    j["mota"] = m.clear.mota;
    j["motp"] = m.clear.motp;
    j["recall"] = m.clear.recall;
    j["ids"] = m.clear.ids;
    j["fp"] = m.clear.fp;
    j["fn"] = m.clear.fn;
    j["n_gt"] = m.clear.n_gt;
    j["mota_defined"] = m.clear.defined;
    j["amota"] = amota_json(m.amota);
    j["latency"] = m.latency;
    if (cfg.eval.stratified) {
      j["amota_by_visibility"] = strat_json(m.strat.by_visibility);
      j["amota_by_size"] = strat_json(m.strat.by_size);
      j["amota_by_distance"] = strat_json(m.strat.by_distance);
      j["recall_by_visibility"] = bands_json(m.bands.by_visibility);
      j["recall_by_size"] = bands_json(m.bands.by_size);
      j["recall_by_distance"] = bands_json(m.bands.by_distance);
    }
    j["probe"] = probe_json(m.probe);
    doc["seeds"].push_back(j);
  }
  write_file(fs::path(out_dir) / "metrics.json", doc.dump(1) + "\n");

  // metrics.csv
  std::ostringstream csv;
  csv << "scope,metric,value\n";
  csv << "mean,amota," << fmt(rep.amota) << '\n';
  csv << "mean,amotp," << fmt(rep.amotp) << '\n';
  csv << "mean,mota," << fmt(rep.mota) << '\n';
  csv << "mean,motp," << fmt(rep.motp) << '\n';
  csv << "mean,recall," << fmt(rep.recall) << '\n';
  csv << "mean,latency," << fmt(rep.latency) << '\n';
  csv << "sum,ids," << rep.ids << '\n';
  csv << "sum,fp," << rep.fp << '\n';
  csv << "sum,fn," << rep.fn << '\n';
  csv << "sum,n_gt," << rep.n_gt << '\n';
  if (rep.probe.ran) {
    csv << "mean,probe_entropy," << fmt(rep.probe.entropy) << '\n';
    csv << "mean,probe_score_std," << fmt(rep.probe.score_std) << '\n';
    csv << "mean,probe_center_spread," << fmt(rep.probe.center_spread) << '\n';
  }
  for (const SeedMetrics& m : rep.per_seed) {
    const std::string scope = "seed_" + std::to_string(m.seed);
    csv << scope << ",amota,"
        << (m.amota.defined ? fmt(m.amota.amota) : "nan") << '\n';
    csv << scope << ",amotp,"
        << (m.amota.defined ? fmt(m.amota.amotp) : "nan") << '\n';
    csv << scope << ",best_recall," << fmt(m.amota.best_recall) << '\n';
    csv << scope << ",mota,"
        << (m.clear.defined ? fmt(m.clear.mota) : "nan") << '\n';
    csv << scope << ",motp," << fmt(m.clear.motp) << '\n';
    csv << scope << ",recall," << fmt(m.clear.recall) << '\n';
    csv << scope << ",ids," << m.clear.ids << '\n';
    csv << scope << ",fp," << m.clear.fp << '\n';
    csv << scope << ",fn," << m.clear.fn << '\n';
    csv << scope << ",n_gt," << m.clear.n_gt << '\n';
    csv << scope << ",latency," << fmt(m.latency) << '\n';
    if (cfg.eval.stratified) csv_strat_rows(csv, scope, m);
    if (m.probe.ran) {
      csv << scope << ",probe_entropy," << fmt(m.probe.entropy) << '\n';
      csv << scope << ",probe_score_std," << fmt(m.probe.score_std) << '\n';
      csv << scope << ",probe_center_spread," << fmt(m.probe.center_spread)
          << '\n';
    }
  }
  write_file(fs::path(out_dir) / "metrics.csv", csv.str());

  // report.txt
  std::ostringstream rp;
  rp << "tracking evaluation\n";
  rp << "checkpoint: "
     << (cfg.eval.oracle ? "(oracle passthrough)"
                         : (checkpoint_path.empty() ? "(fresh init)"
                                                    : checkpoint_path))
     << '\n';
  rp << "seeds:";
  for (std::uint64_t s : seeds) rp << ' ' << s;
  if (seeds.empty()) rp << " (none)";
  rp << "\n\n";
  if (seeds.empty()) {
    rp << "no evaluation seeds configured; nothing to report\n";
  } else {
    rp << "aggregate (means over seeds, counts summed)\n";
    if (amota_defined > 0) {
      rp << "  amota    " << fmt6(rep.amota) << '\n';
      rp << "  amotp    " << fmt6(rep.amotp) << '\n';
    } else {
      rp << "  amota    undefined: no ground-truth objects in any sequence\n";
    }
    if (clear_defined > 0) {
      rp << "  mota     " << fmt6(rep.mota) << '\n';
      rp << "  motp     " << fmt6(rep.motp) << '\n';
      rp << "  recall   " << fmt6(rep.recall) << '\n';
    }
    rp << "  latency  " << fmt6(rep.latency) << " frames\n";
    rp << "  ids " << rep.ids << "  fp " << rep.fp << "  fn " << rep.fn
       << "  (gt " << rep.n_gt << ")\n";
    if (rep.probe.ran)
      rp << "  probe    entropy " << fmt6(rep.probe.entropy) << "  score_std "
         << fmt6(rep.probe.score_std) << "  center_spread "
         << fmt6(rep.probe.center_spread) << "  (" << rep.probe.frames
         << " frames)\n";
    for (const SeedMetrics& m : rep.per_seed) {
      rp << "\nseed " << m.seed << '\n';
      if (m.amota.defined)
        rp << "  amota " << fmt6(m.amota.amota) << "  amotp "
           << fmt6(m.amota.amotp) << "  best_recall "
           << fmt6(m.amota.best_recall) << "  gt " << m.amota.n_gt << '\n';
      else
        rp << "  amota undefined: sequence has no ground-truth objects\n";
      if (m.clear.defined)
        rp << "  mota " << fmt6(m.clear.mota) << "  motp " << fmt6(m.clear.motp)
           << "  recall " << fmt6(m.clear.recall) << "  ids " << m.clear.ids
           << "  fp " << m.clear.fp << "  fn " << m.clear.fn << '\n';
      rp << "  latency " << fmt6(m.latency) << " frames\n";
      if (cfg.eval.stratified) {
        report_strat_line(rp, "visibility", m.strat.by_visibility);
        report_strat_line(rp, "size      ", m.strat.by_size);
        report_strat_line(rp, "distance  ", m.strat.by_distance);
      }
      if (m.probe.ran)
        rp << "  probe entropy " << fmt6(m.probe.entropy) << "  score_std "
           << fmt6(m.probe.score_std) << "  center_spread "
           << fmt6(m.probe.center_spread) << "  (" << m.probe.frames
           << " frames)\n";
    }
  }
  write_file(fs::path(out_dir) / "report.txt", rp.str());

  if (cfg.eval.svg)
    for (int i = 0; i < n; ++i)
      write_file(fs::path(out_dir) /
                     ("scene_" +
                      std::to_string(seeds[static_cast<std::size_t>(i)]) +
                      ".svg"),
                 runs[static_cast<std::size_t>(i)].svg);

  return rep;
}

}  // namespace qtrack::cli
