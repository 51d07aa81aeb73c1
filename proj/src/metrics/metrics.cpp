#include "qtrack/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

namespace qtrack::metrics {

namespace {

struct FrameMatches {
  // parallel arrays: matched gt index, pred index (into the kept subset's
  // source vector), and their BEV distance
  std::vector<int> gt, pred;
  std::vector<double> dist;
  int n_kept_preds = 0;
};

double bev_dist(const geom::Box3D& a, const geom::Box3D& b) {
  return std::hypot(a.center.x - b.center.x, a.center.y - b.center.y);
}

// One frame of the pinned two-stage matching. `corr` maps gt track_id to the
// pred track_id of its last matched frame and is updated in place.
FrameMatches match_frame(const FrameData& fr, double gate,
                         double score_threshold,
                         std::map<std::int64_t, std::int64_t>& corr) {
  FrameMatches out;
  std::vector<int> kept;
  for (std::size_t p = 0; p < fr.preds.size(); ++p)
    if (fr.preds[p].score >= score_threshold)
      kept.push_back(static_cast<int>(p));
  out.n_kept_preds = static_cast<int>(kept.size());

  std::vector<char> pred_taken(fr.preds.size(), 0);
  std::vector<char> gt_taken(fr.gts.size(), 0);

  // stage 1: persistence, gts in index order
  for (std::size_t g = 0; g < fr.gts.size(); ++g) {
    const auto it = corr.find(fr.gts[g].track_id);
    if (it == corr.end()) continue;
    int best = -1;
    double best_d = gate;
    for (int p : kept) {
      if (pred_taken[static_cast<std::size_t>(p)]) continue;
      if (fr.preds[static_cast<std::size_t>(p)].track_id != it->second)
        continue;
      const double d =
          bev_dist(fr.gts[g], fr.preds[static_cast<std::size_t>(p)]);
      if (d <= best_d && (best < 0 || d < best_d)) {
        best = p;
        best_d = d;
      }
    }
    if (best >= 0) {
      pred_taken[static_cast<std::size_t>(best)] = 1;
      gt_taken[g] = 1;
      out.gt.push_back(static_cast<int>(g));
      out.pred.push_back(best);
      out.dist.push_back(best_d);
    }
  }

  // stage 2: remaining preds by (score desc, track_id asc, index asc)
  std::vector<int> order;
  for (int p : kept)
    if (!pred_taken[static_cast<std::size_t>(p)]) order.push_back(p);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& pa = fr.preds[static_cast<std::size_t>(a)];
    const auto& pb = fr.preds[static_cast<std::size_t>(b)];
    if (pa.score != pb.score) return pa.score > pb.score;
    return pa.track_id < pb.track_id;
  });
  for (int p : order) {
    int best = -1;
    double best_d = gate + 1.0;
    for (std::size_t g = 0; g < fr.gts.size(); ++g) {
      if (gt_taken[g]) continue;
      const double d =
          bev_dist(fr.gts[g], fr.preds[static_cast<std::size_t>(p)]);
      if (d <= gate && d < best_d) {
        best = static_cast<int>(g);
        best_d = d;
      }
    }
    if (best >= 0) {
      gt_taken[static_cast<std::size_t>(best)] = 1;
      pred_taken[static_cast<std::size_t>(p)] = 1;
      out.gt.push_back(best);
      out.pred.push_back(p);
      out.dist.push_back(best_d);
    }
  }

  for (std::size_t m = 0; m < out.gt.size(); ++m)
    corr[fr.gts[static_cast<std::size_t>(out.gt[m])].track_id] =
        fr.preds[static_cast<std::size_t>(out.pred[m])].track_id;
  return out;
}

}  // namespace

ClearMotResult clear_mot(const std::vector<FrameData>& frames, double gate,
                         double score_threshold) {
  ClearMotResult r;
  std::map<std::int64_t, std::int64_t> corr;       // identity for matching
  std::map<std::int64_t, std::int64_t> last_pred;  // identity for IDS
  double dist_sum = 0.0;
  for (const auto& fr : frames) {
    r.n_gt += static_cast<int>(fr.gts.size());
    // corr is updated by match_frame; keep the pre-frame view for IDS
    const FrameMatches m = match_frame(fr, gate, score_threshold, corr);
    for (std::size_t i = 0; i < m.gt.size(); ++i) {
      const std::int64_t gt_id =
          fr.gts[static_cast<std::size_t>(m.gt[i])].track_id;
      const std::int64_t pred_id =
          fr.preds[static_cast<std::size_t>(m.pred[i])].track_id;
      const auto it = last_pred.find(gt_id);
      if (it != last_pred.end() && it->second != pred_id) ++r.ids;
      last_pred[gt_id] = pred_id;
      dist_sum += m.dist[i];
    }
    r.n_matches += static_cast<int>(m.gt.size());
    r.fp += m.n_kept_preds - static_cast<int>(m.gt.size());
    r.fn += static_cast<int>(fr.gts.size()) - static_cast<int>(m.gt.size());
  }
  if (r.n_gt == 0) return r;  // defined stays false
  r.defined = true;
  r.mota = 1.0 - static_cast<double>(r.fp + r.fn + r.ids) / r.n_gt;
  r.recall = static_cast<double>(r.n_matches) / r.n_gt;
  r.motp = r.n_matches == 0 ? 0.0 : dist_sum / r.n_matches;
  return r;
}

AmotaResult amota_eval(const std::vector<FrameData>& frames, double gate) {
  AmotaResult out;
  for (int k = 0; k < kNumRecallPoints; ++k)
    out.recall_points[static_cast<std::size_t>(k)] =
        0.1 + 0.9 * static_cast<double>(k) / (kNumRecallPoints - 1);

  std::set<double, std::greater<double>> thresholds;
  for (const auto& fr : frames) {
    out.n_gt += static_cast<int>(fr.gts.size());
    for (const auto& p : fr.preds) thresholds.insert(p.score);
  }
  if (out.n_gt == 0) return out;
  out.defined = true;
  const double P = static_cast<double>(out.n_gt);

  std::vector<ClearMotResult> sweep;
  sweep.reserve(thresholds.size());
  for (double t : thresholds) sweep.push_back(clear_mot(frames, gate, t));
  for (const auto& s : sweep) out.best_recall = std::max(out.best_recall, s.recall);

  double amota_sum = 0.0, amotp_sum = 0.0;
  int achieved = 0;
  for (int k = 0; k < kNumRecallPoints; ++k) {
    const double r = out.recall_points[static_cast<std::size_t>(k)];
    const ClearMotResult* op = nullptr;
    for (const auto& s : sweep)  // descending threshold order: first crossing
      if (s.recall >= r) {
        op = &s;
        break;
      }
    if (op == nullptr) continue;  // unreachable: motar stays 0
    const double motar = std::clamp(
        1.0 - (op->ids + op->fp + op->fn - (1.0 - r) * P) / (r * P), 0.0, 1.0);
    out.motar[static_cast<std::size_t>(k)] = motar;
    out.motp[static_cast<std::size_t>(k)] = op->motp;
    out.achieved[static_cast<std::size_t>(k)] = 1;
    amota_sum += motar;
    amotp_sum += op->motp;
    ++achieved;
  }
  out.amota = amota_sum / kNumRecallPoints;
  out.amotp = achieved == 0 ? 0.0 : amotp_sum / achieved;
  return out;
}

StratifiedResult stratified_eval(
    const std::vector<FrameData>& frames,
    const std::vector<std::vector<scene::Strata>>& strata, double gate,
    double score_threshold) {
  if (frames.size() != strata.size())
    throw std::invalid_argument("stratified_eval: frame/strata size mismatch");
  StratifiedResult out;
  std::map<std::int64_t, std::int64_t> corr;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& fr = frames[f];
    if (fr.gts.size() != strata[f].size())
      throw std::invalid_argument(
          "stratified_eval: gt/strata size mismatch in frame " +
          std::to_string(f));
    const FrameMatches m = match_frame(fr, gate, score_threshold, corr);
    std::vector<char> matched(fr.gts.size(), 0);
    for (int g : m.gt) matched[static_cast<std::size_t>(g)] = 1;
    for (std::size_t g = 0; g < fr.gts.size(); ++g) {
      const auto& st = strata[f][g];
      auto& v = out.by_visibility[static_cast<std::size_t>(st.vis_band)];
      auto& s = out.by_size[static_cast<std::size_t>(st.size_band)];
      auto& d = out.by_distance[static_cast<std::size_t>(st.dist_band)];
      ++v.n_gt;
      ++s.n_gt;
      ++d.n_gt;
      if (matched[g]) {
        ++v.n_matched;
        ++s.n_matched;
        ++d.n_matched;
      }
    }
  }
  return out;
}

StratifiedAmota stratified_amota(
    const std::vector<FrameData>& frames,
    const std::vector<std::vector<scene::Strata>>& strata, double gate) {
  if (frames.size() != strata.size())
    throw std::invalid_argument("stratified_amota: frame/strata size mismatch");

  // band of every pred, per frame and axis (-1 = no partition)
  std::vector<std::vector<std::array<int, 3>>> pred_bands(frames.size());
  std::map<std::int64_t, std::int64_t> corr;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& fr = frames[f];
    if (fr.gts.size() != strata[f].size())
      throw std::invalid_argument(
          "stratified_amota: gt/strata size mismatch in frame " +
          std::to_string(f));
    const FrameMatches m = match_frame(fr, gate, 0.0, corr);
    std::vector<int> pred_gt(fr.preds.size(), -1);
    for (std::size_t i = 0; i < m.gt.size(); ++i)
      pred_gt[static_cast<std::size_t>(m.pred[i])] = m.gt[i];
    pred_bands[f].assign(fr.preds.size(), {-1, -1, -1});
    for (std::size_t p = 0; p < fr.preds.size(); ++p) {
      int g = pred_gt[p];
      if (g < 0 && !fr.gts.empty()) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < fr.gts.size(); ++j) {
          const double d = bev_dist(fr.preds[p], fr.gts[j]);
          if (d < best) {
            best = d;
            g = static_cast<int>(j);
          }
        }
      }
      if (g < 0) continue;
      const auto& st = strata[f][static_cast<std::size_t>(g)];
      pred_bands[f][p] = {st.vis_band, st.size_band, st.dist_band};
    }
  }

  const auto band_of = [](const scene::Strata& st, int axis) {
    return axis == 0 ? st.vis_band : axis == 1 ? st.size_band : st.dist_band;
  };
  StratifiedAmota out;
  for (int axis = 0; axis < 3; ++axis) {
    for (int band = 0; band < 3; ++band) {
      std::vector<FrameData> part(frames.size());
      for (std::size_t f = 0; f < frames.size(); ++f) {
        for (std::size_t g = 0; g < frames[f].gts.size(); ++g)
          if (band_of(strata[f][g], axis) == band)
            part[f].gts.push_back(frames[f].gts[g]);
        for (std::size_t p = 0; p < frames[f].preds.size(); ++p)
          if (pred_bands[f][p][static_cast<std::size_t>(axis)] == band)
            part[f].preds.push_back(frames[f].preds[p]);
      }
      const AmotaResult r = amota_eval(part, gate);
      auto& slot = axis == 0   ? out.by_visibility
                   : axis == 1 ? out.by_size
                               : out.by_distance;
      slot[static_cast<std::size_t>(band)] = r;
    }
  }
  return out;
}

double center_spread(const std::vector<std::vector<geom::Vec3>>& samples) {
  if (samples.size() < 2)
    throw std::invalid_argument("center_spread: need at least 2 samples, got " +
                                std::to_string(samples.size()));
  const std::size_t n = samples.front().size();
  for (const auto& s : samples)
    if (s.size() != n)
      throw std::invalid_argument("center_spread: misaligned samples");
  if (n == 0) return 0.0;
  const double ns = static_cast<double>(samples.size());
  double acc = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (const auto& s : samples) {
        const auto& v = s[q];
        mean += c == 0 ? v.x : c == 1 ? v.y : v.z;
      }
      mean /= ns;
      double var = 0.0;
      for (const auto& s : samples) {
        const auto& v = s[q];
        const double x = c == 0 ? v.x : c == 1 ? v.y : v.z;
        var += (x - mean) * (x - mean);
      }
      var /= (ns - 1.0);
      acc += std::sqrt(var);
    }
  }
  return acc / (3.0 * static_cast<double>(n));
}

double detection_latency(const std::vector<FrameData>& frames, double gate,
                         double score_threshold) {
  std::map<std::int64_t, int> first_seen, first_matched;
  std::map<std::int64_t, std::int64_t> corr;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& fr = frames[f];
    for (const auto& g : fr.gts)
      first_seen.emplace(g.track_id, static_cast<int>(f));
    const FrameMatches m = match_frame(fr, gate, score_threshold, corr);
    for (int g : m.gt)
      first_matched.emplace(fr.gts[static_cast<std::size_t>(g)].track_id,
                            static_cast<int>(f));
  }
  if (first_seen.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& [id, f0] : first_seen) {
    const auto it = first_matched.find(id);
    const int fm = it == first_matched.end()
                       ? static_cast<int>(frames.size())  // never found
                       : it->second;
    acc += fm - f0;
  }
  return acc / static_cast<double>(first_seen.size());
}

UncertaintyProbe uncertainty_probe(
    const std::vector<numcore::Tensor>& cls_probs_samples, int n_classes) {
  if (cls_probs_samples.size() < 2)
    throw std::invalid_argument(
        "uncertainty_probe: need at least 2 samples, got " +
        std::to_string(cls_probs_samples.size()));
  const int n = cls_probs_samples.front().rows();
  const int cols = cls_probs_samples.front().cols();
  if (cols != n_classes + 1)
    throw std::invalid_argument("uncertainty_probe: expected " +
                                std::to_string(n_classes + 1) + " columns");
  for (const auto& t : cls_probs_samples)
    if (t.rows() != n || t.cols() != cols)
      throw std::invalid_argument("uncertainty_probe: misaligned samples");

  UncertaintyProbe out;
  out.n_samples = static_cast<int>(cls_probs_samples.size());
  out.n_queries = n;
  if (n == 0) return out;
  const double ns = static_cast<double>(out.n_samples);
  double entropy_acc = 0.0, std_acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double h = 0.0;
    for (int c = 0; c < cols; ++c) {
      double pbar = 0.0;
      for (const auto& t : cls_probs_samples) pbar += t.at(i, c);
      pbar /= ns;
      if (pbar > 0.0) h -= pbar * std::log(pbar);
    }
    entropy_acc += h;

    double mean_s = 0.0;
    for (const auto& t : cls_probs_samples) mean_s += 1.0 - t.at(i, n_classes);
    mean_s /= ns;
    double var = 0.0;
    for (const auto& t : cls_probs_samples) {
      const double s = 1.0 - t.at(i, n_classes);
      var += (s - mean_s) * (s - mean_s);
    }
    var /= (ns - 1.0);
    std_acc += std::sqrt(var);
  }
  out.entropy = entropy_acc / n;
  out.score_std = std_acc / n;
  return out;
}

}  // namespace qtrack::metrics
