#pragma once

// Brute-force re-implementation of the tracking metrics, written separately
// from src/metrics and kept deliberately naive: explicit frame loops, flat
// bookkeeping, no shared helpers. Tests compare the production engine
// against this on randomized inputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "qtrack/metrics/metrics.hpp"

namespace qtrack::testref {

struct RefCounts {
  int gt = 0, matches = 0, fp = 0, fn = 0, ids = 0;
  double dist_sum = 0.0;
  double mota() const {
    return 1.0 - static_cast<double>(fp + fn + ids) / gt;
  }
  double recall() const { return static_cast<double>(matches) / gt; }
  double motp() const { return matches == 0 ? 0.0 : dist_sum / matches; }
};

inline RefCounts ref_clear_mot(const std::vector<metrics::FrameData>& frames,
                               double gate, double threshold) {
  RefCounts rc;
  std::map<std::int64_t, std::int64_t> memory;  // gt id -> last matched pred id
  for (const auto& fr : frames) {
    rc.gt += static_cast<int>(fr.gts.size());

    std::vector<int> keep;
    for (std::size_t p = 0; p < fr.preds.size(); ++p)
      if (fr.preds[p].score >= threshold) keep.push_back(static_cast<int>(p));

    std::vector<int> gt_partner(fr.gts.size(), -1);
    std::vector<bool> used(fr.preds.size(), false);

    // pass 1: each gt tries to reclaim its remembered pred id
    for (std::size_t g = 0; g < fr.gts.size(); ++g) {
      const auto mem = memory.find(fr.gts[g].track_id);
      if (mem == memory.end()) continue;
      int pick = -1;
      double pick_d = std::numeric_limits<double>::infinity();
      for (int p : keep) {
        if (used[static_cast<std::size_t>(p)]) continue;
        const auto& pb = fr.preds[static_cast<std::size_t>(p)];
        if (pb.track_id != mem->second) continue;
        const double dx = pb.center.x - fr.gts[g].center.x;
        const double dy = pb.center.y - fr.gts[g].center.y;
        const double d = std::sqrt(dx * dx + dy * dy);
        if (d <= gate && d < pick_d) {
          pick = p;
          pick_d = d;
        }
      }
      if (pick >= 0) {
        gt_partner[g] = pick;
        used[static_cast<std::size_t>(pick)] = true;
        rc.dist_sum += pick_d;
      }
    }

    // pass 2: leftover preds, best score first, grab the closest free gt
    while (true) {
      int cand = -1;
      for (int p : keep) {
        if (used[static_cast<std::size_t>(p)]) continue;
        if (cand < 0) {
          cand = p;
          continue;
        }
        const auto& pa = fr.preds[static_cast<std::size_t>(p)];
        const auto& pc = fr.preds[static_cast<std::size_t>(cand)];
        if (pa.score > pc.score ||
            (pa.score == pc.score && pa.track_id < pc.track_id))
          cand = p;
      }
      if (cand < 0) break;
      used[static_cast<std::size_t>(cand)] = true;
      int pick = -1;
      double pick_d = std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < fr.gts.size(); ++g) {
        if (gt_partner[g] >= 0) continue;
        const auto& pb = fr.preds[static_cast<std::size_t>(cand)];
        const double dx = pb.center.x - fr.gts[g].center.x;
        const double dy = pb.center.y - fr.gts[g].center.y;
        const double d = std::sqrt(dx * dx + dy * dy);
        if (d <= gate && d < pick_d) {
          pick = static_cast<int>(g);
          pick_d = d;
        }
      }
      if (pick >= 0) {
        gt_partner[static_cast<std::size_t>(pick)] = cand;
        rc.dist_sum += pick_d;
      }
    }

    int frame_matches = 0;
    for (std::size_t g = 0; g < fr.gts.size(); ++g) {
      if (gt_partner[g] < 0) continue;
      ++frame_matches;
      const std::int64_t pid =
          fr.preds[static_cast<std::size_t>(gt_partner[g])].track_id;
      const auto mem = memory.find(fr.gts[g].track_id);
      if (mem != memory.end() && mem->second != pid) ++rc.ids;
      memory[fr.gts[g].track_id] = pid;
    }
    rc.matches += frame_matches;
    rc.fn += static_cast<int>(fr.gts.size()) - frame_matches;
    rc.fp += static_cast<int>(keep.size()) - frame_matches;
  }
  return rc;
}

struct RefAmota {
  double amota = 0.0, amotp = 0.0;
  std::vector<double> motar;  // 40 entries
};

inline RefAmota ref_amota(const std::vector<metrics::FrameData>& frames,
                          double gate) {
  std::vector<double> scores;
  int total_gt = 0;
  for (const auto& fr : frames) {
    total_gt += static_cast<int>(fr.gts.size());
    for (const auto& p : fr.preds) scores.push_back(p.score);
  }
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  std::reverse(scores.begin(), scores.end());  // high to low

  RefAmota out;
  out.motar.assign(40, 0.0);
  if (total_gt == 0) return out;

  double motar_sum = 0.0, motp_sum = 0.0;
  int reached = 0;
  for (int k = 0; k < 40; ++k) {
    const double r = 0.1 + 0.9 * k / 39.0;
    bool found = false;
    for (double t : scores) {
      const RefCounts rc = ref_clear_mot(frames, gate, t);
      if (rc.recall() >= r) {
        double motar = 1.0 - (rc.ids + rc.fp + rc.fn - (1.0 - r) * total_gt) /
                                 (r * total_gt);
        if (motar < 0.0) motar = 0.0;
        if (motar > 1.0) motar = 1.0;
        out.motar[static_cast<std::size_t>(k)] = motar;
        motar_sum += motar;
        motp_sum += rc.motp();
        ++reached;
        found = true;
        break;
      }
    }
    if (!found) continue;
  }
  out.amota = motar_sum / 40.0;
  out.amotp = reached == 0 ? 0.0 : motp_sum / reached;
  return out;
}

}  // namespace qtrack::testref
