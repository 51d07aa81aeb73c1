#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "qtrack/geometry/geometry.hpp"
#include "qtrack/numcore/tensor.hpp"
#include "qtrack/scenegen/scenegen.hpp"

namespace qtrack::metrics {

// One evaluation frame. Boxes live in a common (world) frame; gts and preds
// both carry track_id >= 0, preds carry a score in [0, 1].
struct FrameData {
  std::vector<geom::Box3D> gts;
  std::vector<geom::Box3D> preds;
};

// Matching semantics, shared by every metric here:
//   1. id persistence: ground truths (in index order) reclaim the prediction
//      id they were last matched to, if it is present, unclaimed and within
//      the BEV gate;
//   2. greedy: remaining predictions in (score desc, track_id asc) order each
//      take the nearest unmatched gt within the gate (lowest index on ties).
// An identity switch is counted when a gt's matched prediction id differs
// from the one at its previous matched frame; gaps do not reset identity.

struct ClearMotResult {
  bool defined = false;  // false <=> the sequence contains no gt boxes
  double mota = 0.0;
  double motp = 0.0;     // mean matched BEV distance; 0 when nothing matched
  double recall = 0.0;
  int fp = 0, fn = 0, ids = 0;
  int n_gt = 0, n_matches = 0;
};

ClearMotResult clear_mot(const std::vector<FrameData>& frames, double gate,
                         double score_threshold);

inline constexpr int kNumRecallPoints = 40;  // 0.1 .. 1.0 inclusive

struct AmotaResult {
  bool defined = false;
  double amota = 0.0;
  double amotp = 0.0;     // mean motp over achieved recall points
  double best_recall = 0.0;
  int n_gt = 0;
  std::array<double, kNumRecallPoints> recall_points{};
  std::array<double, kNumRecallPoints> motar{};      // 0 when unreachable
  std::array<double, kNumRecallPoints> motp{};       // 0 when unreachable
  std::array<std::uint8_t, kNumRecallPoints> achieved{};
};

// Sweeps the distinct prediction scores from high to low; the operating point
// for recall target r is the first (largest) threshold whose recall reaches
// r. MOTAR = clamp[0,1](1 - (IDS + FP + FN - (1-r) P) / (r P)); unreachable
// points contribute 0 to the AMOTA mean but are excluded from AMOTP.
AmotaResult amota_eval(const std::vector<FrameData>& frames, double gate);

// Per-band gt recall at a fixed operating point. strata[f][g] classifies
// frame f's gt g (see scene::strata_of).
struct BandCount {
  int n_gt = 0;
  int n_matched = 0;
  double recall() const {
    return n_gt == 0 ? 0.0 : static_cast<double>(n_matched) / n_gt;
  }
};

struct StratifiedResult {
  std::array<BandCount, 3> by_visibility, by_size, by_distance;
};

StratifiedResult stratified_eval(
    const std::vector<FrameData>& frames,
    const std::vector<std::vector<scene::Strata>>& strata, double gate,
    double score_threshold);

// Per-band AMOTA. Ground truths are partitioned by band; predictions follow
// the gt they match under a threshold-0 pass of the shared matching, and
// unmatched predictions take the band of the nearest gt in their frame.
// Predictions in frames without any gt belong to no partition. Bands with no
// gt boxes stay defined = false.
struct StratifiedAmota {
  std::array<AmotaResult, 3> by_visibility, by_size, by_distance;
};

StratifiedAmota stratified_amota(
    const std::vector<FrameData>& frames,
    const std::vector<std::vector<scene::Strata>>& strata, double gate);

// Mean frames between a gt track's first appearance and its first matched
// frame; tracks never matched cost the remaining horizon.
double detection_latency(const std::vector<FrameData>& frames, double gate,
                         double score_threshold);

// Aggregate uncertainty over repeated stochastic decodes of one query set.
// Each sample is an aligned n x (n_classes + 1) class-probability tensor.
//   entropy:   mean over queries of the entropy of the mean distribution
//   score_std: mean over queries of the std (n-1 denominator) of the
//              objectness score 1 - p(background) across samples
struct UncertaintyProbe {
  double entropy = 0.0;
  double score_std = 0.0;
  int n_samples = 0;
  int n_queries = 0;
};

UncertaintyProbe uncertainty_probe(
    const std::vector<numcore::Tensor>& cls_probs_samples, int n_classes);

// Mean per-coordinate sample std (n-1 denominator) of box centers across
// aligned stochastic decodes: samples[s][q] is query q's center in sample s.
// Identical samples give exactly 0.
double center_spread(const std::vector<std::vector<geom::Vec3>>& samples);

}  // namespace qtrack::metrics
