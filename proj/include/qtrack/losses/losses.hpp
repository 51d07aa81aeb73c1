#pragma once

#include <vector>

#include "qtrack/geometry/geometry.hpp"
#include "qtrack/hqd/hqd.hpp"
#include "qtrack/numcore/tensor.hpp"

namespace qtrack::losses {

using numcore::Tensor;

struct FocalConfig {
  double alpha = 0.25;  // uniform multiplier
  double gamma = 2.0;   // (1 - p_t)^gamma down-weighting
};

// Softmax focal loss, mean over rows. targets[i] indexes the logit columns.
// alpha = 1, gamma = 0 reduces to plain cross entropy.
Tensor focal_loss(const Tensor& logits, const std::vector<int>& targets,
                  const FocalConfig& fc = {});

// Regression encoding of a box: [cx, cy, cz, log l, log w, log h, sin yaw,
// cos yaw, vx, vy]. The sin/cos pair makes yaw = pi and yaw = -pi coincide.
std::vector<double> box_target(const geom::Box3D& b);

// Mean absolute error over every entry of pred vs target (same shape).
Tensor l1_box(const Tensor& pred, const Tensor& target);

// Per-entry Gaussian negative log likelihood without reduction:
// log(sigma) + (alpha - target)^2 / (2 sigma^2).
Tensor gaussian_nll_terms(const Tensor& alpha, const Tensor& target,
                          const Tensor& sigma);

// --- assembled task losses ----------------------------------------------------

// Normal-query supervision. assigned_gt[i] is a gt index or -1 for
// background. Classification covers every row (unassigned rows target the
// background class = n_classes); box regression covers assigned rows only.
struct TrackingLoss {
  Tensor cls, box;
  int n_assigned = 0;
};
TrackingLoss tracking_loss(const Tensor& cls_logits, const Tensor& box_pred,
                           const std::vector<int>& assigned_gt,
                           const std::vector<geom::Box3D>& gts, int n_classes,
                           const FocalConfig& fc = {});

// Denoise-query supervision: positives regress their gt box and classify as
// its class, negatives classify as background, ignored rows contribute
// nothing. cls_logits/box_pred hold exactly the denoise rows, aligned with
// `queries`. Empty partitions yield zero scalars.
struct HqdLoss {
  Tensor cls_pos, cls_neg, box_pos;
  int n_pos = 0, n_neg = 0, n_ign = 0;
};
HqdLoss hqd_loss(const Tensor& cls_logits, const Tensor& box_pred,
                 const std::vector<hqd::NoisedQuery>& queries,
                 const std::vector<geom::Box3D>& gts, int n_classes,
                 const FocalConfig& fc = {});

// 2D-prompt auxiliary probes on token features. det2d = focal classification
// over the sampled cells plus box regression on the positive cells; depth =
// L1 on the positive cells. box/depth predictions may have zero rows.
struct PqiLoss {
  Tensor det2d, depth;
};
PqiLoss pqi_aux_loss(const Tensor& cls_logits,
                     const std::vector<int>& cls_targets,
                     const Tensor& box_pred, const Tensor& box_tgt,
                     const Tensor& depth_pred, const Tensor& depth_tgt,
                     const FocalConfig& fc = {});

// --- total -------------------------------------------------------------------

struct LossWeights {
  double tracking = 1.0;
  double pqi = 1.0;
  double upd = 1.0;
  double hqd = 1.0;
};

struct LossBreakdown {
  Tensor total;
  Tensor tracking_cls, tracking_box;
  Tensor pqi_det2d, pqi_depth;
  Tensor upd;
  Tensor hqd_cls_pos, hqd_cls_neg, hqd_box_pos;
  LossWeights weights;
};

// total = w_tr * (cls + box) + w_pqi * (det2d + depth) + w_upd * nll
//       + w_hqd * (cls_pos + cls_neg + box_pos)
LossBreakdown total_loss(const TrackingLoss& tr, const PqiLoss& pqi,
                         const Tensor& upd_nll, const HqdLoss& hqd,
                         const LossWeights& w = {});

}  // namespace qtrack::losses
