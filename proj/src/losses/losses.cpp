#include "qtrack/losses/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qtrack::losses {

using numcore::add;
using numcore::add_scalar;
using numcore::div;
using numcore::gather_cols;
using numcore::log_t;
using numcore::mean;
using numcore::mul;
using numcore::neg;
using numcore::pow_scalar;
using numcore::scale;
using numcore::select_rows;
using numcore::softmax_rows;
using numcore::square;
using numcore::sub;
using numcore::sum;

Tensor focal_loss(const Tensor& logits, const std::vector<int>& targets,
                  const FocalConfig& fc) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size())
    throw std::invalid_argument("focal_loss: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(logits.rows()) +
                                " rows");
  for (int t : targets)
    if (t < 0 || t >= logits.cols())
      throw std::invalid_argument("focal_loss: target class " +
                                  std::to_string(t) + " out of range");
  const Tensor probs = softmax_rows(logits);
  const Tensor pt = gather_cols(probs, targets);
  const Tensor log_pt = log_t(add_scalar(pt, 1e-12));
  Tensor terms;
  if (fc.gamma == 0.0) {
    terms = neg(log_pt);
  } else {
    const Tensor ones = Tensor::full(pt.rows(), 1, 1.0);
    terms = neg(mul(pow_scalar(sub(ones, pt), fc.gamma), log_pt));
  }
  if (fc.alpha != 1.0) terms = scale(terms, fc.alpha);
  return mean(terms);
}

std::vector<double> box_target(const geom::Box3D& b) {
  return {b.center.x,          b.center.y,         b.center.z,
          std::log(b.length),  std::log(b.width),  std::log(b.height),
          std::sin(b.yaw),     std::cos(b.yaw),    b.vx,
          b.vy};
}

Tensor l1_box(const Tensor& pred, const Tensor& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("l1_box: shape mismatch");
  const Tensor d = sub(pred, target);
  // |x| = relu(x) + relu(-x)
  return mean(add(numcore::relu(d), numcore::relu(neg(d))));
}

Tensor gaussian_nll_terms(const Tensor& alpha, const Tensor& target,
                          const Tensor& sigma) {
  return add(log_t(sigma),
             div(square(sub(alpha, target)), scale(square(sigma), 2.0)));
}

TrackingLoss tracking_loss(const Tensor& cls_logits, const Tensor& box_pred,
                           const std::vector<int>& assigned_gt,
                           const std::vector<geom::Box3D>& gts, int n_classes,
                           const FocalConfig& fc) {
  const int n = cls_logits.rows();
  if (static_cast<std::size_t>(n) != assigned_gt.size())
    throw std::invalid_argument("tracking_loss: assignment size mismatch");
  std::vector<int> cls_targets(assigned_gt.size());
  std::vector<int> pos_rows;
  std::vector<double> box_tgt;
  for (int i = 0; i < n; ++i) {
    const int a = assigned_gt[static_cast<std::size_t>(i)];
    if (a < 0) {
      cls_targets[static_cast<std::size_t>(i)] = n_classes;  // background
      continue;
    }
    if (a >= static_cast<int>(gts.size()))
      throw std::invalid_argument("tracking_loss: gt index out of range");
    const auto& gt = gts[static_cast<std::size_t>(a)];
    cls_targets[static_cast<std::size_t>(i)] = gt.class_id;
    pos_rows.push_back(i);
    const auto t = box_target(gt);
    box_tgt.insert(box_tgt.end(), t.begin(), t.end());
  }
  TrackingLoss out;
  out.n_assigned = static_cast<int>(pos_rows.size());
  out.cls = focal_loss(cls_logits, cls_targets, fc);
  out.box = pos_rows.empty()
                ? Tensor::scalar(0.0)
                : l1_box(select_rows(box_pred, pos_rows),
                         Tensor::from(std::move(box_tgt),
                                      static_cast<int>(pos_rows.size()),
                                      box_pred.cols()));
  return out;
}

HqdLoss hqd_loss(const Tensor& cls_logits, const Tensor& box_pred,
                 const std::vector<hqd::NoisedQuery>& queries,
                 const std::vector<geom::Box3D>& gts, int n_classes,
                 const FocalConfig& fc) {
  if (static_cast<std::size_t>(cls_logits.rows()) != queries.size())
    throw std::invalid_argument("hqd_loss: row/query count mismatch");
  std::vector<int> pos_rows, neg_rows, pos_cls;
  std::vector<double> box_tgt;
  HqdLoss out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    switch (q.label) {
      case hqd::DenoiseLabel::Pos: {
        pos_rows.push_back(static_cast<int>(i));
        const auto& gt = gts.at(static_cast<std::size_t>(q.gt_index));
        pos_cls.push_back(gt.class_id);
        const auto t = box_target(gt);
        box_tgt.insert(box_tgt.end(), t.begin(), t.end());
        break;
      }
      case hqd::DenoiseLabel::Neg:
        neg_rows.push_back(static_cast<int>(i));
        break;
      case hqd::DenoiseLabel::Ign:
        ++out.n_ign;
        break;
    }
  }
  out.n_pos = static_cast<int>(pos_rows.size());
  out.n_neg = static_cast<int>(neg_rows.size());
  out.cls_pos = pos_rows.empty()
                    ? Tensor::scalar(0.0)
                    : focal_loss(select_rows(cls_logits, pos_rows), pos_cls, fc);
  out.cls_neg =
      neg_rows.empty()
          ? Tensor::scalar(0.0)
          : focal_loss(select_rows(cls_logits, neg_rows),
                       std::vector<int>(neg_rows.size(), n_classes), fc);
  out.box_pos = pos_rows.empty()
                    ? Tensor::scalar(0.0)
                    : l1_box(select_rows(box_pred, pos_rows),
                             Tensor::from(std::move(box_tgt), out.n_pos,
                                          box_pred.cols()));
  return out;
}

PqiLoss pqi_aux_loss(const Tensor& cls_logits,
                     const std::vector<int>& cls_targets,
                     const Tensor& box_pred, const Tensor& box_tgt,
                     const Tensor& depth_pred, const Tensor& depth_tgt,
                     const FocalConfig& fc) {
  PqiLoss out;
  Tensor det = focal_loss(cls_logits, cls_targets, fc);
  if (box_pred.defined() && box_pred.rows() > 0)
    det = add(det, l1_box(box_pred, box_tgt));
  out.det2d = det;
  out.depth = (depth_pred.defined() && depth_pred.rows() > 0)
                  ? l1_box(depth_pred, depth_tgt)
                  : Tensor::scalar(0.0);
  return out;
}

LossBreakdown total_loss(const TrackingLoss& tr, const PqiLoss& pqi,
                         const Tensor& upd_nll, const HqdLoss& hqd,
                         const LossWeights& w) {
  LossBreakdown b;
  b.weights = w;
  b.tracking_cls = tr.cls;
  b.tracking_box = tr.box;
  b.pqi_det2d = pqi.det2d;
  b.pqi_depth = pqi.depth;
  b.upd = upd_nll.defined() ? upd_nll : Tensor::scalar(0.0);
  b.hqd_cls_pos = hqd.cls_pos;
  b.hqd_cls_neg = hqd.cls_neg;
  b.hqd_box_pos = hqd.box_pos;
  b.total = add(
      add(scale(add(b.tracking_cls, b.tracking_box), w.tracking),
          scale(add(b.pqi_det2d, b.pqi_depth), w.pqi)),
      add(scale(b.upd, w.upd),
          scale(add(add(b.hqd_cls_pos, b.hqd_cls_neg), b.hqd_box_pos), w.hqd)));
  return b;
}

}  // namespace qtrack::losses
