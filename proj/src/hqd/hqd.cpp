#include "qtrack/hqd/hqd.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qtrack::hqd {

void NoiseConfig::validate() const {
  if (lambda_center < 0.0 || lambda_size < 0.0 || yaw_jitter < 0.0 ||
      group_scale_step < 0.0)
    throw std::invalid_argument("NoiseConfig: noise magnitudes must be >= 0");
  if (lambda_size >= 1.0)
    throw std::invalid_argument(
        "NoiseConfig: lambda_size must stay below 1 to keep extents positive");
}

DenoiseLabel classify(double iou, double beta_lower, double beta_upper) {
  if (beta_lower < 0.0 || beta_upper > 1.0 || beta_lower > beta_upper)
    throw std::invalid_argument(
        "classify: need 0 <= beta_lower <= beta_upper <= 1, got " +
        std::to_string(beta_lower) + " / " + std::to_string(beta_upper));
  if (iou > beta_upper) return DenoiseLabel::Pos;
  if (iou < beta_lower) return DenoiseLabel::Neg;
  return DenoiseLabel::Ign;
}

std::vector<NoisedQuery> make_noised_queries(
    const std::vector<geom::Box3D>& gts, int n_groups, const NoiseConfig& cfg,
    double beta_lower, double beta_upper, numcore::Rng& rng) {
  cfg.validate();
  if (n_groups < 0) throw std::invalid_argument("make_noised_queries: n_groups < 0");
  std::vector<NoisedQuery> out;
  out.reserve(static_cast<std::size_t>(n_groups) * gts.size());
  for (int g = 0; g < n_groups; ++g) {
    const double scale = 1.0 + g * cfg.group_scale_step;
    for (std::size_t i = 0; i < gts.size(); ++i) {
      const geom::Box3D& gt = gts[i];
      NoisedQuery q;
      q.gt_index = static_cast<int>(i);
      q.group = g;
      q.box = gt;
      const double diag =
          std::sqrt(gt.length * gt.length + gt.width * gt.width +
                    gt.height * gt.height);
      const double lc = cfg.lambda_center * scale * diag;
      q.box.center.x += rng.uniform(-lc, lc);
      q.box.center.y += rng.uniform(-lc, lc);
      q.box.center.z += rng.uniform(-lc, lc);
      const double ls = std::min(cfg.lambda_size * scale, 0.95);
      q.box.length *= rng.uniform(1.0 - ls, 1.0 + ls);
      q.box.width *= rng.uniform(1.0 - ls, 1.0 + ls);
      q.box.height *= rng.uniform(1.0 - ls, 1.0 + ls);
      q.box.yaw =
          geom::wrap_angle(q.box.yaw + rng.normal(0.0, cfg.yaw_jitter * scale));
      q.iou = geom::iou3d(q.box, gt);
      q.label = classify(q.iou, beta_lower, beta_upper);
      out.push_back(q);
    }
  }
  return out;
}

std::vector<std::uint8_t> build_attention_mask(int n_normal, int n_groups,
                                               int group_size) {
  if (n_normal < 0 || n_groups < 0 || group_size < 0)
    throw std::invalid_argument("build_attention_mask: negative sizes");
  const int n = n_normal + n_groups * group_size;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) *
                                     static_cast<std::size_t>(n),
                                 0);
  auto group_of = [&](int idx) -> int {
    // -1 for normal queries, otherwise the denoise group index
    if (idx < n_normal) return -1;
    return (idx - n_normal) / group_size;
  };
  for (int i = 0; i < n; ++i) {
    const int gi = group_of(i);
    for (int j = 0; j < n; ++j) {
      const int gj = group_of(j);
      if (gi != gj)
        mask[static_cast<std::size_t>(i) * n + j] = 1;
    }
  }
  return mask;
}

}  // namespace qtrack::hqd
