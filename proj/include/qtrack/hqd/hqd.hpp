#pragma once

#include <cstdint>
#include <vector>

#include "qtrack/geometry/geometry.hpp"
#include "qtrack/numcore/rng.hpp"

namespace qtrack::hqd {

enum class DenoiseLabel { Pos, Neg, Ign };

struct NoiseConfig {
  double lambda_center = 0.4;  // uniform shift per axis, fraction of diagonal
  double lambda_size = 0.4;    // multiplicative band on each extent
  double yaw_jitter = 0.1;     // radians, gaussian
  // Scale applied to group g is 1 + g * group_scale_step; 0 keeps one level
  // of noise across groups.
  double group_scale_step = 0.0;

  void validate() const;  // throws std::invalid_argument
};

struct NoisedQuery {
  geom::Box3D box;
  int gt_index = 0;
  int group = 0;
  double iou = 0.0;  // against its own ground truth
  DenoiseLabel label = DenoiseLabel::Ign;
};

// Three-way split by IoU against the matching gt: strictly above beta_upper
// is Pos, strictly below beta_lower is Neg, anything else (equality included)
// is Ign. Throws when the thresholds are outside [0, 1] or cross.
DenoiseLabel classify(double iou, double beta_lower, double beta_upper);

// One noised copy of every gt per group, group-major order
// [g0:gt0, g0:gt1, ..., g1:gt0, ...]. Labels come from classify().
std::vector<NoisedQuery> make_noised_queries(
    const std::vector<geom::Box3D>& gts, int n_groups, const NoiseConfig& cfg,
    double beta_lower, double beta_upper, numcore::Rng& rng);

// Self-attention mask over [normal queries | group 0 | group 1 | ...].
// Row-major n x n with n = n_normal + n_groups * group_size; nonzero means
// "query i must not attend to query j". Blocks: normal <-> any denoise
// (both directions) and denoise group <-> different group. Within-group and
// normal <-> normal stay open.
std::vector<std::uint8_t> build_attention_mask(int n_normal, int n_groups,
                                               int group_size);

}  // namespace qtrack::hqd
