#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "qtrack/geometry/geometry.hpp"
#include "qtrack/hqd/hqd.hpp"
#include "qtrack/numcore/rng.hpp"

using namespace qtrack;
using hqd::DenoiseLabel;

namespace {

std::vector<geom::Box3D> sample_gts(int n, numcore::Rng& rng) {
  std::vector<geom::Box3D> gts;
  for (int i = 0; i < n; ++i) {
    geom::Box3D b;
    b.center = {rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0),
                rng.uniform(0.5, 2.0)};
    b.length = rng.uniform(1.0, 8.0);
    b.width = rng.uniform(0.5, 3.0);
    b.height = rng.uniform(1.0, 3.5);
    b.yaw = rng.uniform(-M_PI, M_PI);
    b.class_id = rng.uniform_int(7);
    b.track_id = i;
    gts.push_back(b);
  }
  return gts;
}

double mean_iou(const std::vector<hqd::NoisedQuery>& qs) {
  double m = 0.0;
  for (const auto& q : qs) m += q.iou;
  return m / static_cast<double>(qs.size());
}

}  // namespace

TEST_CASE("classify splits exactly at the thresholds") {
  // strictly above beta_upper -> Pos, strictly below beta_lower -> Neg,
  // equality on either side -> Ign
  CHECK(hqd::classify(0.70000001, 0.3, 0.7) == DenoiseLabel::Pos);
  CHECK(hqd::classify(1.0, 0.3, 0.7) == DenoiseLabel::Pos);
  CHECK(hqd::classify(0.7, 0.3, 0.7) == DenoiseLabel::Ign);
  CHECK(hqd::classify(0.5, 0.3, 0.7) == DenoiseLabel::Ign);
  CHECK(hqd::classify(0.3, 0.3, 0.7) == DenoiseLabel::Ign);
  CHECK(hqd::classify(0.29999999, 0.3, 0.7) == DenoiseLabel::Neg);
  CHECK(hqd::classify(0.0, 0.3, 0.7) == DenoiseLabel::Neg);

  // degenerate but legal: lower == upper leaves only the equality case Ign
  CHECK(hqd::classify(0.5, 0.5, 0.5) == DenoiseLabel::Ign);
  CHECK(hqd::classify(0.51, 0.5, 0.5) == DenoiseLabel::Pos);

  CHECK_THROWS_AS(hqd::classify(0.5, -0.1, 0.7), std::invalid_argument);
  CHECK_THROWS_AS(hqd::classify(0.5, 0.3, 1.1), std::invalid_argument);
  CHECK_THROWS_AS(hqd::classify(0.5, 0.8, 0.7), std::invalid_argument);
}

TEST_CASE("noise config validation") {
  hqd::NoiseConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.lambda_size = 1.0;  // would allow zero-sized boxes
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lambda_center = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.yaw_jitter = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("zero noise keeps every query positive and bit-equal to its gt") {
  numcore::Rng rng(3);
  const auto gts = sample_gts(8, rng);
  hqd::NoiseConfig cfg;
  cfg.lambda_center = 0.0;
  cfg.lambda_size = 0.0;
  cfg.yaw_jitter = 0.0;
  const auto qs = hqd::make_noised_queries(gts, 3, cfg, 0.3, 0.7, rng);
  REQUIRE(qs.size() == 24);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const auto& q = qs[i];
    CHECK(q.group == static_cast<int>(i) / 8);
    CHECK(q.gt_index == static_cast<int>(i) % 8);
    CHECK(q.label == DenoiseLabel::Pos);
    CHECK(q.iou == doctest::Approx(1.0).epsilon(1e-9));
    const auto& gt = gts[static_cast<std::size_t>(q.gt_index)];
    CHECK(q.box.center.x == gt.center.x);
    CHECK(q.box.length == gt.length);
    CHECK(q.box.yaw == gt.yaw);
  }
}

TEST_CASE("every emitted label is consistent with an independent iou") {
  numcore::Rng rng(11);
  const auto gts = sample_gts(12, rng);
  hqd::NoiseConfig cfg;  // defaults: center 0.4, size 0.4, yaw 0.1
  const double bl = 0.3, bu = 0.7;
  for (int rep = 0; rep < 20; ++rep) {
    const auto qs = hqd::make_noised_queries(gts, 2, cfg, bl, bu, rng);
    for (const auto& q : qs) {
      const double iou =
          geom::iou3d(q.box, gts[static_cast<std::size_t>(q.gt_index)]);
      CHECK(std::abs(iou - q.iou) < 1e-12);
      CHECK(hqd::classify(q.iou, bl, bu) == q.label);
      CHECK(q.box.length > 0.0);
      CHECK(q.box.width > 0.0);
      CHECK(q.box.height > 0.0);
      CHECK(q.box.class_id == gts[static_cast<std::size_t>(q.gt_index)].class_id);
    }
  }
}

TEST_CASE("heavier noise lowers iou monotonically in the mean") {
  numcore::Rng spawn(21);
  const auto gts = sample_gts(50, spawn);
  auto mean_at = [&](double lam) {
    numcore::Rng rng(77);  // same stream for a paired comparison
    hqd::NoiseConfig cfg;
    cfg.lambda_center = lam;
    cfg.lambda_size = std::min(lam, 0.9);
    cfg.yaw_jitter = 0.2 * lam;
    double acc = 0.0;
    const int reps = 40;
    for (int rep = 0; rep < reps; ++rep)
      acc += mean_iou(hqd::make_noised_queries(gts, 2, cfg, 0.3, 0.7, rng));
    return acc / reps;
  };
  const double m_small = mean_at(0.05);
  const double m_mid = mean_at(0.4);
  const double m_big = mean_at(0.9);
  CHECK(m_small > m_mid);
  CHECK(m_mid > m_big);
  CHECK(m_small > 0.6);   // tiny jitter keeps boxes near their gts
  CHECK(m_big < 0.45);    // heavy jitter mostly destroys overlap
}

TEST_CASE("group scale step makes later groups noisier") {
  numcore::Rng spawn(5);
  const auto gts = sample_gts(40, spawn);
  hqd::NoiseConfig cfg;
  cfg.group_scale_step = 1.0;  // group g noise scale = 1 + g
  numcore::Rng rng(6);
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  const int reps = 40;
  for (int rep = 0; rep < reps; ++rep) {
    const auto qs = hqd::make_noised_queries(gts, 3, cfg, 0.3, 0.7, rng);
    for (const auto& q : qs) {
      if (q.group == 0) m0 += q.iou;
      if (q.group == 1) m1 += q.iou;
      if (q.group == 2) m2 += q.iou;
    }
  }
  CHECK(m0 > m1);
  CHECK(m1 > m2);
}

TEST_CASE("pure yaw jitter leaves centers and sizes untouched") {
  numcore::Rng rng(9);
  const auto gts = sample_gts(10, rng);
  hqd::NoiseConfig cfg;
  cfg.lambda_center = 0.0;
  cfg.lambda_size = 0.0;
  cfg.yaw_jitter = 0.3;
  const auto qs = hqd::make_noised_queries(gts, 1, cfg, 0.3, 0.7, rng);
  bool yaw_moved = false;
  for (const auto& q : qs) {
    const auto& gt = gts[static_cast<std::size_t>(q.gt_index)];
    CHECK(q.box.center.x == gt.center.x);
    CHECK(q.box.center.y == gt.center.y);
    CHECK(q.box.center.z == gt.center.z);
    CHECK(q.box.length == gt.length);
    CHECK(q.box.width == gt.width);
    CHECK(q.box.height == gt.height);
    if (q.box.yaw != gt.yaw) yaw_moved = true;
  }
  CHECK(yaw_moved);
}

TEST_CASE("attention mask isolates normal queries and denoise groups") {
  const int n_normal = 3, n_groups = 2, group_size = 2;
  const auto mask = hqd::build_attention_mask(n_normal, n_groups, group_size);
  const int n = n_normal + n_groups * group_size;  // 7
  REQUIRE(mask.size() == static_cast<std::size_t>(n) * n);

  // expected blocked-pair matrix, written out explicitly: queries 0-2 normal,
  // 3-4 group 0, 5-6 group 1
  const std::uint8_t expected[7][7] = {
      {0, 0, 0, 1, 1, 1, 1},
      {0, 0, 0, 1, 1, 1, 1},
      {0, 0, 0, 1, 1, 1, 1},
      {1, 1, 1, 0, 0, 1, 1},
      {1, 1, 1, 0, 0, 1, 1},
      {1, 1, 1, 1, 1, 0, 0},
      {1, 1, 1, 1, 1, 0, 0},
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      INFO("i=", i, " j=", j);
      CHECK((mask[static_cast<std::size_t>(i) * n + j] != 0) ==
            (expected[i][j] != 0));
    }

  // no denoise queries -> nothing blocked
  const auto open = hqd::build_attention_mask(4, 0, 0);
  for (std::uint8_t v : open) CHECK(v == 0);
}
