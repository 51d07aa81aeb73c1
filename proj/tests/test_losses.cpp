#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "qtrack/losses/losses.hpp"
#include "qtrack/numcore/rng.hpp"

using namespace qtrack;
using losses::FocalConfig;
using numcore::Rng;
using numcore::Tensor;

namespace {

double softmax_p(const std::vector<double>& logits, std::size_t t) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return std::exp(logits[t] - mx) / z;
}

geom::Box3D sample_box(Rng& rng) {
  geom::Box3D b;
  b.center = {rng.uniform(-20.0, 20.0), rng.uniform(-20.0, 20.0),
              rng.uniform(0.5, 2.0)};
  b.length = rng.uniform(0.8, 8.0);
  b.width = rng.uniform(0.5, 3.0);
  b.height = rng.uniform(1.0, 3.0);
  b.yaw = rng.uniform(-M_PI, M_PI);
  b.vx = rng.uniform(-5.0, 5.0);
  b.vy = rng.uniform(-5.0, 5.0);
  b.class_id = static_cast<int>(rng.uniform_int(7));
  return b;
}

}  // namespace

TEST_CASE("focal loss reduces to cross entropy at alpha 1, gamma 0") {
  const std::vector<double> row0 = {2.0, -1.0, 0.5};
  const std::vector<double> row1 = {0.0, 1.0, -2.0};
  std::vector<double> flat = row0;
  flat.insert(flat.end(), row1.begin(), row1.end());
  const Tensor logits = Tensor::from(std::move(flat), 2, 3);
  const std::vector<int> targets = {0, 2};
  FocalConfig ce;
  ce.alpha = 1.0;
  ce.gamma = 0.0;
  const double expect =
      0.5 * (-std::log(softmax_p(row0, 0) + 1e-12) -
             std::log(softmax_p(row1, 2) + 1e-12));
  CHECK(losses::focal_loss(logits, targets, ce).item() ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("focal loss matches the closed form on a hand case") {
  const std::vector<double> row = {2.0, 0.0, 1.0};
  const Tensor logits = Tensor::from(std::vector<double>(row), 1, 3);
  const double p0 = softmax_p(row, 0);
  const double expect = 0.25 * (1.0 - p0) * (1.0 - p0) * -std::log(p0 + 1e-12);
  CHECK(losses::focal_loss(logits, {0}).item() ==
        doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(static_cast<void>(losses::focal_loss(logits, {3})),
                  std::invalid_argument);
  CHECK_THROWS_AS(static_cast<void>(losses::focal_loss(logits, {0, 1})),
                  std::invalid_argument);
}

TEST_CASE("box regression treats yaw pi and -pi as the same angle") {
  geom::Box3D a;
  a.center = {1.0, 2.0, 0.5};
  a.yaw = M_PI;
  geom::Box3D b = a;
  b.yaw = -M_PI;
  const Tensor pred = Tensor::from(losses::box_target(a), 1, 10);
  const Tensor tgt = Tensor::from(losses::box_target(b), 1, 10);
  CHECK(losses::l1_box(pred, tgt).item() < 1e-15);

  // and a plain value check: mean |diff| over all 10 dims
  std::vector<double> shifted = losses::box_target(a);
  shifted[0] += 1.0;
  shifted[4] -= 0.5;
  CHECK(losses::l1_box(Tensor::from(std::move(shifted), 1, 10), tgt).item() ==
        doctest::Approx(1.5 / 10.0).epsilon(1e-12));
}

TEST_CASE("gaussian nll terms match hand values") {
  const Tensor alpha = Tensor::from({2.0, 1.0}, 2, 1);
  const Tensor target = Tensor::from({1.0, 1.0}, 2, 1);
  const Tensor sigma = Tensor::from({1.0, 2.0}, 2, 1);
  const Tensor terms = losses::gaussian_nll_terms(alpha, target, sigma);
  REQUIRE(terms.rows() == 2);
  CHECK(terms.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(terms.at(1, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("tracking loss routes queries to their assignments") {
  Rng rng(5);
  const std::vector<geom::Box3D> gts = {sample_box(rng), sample_box(rng)};
  const int n = 3, K = 8;
  const Tensor logits = Tensor::uniform(n, K, -1.0, 1.0, rng);
  const Tensor box_pred = Tensor::uniform(n, 10, -1.0, 1.0, rng);
  const std::vector<int> assigned = {0, -1, 1};

  const auto tl = losses::tracking_loss(logits, box_pred, assigned, gts, 7);
  CHECK(tl.n_assigned == 2);

  const std::vector<int> expect_cls = {gts[0].class_id, 7, gts[1].class_id};
  CHECK(tl.cls.item() ==
        doctest::Approx(losses::focal_loss(logits, expect_cls).item())
            .epsilon(1e-12));

  // box term: mean abs error over rows 0 and 2 against their gt encodings
  double acc = 0.0;
  for (int r : {0, 2}) {
    const auto tgt =
        losses::box_target(gts[static_cast<std::size_t>(assigned[r] < 0 ? 0 : assigned[r])]);
    for (int c = 0; c < 10; ++c) acc += std::abs(box_pred.at(r, c) - tgt[c]);
  }
  CHECK(tl.box.item() == doctest::Approx(acc / 20.0).epsilon(1e-12));

  // all background: no box gradient source at all
  const auto none =
      losses::tracking_loss(logits, box_pred, {-1, -1, -1}, gts, 7);
  CHECK(none.n_assigned == 0);
  CHECK(none.box.item() == 0.0);
}

TEST_CASE("hqd loss splits by label and ignores the ignore band") {
  Rng rng(7);
  const std::vector<geom::Box3D> gts = {sample_box(rng), sample_box(rng)};
  const int n = 3, K = 8;
  const Tensor logits = Tensor::uniform(n, K, -1.0, 1.0, rng);
  const Tensor box_pred = Tensor::uniform(n, 10, -1.0, 1.0, rng);

  std::vector<hqd::NoisedQuery> qs(3);
  qs[0].gt_index = 0;
  qs[0].label = hqd::DenoiseLabel::Pos;
  qs[1].gt_index = 1;
  qs[1].label = hqd::DenoiseLabel::Neg;
  qs[2].gt_index = 1;
  qs[2].label = hqd::DenoiseLabel::Ign;

  const auto hl = losses::hqd_loss(logits, box_pred, qs, gts, 7);
  CHECK(hl.n_pos == 1);
  CHECK(hl.n_neg == 1);
  CHECK(hl.n_ign == 1);

  const Tensor row0 = numcore::slice_rows(logits, 0, 1);
  const Tensor row1 = numcore::slice_rows(logits, 1, 2);
  CHECK(hl.cls_pos.item() ==
        doctest::Approx(losses::focal_loss(row0, {gts[0].class_id}).item())
            .epsilon(1e-12));
  CHECK(hl.cls_neg.item() ==
        doctest::Approx(losses::focal_loss(row1, {7}).item()).epsilon(1e-12));

  double acc = 0.0;
  const auto tgt = losses::box_target(gts[0]);
  for (int c = 0; c < 10; ++c) acc += std::abs(box_pred.at(0, c) - tgt[c]);
  CHECK(hl.box_pos.item() == doctest::Approx(acc / 10.0).epsilon(1e-12));

  // ignore-only input produces all-zero scalars
  std::vector<hqd::NoisedQuery> ign(3);
  for (auto& q : ign) q.label = hqd::DenoiseLabel::Ign;
  const auto zero = losses::hqd_loss(logits, box_pred, ign, gts, 7);
  CHECK(zero.cls_pos.item() == 0.0);
  CHECK(zero.cls_neg.item() == 0.0);
  CHECK(zero.box_pos.item() == 0.0);
  CHECK(zero.n_ign == 3);
}

TEST_CASE("pqi aux loss tolerates cell sets without positives") {
  Rng rng(9);
  const Tensor logits = Tensor::uniform(4, 8, -1.0, 1.0, rng);
  const std::vector<int> targets = {7, 7, 7, 7};
  const auto pl = losses::pqi_aux_loss(logits, targets, Tensor(), Tensor(),
                                       Tensor(), Tensor());
  CHECK(pl.det2d.item() ==
        doctest::Approx(losses::focal_loss(logits, targets).item())
            .epsilon(1e-12));
  CHECK(pl.depth.item() == 0.0);

  // with positives both heads contribute
  const Tensor bp = Tensor::uniform(2, 4, -1.0, 1.0, rng);
  const Tensor bt = Tensor::uniform(2, 4, -1.0, 1.0, rng);
  const Tensor dp = Tensor::uniform(2, 1, 0.0, 1.0, rng);
  const Tensor dt = Tensor::uniform(2, 1, 0.0, 1.0, rng);
  const auto full = losses::pqi_aux_loss(logits, targets, bp, bt, dp, dt);
  CHECK(full.det2d.item() ==
        doctest::Approx(losses::focal_loss(logits, targets).item() +
                        losses::l1_box(bp, bt).item())
            .epsilon(1e-12));
  CHECK(full.depth.item() ==
        doctest::Approx(losses::l1_box(dp, dt).item()).epsilon(1e-12));
}

TEST_CASE("total loss decomposes exactly into its components") {
  Rng rng(11);
  const std::vector<geom::Box3D> gts = {sample_box(rng), sample_box(rng)};
  const Tensor logits = Tensor::uniform(4, 8, -1.0, 1.0, rng);
  const Tensor box_pred = Tensor::uniform(4, 10, -1.0, 1.0, rng);
  const auto tl =
      losses::tracking_loss(logits, box_pred, {0, 1, -1, -1}, gts, 7);

  std::vector<hqd::NoisedQuery> qs(4);
  qs[0].label = hqd::DenoiseLabel::Pos;
  qs[1].label = hqd::DenoiseLabel::Pos;
  qs[1].gt_index = 1;
  qs[2].label = hqd::DenoiseLabel::Neg;
  qs[3].label = hqd::DenoiseLabel::Ign;
  const auto hl = losses::hqd_loss(logits, box_pred, qs, gts, 7);

  const auto pl = losses::pqi_aux_loss(logits, {7, 7, 0, 3}, Tensor(),
                                       Tensor(), Tensor(), Tensor());
  const Tensor upd = Tensor::scalar(0.37);

  losses::LossWeights w;
  w.tracking = 1.0;
  w.pqi = 0.5;
  w.upd = 2.0;
  w.hqd = 1.5;
  const auto b = losses::total_loss(tl, pl, upd, hl, w);

  const double manual =
      w.tracking * (b.tracking_cls.item() + b.tracking_box.item()) +
      w.pqi * (b.pqi_det2d.item() + b.pqi_depth.item()) +
      w.upd * b.upd.item() +
      w.hqd *
          (b.hqd_cls_pos.item() + b.hqd_cls_neg.item() + b.hqd_box_pos.item());
  CHECK(std::abs(b.total.item() - manual) < 1e-12);

  // linearity: doubling one weight moves the total by exactly that block
  losses::LossWeights w2 = w;
  w2.hqd = 3.0;
  const auto b2 = losses::total_loss(tl, pl, upd, hl, w2);
  const double hqd_block =
      b.hqd_cls_pos.item() + b.hqd_cls_neg.item() + b.hqd_box_pos.item();
  CHECK(std::abs((b2.total.item() - b.total.item()) - 1.5 * hqd_block) < 1e-12);
}

TEST_CASE("loss gradients agree with finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(numcore::derive_seed(seed, 600));
    std::vector<geom::Box3D> gts = {sample_box(rng), sample_box(rng),
                                    sample_box(rng)};

    SUBCASE("focal") {
      Tensor logits = Tensor::uniform(5, 8, -1.5, 1.5, rng, true);
      std::vector<int> targets;
      for (int i = 0; i < 5; ++i)
        targets.push_back(static_cast<int>(rng.uniform_int(8)));
      const auto rep = numcore::grad_check(
          [&]() { return losses::focal_loss(logits, targets); }, {logits},
          1e-5);
      INFO("seed=", seed, " worst=", rep.worst_index);
      CHECK(rep.max_rel_err < 1e-4);
    }

    SUBCASE("l1 away from its kink") {
      Tensor pred = Tensor::uniform(3, 10, -1.0, 1.0, rng, true);
      std::vector<double> tv(30);
      for (auto& v : tv) {
        const double mag = rng.uniform(0.5, 1.5);
        v = rng.uniform() < 0.5 ? -mag : mag;  // offset keeps |diff| > 1e-2
      }
      std::vector<double> shifted(30);
      for (int i = 0; i < 30; ++i)
        shifted[static_cast<std::size_t>(i)] =
            pred.values()[static_cast<std::size_t>(i)] +
            tv[static_cast<std::size_t>(i)];
      const Tensor tgt = Tensor::from(std::move(shifted), 3, 10);
      const auto rep = numcore::grad_check(
          [&]() { return losses::l1_box(pred, tgt); }, {pred}, 1e-5);
      CHECK(rep.max_rel_err < 1e-4);
    }

    SUBCASE("gaussian nll") {
      Tensor alpha = Tensor::uniform(2, 3, -1.0, 1.0, rng, true);
      Tensor sigma = Tensor::uniform(2, 3, 0.5, 2.0, rng, true);
      const Tensor target = Tensor::uniform(2, 3, -1.0, 1.0, rng);
      const auto rep = numcore::grad_check(
          [&]() {
            return numcore::mean(
                losses::gaussian_nll_terms(alpha, target, sigma));
          },
          {alpha, sigma}, 1e-5);
      CHECK(rep.max_rel_err < 1e-4);
    }

    SUBCASE("tracking and hqd end to end") {
      Tensor logits = Tensor::uniform(5, 8, -1.0, 1.0, rng, true);
      Tensor box_pred = Tensor::uniform(5, 10, -8.0, 8.0, rng, true);
      const std::vector<int> assigned = {0, -1, 2, 1, -1};
      std::vector<hqd::NoisedQuery> qs(5);
      qs[0].label = hqd::DenoiseLabel::Pos;
      qs[1].label = hqd::DenoiseLabel::Pos;
      qs[1].gt_index = 2;
      qs[2].label = hqd::DenoiseLabel::Neg;
      qs[3].label = hqd::DenoiseLabel::Ign;
      qs[4].label = hqd::DenoiseLabel::Neg;
      const auto rep = numcore::grad_check(
          [&]() {
            const auto tl =
                losses::tracking_loss(logits, box_pred, assigned, gts, 7);
            const auto hl = losses::hqd_loss(logits, box_pred, qs, gts, 7);
            return losses::total_loss(tl, {Tensor::scalar(0.0),
                                           Tensor::scalar(0.0)},
                                      Tensor::scalar(0.0), hl)
                .total;
          },
          {logits, box_pred}, 1e-5);
      INFO("seed=", seed, " worst=", rep.worst_index);
      CHECK(rep.max_rel_err < 1e-4);
    }
  }
}
