#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <vector>

#include "qtrack/cli/runner.hpp"
#include "qtrack/tracker/attention.hpp"

namespace qtrack::cli {
namespace {

using numcore::Rng;
using numcore::Tensor;

std::string g3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

bool grad_line(std::ostream& os, const char* name,
               const std::function<Tensor()>& f,
               const std::vector<Tensor>& leaves) {
  const double step = 1e-5, tol = 1e-4;
  const auto rep = numcore::grad_check(f, leaves, step);
  const bool ok = rep.max_rel_err < tol;
  os << "gradcheck " << name << ": max_rel_err " << g3(rep.max_rel_err)
     << " (tol " << g3(tol) << ")";
  if (ok)
    os << " PASS\n";
  else
    os << " FAIL at " << rep.worst_index << "\n";
  return ok;
}

geom::Box3D make_box(double x, double y, int id, double score) {
  geom::Box3D b;
  b.center = {x, y, 0.0};
  b.length = 4.0;
  b.width = 2.0;
  b.height = 1.5;
  b.score = score;
  b.track_id = id;
  return b;
}

bool metric_line(std::ostream& os, const char* name, double got,
                 double expect) {
  const bool ok = std::abs(got - expect) < 1e-12;
  os << "metrics-selftest " << name << ": got " << g3(got) << " expect "
     << g3(expect) << (ok ? " PASS" : " FAIL") << "\n";
  return ok;
}

}  // namespace

int run_gradcheck(std::ostream& os) {
  int failed = 0;
  Rng rng(7);

  {
    Tensor logits = Tensor::uniform(5, 4, -2.0, 2.0, rng, true);
    const std::vector<int> targets{0, 3, 1, 2, 3};
    const losses::FocalConfig fc;
    if (!grad_line(os, "focal_loss",
                   [&]() { return losses::focal_loss(logits, targets, fc); },
                   {logits}))
      ++failed;
  }
  {
    Tensor pred = Tensor::uniform(3, 10, -1.0, 1.0, rng, true);
    Tensor tgt = Tensor::uniform(3, 10, 2.0, 3.0, rng);  // kink-free gap
    if (!grad_line(os, "l1_box",
                   [&]() { return losses::l1_box(pred, tgt); }, {pred}))
      ++failed;
  }
  {
    Tensor alpha = Tensor::uniform(2, 3, -1.0, 1.0, rng, true);
    Tensor raw = Tensor::uniform(2, 3, -1.0, 1.0, rng, true);
    Tensor tgt = Tensor::uniform(2, 3, -1.0, 1.0, rng);
    auto f = [&]() {
      Tensor sigma = numcore::add_scalar(numcore::softplus(raw), 1e-3);
      return numcore::mean(losses::gaussian_nll_terms(alpha, tgt, sigma));
    };
    if (!grad_line(os, "gaussian_nll", f, {alpha, raw})) ++failed;
  }

  const int d = 4, hidden = 6;
  Tensor q = Tensor::uniform(2, d, -1.0, 1.0, rng, true);
  Tensor k = Tensor::uniform(3, d, -1.0, 1.0, rng, true);
  tracker::PairMlpParams pair;
  pair.w0 = Tensor::uniform(2 * d, hidden, -0.5, 0.5, rng, true);
  pair.b0 = Tensor::uniform(1, hidden, -0.1, 0.1, rng, true);
  pair.w1 = Tensor::uniform(hidden, 2, -0.5, 0.5, rng, true);
  pair.b1 = Tensor::uniform(1, 2, -0.1, 0.1, rng, true);
  Tensor probe = Tensor::uniform(2, 3, -1.0, 1.0, rng);

  {
    // Post-softmax weights plus a pre-softmax score probe (softmax alone is
    // shift invariant along rows, which would zero out bias gradients).
    auto f = [&]() {
      Rng draw(99);  // frozen noise: f must be deterministic
      auto attn = tracker::probabilistic_attention(
          q, k, pair, 1e-3, tracker::AttnMode::Sample, &draw);
      return numcore::add(numcore::mean(numcore::mul(attn.weights, probe)),
                          numcore::scale(numcore::mean(attn.scores), 0.1));
    };
    if (!grad_line(os, "attention_weights", f,
                   {q, k, pair.w0, pair.b0, pair.w1, pair.b1}))
      ++failed;
  }
  {
    // The NLL target is the detached dot-product score, so q and k stay out
    // of the checked leaves: finite differences would move the target.
    auto f = [&]() {
      Rng draw(99);
      auto attn = tracker::probabilistic_attention(
          q, k, pair, 1e-3, tracker::AttnMode::Sample, &draw);
      return attn.nll;
    };
    if (!grad_line(os, "attention_nll", f,
                   {pair.w0, pair.b0, pair.w1, pair.b1}))
      ++failed;
  }

  os << (failed == 0 ? "gradcheck: all checks passed\n"
                     : "gradcheck: FAILURES detected\n");
  return failed == 0 ? 0 : 1;
}

int run_metrics_selftest(std::ostream& os) {
  int failed = 0;

  {
    // Two objects tracked perfectly for three frames.
    std::vector<metrics::FrameData> fr(3);
    for (int f = 0; f < 3; ++f) {
      fr[static_cast<std::size_t>(f)].gts = {make_box(f, 0, 1, 1.0),
                                             make_box(f, 8, 2, 1.0)};
      fr[static_cast<std::size_t>(f)].preds = {make_box(f, 0, 11, 0.9),
                                               make_box(f, 8, 12, 0.9)};
    }
    const auto cm = metrics::clear_mot(fr, 2.0, 0.0);
    const auto am = metrics::amota_eval(fr, 2.0);
    if (!metric_line(os, "perfect_mota", cm.mota, 1.0)) ++failed;
    if (!metric_line(os, "perfect_ids", cm.ids, 0.0)) ++failed;
    if (!metric_line(os, "perfect_amota", am.amota, 1.0)) ++failed;
  }

  {
    // One gt over six frames; the track id flips once halfway.
    std::vector<metrics::FrameData> fr(6);
    for (int f = 0; f < 6; ++f) {
      fr[static_cast<std::size_t>(f)].gts = {make_box(f, 0, 1, 1.0)};
      fr[static_cast<std::size_t>(f)].preds = {
          make_box(f, 0.4, f < 3 ? 21 : 22, 0.9)};
    }
    const auto cm = metrics::clear_mot(fr, 2.0, 0.0);
    if (!metric_line(os, "handover_mota", cm.mota, 1.0 - 1.0 / 6.0)) ++failed;
    if (!metric_line(os, "handover_ids", cm.ids, 1.0)) ++failed;
  }

  {
    // Two gts over two frames, staggered scores, one id flip, one buried fp:
    // the recall sweep hits four distinct operating points.
    std::vector<metrics::FrameData> fr(2);
    fr[0].gts = {make_box(0, 0, 1, 1.0), make_box(10, 0, 2, 1.0)};
    fr[0].preds = {make_box(0.5, 0, 11, 0.9), make_box(10, 1, 12, 0.6),
                   make_box(30, 0, 13, 0.3)};
    fr[1].gts = {make_box(0, 0, 1, 1.0), make_box(10, 0, 2, 1.0)};
    fr[1].preds = {make_box(0, 0.5, 14, 0.8), make_box(10, 0.5, 12, 0.55)};
    const auto am = metrics::amota_eval(fr, 2.0);
    double motar_sum = 0.0, motp_sum = 0.0;
    for (int i = 0; i < metrics::kNumRecallPoints; ++i) {
      const double r = 0.1 + 0.9 * i / (metrics::kNumRecallPoints - 1);
      if (r <= 0.25) {
        motar_sum += 1.0;
        motp_sum += 0.5;
      } else if (r <= 0.5) {
        motar_sum += 1.0 / (4.0 * r);
        motp_sum += 0.5;
      } else if (r <= 0.75) {
        motar_sum += 1.0 / (2.0 * r);
        motp_sum += 2.0 / 3.0;
      } else {
        motar_sum += 3.0 / (4.0 * r);
        motp_sum += 0.625;
      }
    }
    const double exp_amota = motar_sum / metrics::kNumRecallPoints;
    const double exp_amotp = motp_sum / metrics::kNumRecallPoints;
    if (!metric_line(os, "staggered_amota", am.amota, exp_amota)) ++failed;
    if (!metric_line(os, "staggered_amotp", am.amotp, exp_amotp)) ++failed;
  }

  os << (failed == 0 ? "metrics-selftest: all fixtures passed\n"
                     : "metrics-selftest: FAILURES detected\n");
  return failed == 0 ? 0 : 1;
}

}  // namespace qtrack::cli
