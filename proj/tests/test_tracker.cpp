#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "qtrack/hqd/hqd.hpp"
#include "qtrack/scenegen/scenegen.hpp"
#include "qtrack/tracker/attention.hpp"
#include "qtrack/tracker/decoder.hpp"
#include "qtrack/tracker/lifecycle.hpp"
#include "qtrack/tracker/model.hpp"

using namespace qtrack;
using numcore::Rng;
using numcore::Tensor;
using tracker::AttnMode;

namespace {

tracker::DecoderConfig toy_config() {
  tracker::DecoderConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.pair_hidden = 8;
  cfg.ffn_hidden = 32;
  cfg.n_init_queries = 8;
  cfg.n_bands = 4;
  return cfg;
}

Tensor tokens_of(const scene::Scenario& s, int f) {
  Rng rng(0);
  const auto grids = scene::render_frame_features(s, f, 0.0, rng);
  std::vector<double> flat;
  int cells = 0;
  for (const auto& g : grids) {
    flat.insert(flat.end(), g.feats.begin(), g.feats.end());
    cells += g.grid_w * g.grid_h;
  }
  return Tensor::from(std::move(flat), cells, scene::token_feat_dim());
}

// Pair MLP with zero weights: outputs (mu0, s0) for every (q, k) pair.
tracker::PairMlpParams constant_pair(int d, int hidden, double mu0, double s0) {
  tracker::PairMlpParams p;
  p.w0 = Tensor::zeros(2 * d, hidden);
  p.b0 = Tensor::full(1, hidden, 1.0);
  p.w1 = Tensor::zeros(hidden, 2);
  std::vector<double> b1 = {mu0, s0};
  p.b1 = Tensor::from(std::move(b1), 1, 2);
  return p;
}

tracker::PairMlpParams random_pair(int d, int hidden, Rng& rng,
                                   bool requires_grad) {
  tracker::PairMlpParams p;
  p.w0 = Tensor::uniform(2 * d, hidden, -0.5, 0.5, rng, requires_grad);
  p.b0 = Tensor::uniform(1, hidden, 0.1, 0.4, rng, requires_grad);
  p.w1 = Tensor::uniform(hidden, 2, -0.5, 0.5, rng, requires_grad);
  p.b1 = Tensor::uniform(1, 2, -0.2, 0.2, rng, requires_grad);
  return p;
}

}  // namespace

TEST_CASE("decoder config validation") {
  tracker::DecoderConfig cfg = toy_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.d_model = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = toy_config();
  cfg.sigma_min = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = toy_config();
  cfg.n_layers = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("model construction is seed-deterministic") {
  const auto cfg = toy_config();
  tracker::TrackModel a(cfg, 42), b(cfg, 42), c(cfg, 43);
  CHECK(a.init_embeddings().values() == b.init_embeddings().values());
  CHECK(a.init_locations().values() == b.init_locations().values());
  CHECK(a.store().get("l0.cross.pair.l0.w").values() ==
        b.store().get("l0.cross.pair.l0.w").values());
  CHECK(a.init_embeddings().values() != c.init_embeddings().values());

  // init locations live inside the arena and are buffers, not parameters
  CHECK_FALSE(a.store().learnable().at("init.loc"));
  const Tensor loc = a.init_locations();
  REQUIRE(loc.rows() == cfg.n_init_queries);
  REQUIRE(loc.cols() == 3);
  for (int i = 0; i < loc.rows(); ++i) {
    CHECK(std::abs(loc.at(i, 0)) <= 0.7 * cfg.tracking_range);
    CHECK(std::abs(loc.at(i, 1)) <= 0.7 * cfg.tracking_range);
  }
}

TEST_CASE("encode_location reports out-of-arena clamps") {
  const auto cfg = toy_config();
  tracker::TrackModel m(cfg, 1);
  int clamps = -1;
  const Tensor inside =
      m.encode_location(Tensor::from({10.0, -20.0, 1.0}, 1, 3), &clamps);
  CHECK(clamps == 0);
  REQUIRE(inside.rows() == 1);
  REQUIRE(inside.cols() == cfg.d_model);

  m.encode_location(Tensor::from({100.0, 0.0, 1.0}, 1, 3), &clamps);
  CHECK(clamps == 1);
  m.encode_location(Tensor::from({-60.0, 70.0, 1.0, 0.0, 0.0, 200.0}, 2, 3),
                    &clamps);
  CHECK(clamps == 3);
}

TEST_CASE("deterministic attention equals scaled dot products") {
  const int d = 4;
  const Tensor q = Tensor::from({1.0, 0.0, 0.0, 0.0}, 1, d);
  const Tensor k =
      Tensor::from({1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0}, 2, d);
  tracker::PairMlpParams unused = constant_pair(d, 4, 0.0, 0.0);
  const auto attn = tracker::probabilistic_attention(
      q, k, unused, 1e-3, AttnMode::Deterministic, nullptr);
  CHECK(attn.scores.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(attn.scores.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  const double e0 = std::exp(0.5), e1 = 1.0;
  CHECK(attn.weights.at(0, 0) ==
        doctest::Approx(e0 / (e0 + e1)).epsilon(1e-12));
  CHECK(attn.nll.item() == 0.0);
  CHECK_FALSE(attn.mu.defined());

  // fully blocked row: weights forced to zero, diagnostic counted
  const std::vector<std::uint8_t> all_blocked = {1, 1};
  const auto blocked = tracker::probabilistic_attention(
      q, k, unused, 1e-3, AttnMode::Deterministic, nullptr, &all_blocked);
  CHECK(blocked.weights.at(0, 0) == 0.0);
  CHECK(blocked.weights.at(0, 1) == 0.0);
  CHECK(blocked.masked_rows == 1);
}

TEST_CASE("mean mode scores are exactly the pair-mlp means") {
  Rng rng(4);
  const int d = 4, h = 6;
  const Tensor q = Tensor::uniform(3, d, -1.0, 1.0, rng);
  const Tensor k = Tensor::uniform(5, d, -1.0, 1.0, rng);
  const auto pair = random_pair(d, h, rng, false);
  const auto attn = tracker::probabilistic_attention(q, k, pair, 1e-3,
                                                     AttnMode::Mean, nullptr);
  REQUIRE(attn.mu.defined());
  CHECK(attn.scores.values() == attn.mu.values());  // bitwise
  CHECK(attn.nll.item() == 0.0);
  for (int i = 0; i < attn.sigma.rows(); ++i)
    for (int j = 0; j < attn.sigma.cols(); ++j)
      CHECK(attn.sigma.at(i, j) >= 1e-3);
}

TEST_CASE("sample mode draws alpha = mu + sigma * eps") {
  const int d = 4;

  SUBCASE("same rng seed reproduces the draw, different seed changes it") {
    Rng init(7);
    const Tensor q = Tensor::uniform(3, d, -1.0, 1.0, init);
    const Tensor k = Tensor::uniform(4, d, -1.0, 1.0, init);
    const auto pair = random_pair(d, 6, init, false);
    Rng r1(100), r2(100), r3(101);
    const auto a1 = tracker::probabilistic_attention(q, k, pair, 1e-3,
                                                     AttnMode::Sample, &r1);
    const auto a2 = tracker::probabilistic_attention(q, k, pair, 1e-3,
                                                     AttnMode::Sample, &r2);
    const auto a3 = tracker::probabilistic_attention(q, k, pair, 1e-3,
                                                     AttnMode::Sample, &r3);
    CHECK(a1.scores.values() == a2.scores.values());
    CHECK(a1.scores.values() != a3.scores.values());
    CHECK(a1.nll.item() == a2.nll.item());
  }

  SUBCASE("empirical mean of alpha stays within 3 sigma / sqrt(N) of mu") {
    const int n = 100000;
    std::vector<double> qv(static_cast<std::size_t>(n) * d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        qv[static_cast<std::size_t>(i) * d + j] = 0.3 * (j + 1);
    const Tensor q = Tensor::from(std::move(qv), n, d);
    const Tensor k = Tensor::from({0.5, -0.25, 0.1, 0.8}, 1, d);
    const auto pair = constant_pair(d, 4, 1.25, 0.4);
    Rng rng(5);
    const auto attn = tracker::probabilistic_attention(q, k, pair, 1e-3,
                                                       AttnMode::Sample, &rng);
    const double sigma = std::log1p(std::exp(0.4)) + 1e-3;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += attn.scores.at(i, 0);
    mean /= n;
    CHECK(std::abs(mean - 1.25) <= 3.0 * sigma / std::sqrt(double(n)));
    CHECK(attn.sigma.at(0, 0) == doctest::Approx(sigma).epsilon(1e-12));
  }

  SUBCASE("nll matches the closed form, honoring the mask") {
    Rng init(9);
    const int n = 2, m = 3;
    const Tensor q = Tensor::uniform(n, d, -1.0, 1.0, init);
    const Tensor k = Tensor::uniform(m, d, -1.0, 1.0, init);
    const auto pair = random_pair(d, 6, init, false);
    const std::vector<std::uint8_t> blocked = {0, 1, 0, 0, 0, 0};
    Rng rng(12);
    const auto attn = tracker::probabilistic_attention(
        q, k, pair, 1e-3, AttnMode::Sample, &rng, &blocked);
    double expect = 0.0;
    int open = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        if (blocked[static_cast<std::size_t>(i) * m + j]) continue;
        double dot = 0.0;
        for (int c = 0; c < d; ++c) dot += q.at(i, c) * k.at(j, c);
        const double target = dot / std::sqrt(double(d));
        const double alpha = attn.scores.at(i, j);
        const double sg = attn.sigma.at(i, j);
        expect += std::log(sg) +
                  (alpha - target) * (alpha - target) / (2.0 * sg * sg);
        ++open;
      }
    expect /= open;
    CHECK(attn.nll.item() == doctest::Approx(expect).epsilon(1e-12));
  }

  SUBCASE("sampling without an rng is an error") {
    const Tensor q = Tensor::zeros(1, d), k = Tensor::zeros(1, d);
    const auto pair = constant_pair(d, 4, 0.0, 0.0);
    CHECK_THROWS_AS(static_cast<void>(tracker::probabilistic_attention(
                        q, k, pair, 1e-3, AttnMode::Sample, nullptr)),
                    std::invalid_argument);
  }
}

TEST_CASE("attention gradients agree with finite differences under frozen eps") {
  // The nll's regression target is the detached dot-product score, so moving
  // q or k shifts the target without contributing gradient -- by design.
  // Finite differences therefore validate q/k through the attention weights
  // (no detach on that path) and the pair MLP through the nll.
  const int d = 4, h = 6, n = 3, m = 4;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng init(numcore::derive_seed(seed, 500));
    Tensor q = Tensor::uniform(n, d, -1.0, 1.0, init, true);
    Tensor k = Tensor::uniform(m, d, -1.0, 1.0, init, true);
    auto pair = random_pair(d, h, init, true);
    const Tensor probe = Tensor::uniform(n, m, -1.0, 1.0, init);
    const std::uint64_t eps_seed = numcore::derive_seed(seed, 501);

    // scores enter too: softmax alone is blind to a per-row constant shift
    // of mu, which would leave the mu bias with an exactly-zero gradient and
    // the finite difference comparing rounding noise.
    auto weights_path = [&]() {
      Rng eps_rng(eps_seed);  // frozen noise: every call sees the same eps
      const auto attn = tracker::probabilistic_attention(
          q, k, pair, 1e-3, AttnMode::Sample, &eps_rng);
      return numcore::add(numcore::sum(numcore::mul(attn.weights, probe)),
                          numcore::scale(numcore::mean(attn.scores), 0.1));
    };
    const auto wrep = numcore::grad_check(
        weights_path, {q, k, pair.w0, pair.b0, pair.w1, pair.b1}, 1e-5);
    INFO("seed=", seed, " weights worst=", wrep.worst_index);
    CHECK(wrep.max_rel_err < 1e-4);

    auto nll_path = [&]() {
      Rng eps_rng(eps_seed);
      const auto attn = tracker::probabilistic_attention(
          q, k, pair, 1e-3, AttnMode::Sample, &eps_rng);
      return attn.nll;
    };
    const auto nrep = numcore::grad_check(
        nll_path, {pair.w0, pair.b0, pair.w1, pair.b1}, 1e-5);
    INFO("seed=", seed, " nll worst=", nrep.worst_index);
    CHECK(nrep.max_rel_err < 1e-4);
  }
}

TEST_CASE("decode produces consistent shapes, boxes and scores") {
  const auto cfg = toy_config();
  tracker::TrackModel model(cfg, 11);
  scene::ScenarioConfig scfg;
  scfg.seed = 4;
  scfg.n_objects = 5;
  scfg.n_frames = 2;
  const auto s = scene::generate_scenario(scfg);
  const Tensor tokens = tokens_of(s, 0);

  tracker::QueryBatch batch;
  batch.emb = model.init_embeddings();
  const Tensor loc = model.init_locations();
  for (int i = 0; i < loc.rows(); ++i) {
    geom::Box3D b;
    b.center = {loc.at(i, 0), loc.at(i, 1), loc.at(i, 2)};
    batch.boxes.push_back(b);
  }

  SUBCASE("shapes, determinism, numeric decode") {
    Rng r1(3), r2(3);
    const auto out1 =
        tracker::decode(model, batch, tokens, AttnMode::Sample, &r1);
    const auto out2 =
        tracker::decode(model, batch, tokens, AttnMode::Sample, &r2);
    const int n = cfg.n_init_queries;
    REQUIRE(out1.emb.rows() == n);
    REQUIRE(out1.emb.cols() == cfg.d_model);
    REQUIRE(out1.cls_logits.rows() == n);
    REQUIRE(out1.cls_logits.cols() == cfg.n_classes + 1);
    REQUIRE(out1.box_pred.rows() == n);
    REQUIRE(out1.box_pred.cols() == tracker::kBoxPredDim);
    REQUIRE(out1.boxes.size() == static_cast<std::size_t>(n));
    REQUIRE(out1.cross_attn.size() == static_cast<std::size_t>(cfg.n_layers));
    CHECK(out1.box_pred.values() == out2.box_pred.values());
    CHECK(out1.upd_nll.item() == out2.upd_nll.item());
    CHECK(out1.upd_nll.item() != 0.0);

    for (int i = 0; i < n; ++i) {
      const auto& b = out1.boxes[static_cast<std::size_t>(i)];
      CHECK(b.length ==
            doctest::Approx(std::exp(out1.box_pred.at(i, 3))).epsilon(1e-12));
      CHECK(b.width ==
            doctest::Approx(std::exp(out1.box_pred.at(i, 4))).epsilon(1e-12));
      CHECK(b.height ==
            doctest::Approx(std::exp(out1.box_pred.at(i, 5))).epsilon(1e-12));
      const double yaw =
          std::atan2(out1.box_pred.at(i, 6), out1.box_pred.at(i, 7));
      CHECK(b.yaw == doctest::Approx(geom::wrap_angle(yaw)).epsilon(1e-12));
      CHECK(b.score ==
            doctest::Approx(1.0 - out1.cls_probs.at(i, cfg.n_classes))
                .epsilon(1e-12));
      CHECK(b.score == tracker::decoded_score(out1.cls_probs, i, cfg.n_classes));
      CHECK(b.class_id >= 0);
      CHECK(b.class_id < cfg.n_classes);
    }
  }

  SUBCASE("mean mode is deterministic without an rng") {
    const auto a = tracker::decode(model, batch, tokens, AttnMode::Mean, nullptr);
    const auto b = tracker::decode(model, batch, tokens, AttnMode::Mean, nullptr);
    CHECK(a.box_pred.values() == b.box_pred.values());
    CHECK(a.upd_nll.item() == 0.0);
  }

  SUBCASE("a non-probabilistic model degrades sampling to dot products") {
    auto det_cfg = cfg;
    det_cfg.probabilistic = false;
    tracker::TrackModel det_model(det_cfg, 11);
    Rng rng(3);
    const auto out =
        tracker::decode(det_model, batch, tokens, AttnMode::Sample, &rng);
    CHECK(out.upd_nll.item() == 0.0);
    CHECK_FALSE(out.cross_attn[0].mu.defined());
  }

  SUBCASE("dropout changes activations only when enabled") {
    auto d_cfg = cfg;
    d_cfg.dropout_rate = 0.5;
    tracker::TrackModel d_model(d_cfg, 11);
    Rng r1(3), r2(3), r3(4);
    const auto base =
        tracker::decode(d_model, batch, tokens, AttnMode::Mean, &r1, false);
    const auto drop1 =
        tracker::decode(d_model, batch, tokens, AttnMode::Mean, &r2, true);
    const auto drop2 =
        tracker::decode(d_model, batch, tokens, AttnMode::Mean, &r3, true);
    CHECK(base.box_pred.values() != drop1.box_pred.values());
    CHECK(drop1.box_pred.values() != drop2.box_pred.values());
  }
}

TEST_CASE("denoise losses cannot leak gradient into normal queries") {
  const auto cfg = toy_config();
  tracker::TrackModel model(cfg, 21);
  scene::ScenarioConfig scfg;
  scfg.seed = 6;
  scfg.n_objects = 4;
  scfg.n_frames = 1;
  const auto s = scene::generate_scenario(scfg);
  const Tensor tokens = tokens_of(s, 0);

  const int n_normal = 3, n_groups = 2, group_size = 2;
  const int n = n_normal + n_groups * group_size;
  Rng rng(8);
  Tensor emb = Tensor::uniform(n, cfg.d_model, -0.5, 0.5, rng, true);

  tracker::QueryBatch batch;
  batch.emb = emb;
  for (int i = 0; i < n; ++i) {
    geom::Box3D b;
    b.center = {5.0 * i - 10.0, 3.0, 1.0};
    batch.boxes.push_back(b);
  }
  batch.self_mask = hqd::build_attention_mask(n_normal, n_groups, group_size);

  const auto out = tracker::decode(model, batch, tokens, AttnMode::Mean, nullptr);
  // loss touches only the denoise rows
  const Tensor loss =
      numcore::sum(numcore::slice_rows(out.cls_logits, n_normal, n));
  numcore::backward(loss);

  bool denoise_grad_nonzero = false;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cfg.d_model; ++j) {
      const double g = emb.grad_at(i, j);
      if (i < n_normal) {
        CHECK(g == 0.0);  // exact: masked attention must not mix partitions
      } else if (g != 0.0) {
        denoise_grad_nonzero = true;
      }
    }
  CHECK(denoise_grad_nonzero);
}

TEST_CASE("propagate_box rolls state through ego motion") {
  geom::Box3D b;
  b.center = {5.0, 0.0, 1.0};
  b.vx = 2.0;
  b.vy = 0.0;
  b.yaw = 0.3;

  SUBCASE("pure ego translation") {
    const auto out = tracker::propagate_box(b, scene::EgoPose{0.0, 0.0, 0.0},
                                            scene::EgoPose{1.0, 0.0, 0.0}, 0.5);
    CHECK(out.center.x == doctest::Approx(5.0).epsilon(1e-12));  // 5 + 1 - 1
    CHECK(out.center.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out.center.z == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.yaw == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(out.vx == doctest::Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("ego quarter turn rotates the propagated state") {
    const auto out =
        tracker::propagate_box(b, scene::EgoPose{0.0, 0.0, 0.0},
                               scene::EgoPose{0.0, 0.0, M_PI / 2}, 0.5);
    CHECK(out.center.x == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(out.center.y == doctest::Approx(-6.0).epsilon(1e-9));
    CHECK(out.yaw == doctest::Approx(0.3 - M_PI / 2).epsilon(1e-12));
    CHECK(out.vx == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(out.vy == doctest::Approx(-2.0).epsilon(1e-12));
  }
}

TEST_CASE("track_step lifecycle bookkeeping") {
  const auto cfg = toy_config();
  tracker::TrackModel model(cfg, 31);
  scene::ScenarioConfig scfg;
  scfg.seed = 9;
  scfg.n_objects = 4;
  scfg.n_frames = 5;
  const auto s = scene::generate_scenario(scfg);

  auto make_input = [&](int f, bool with_prompts) {
    tracker::StepInput in;
    in.scenario = &s;
    in.frame = f;
    in.token_feats = tokens_of(s, f);
    if (with_prompts) {
      Rng det_rng(
          numcore::derive_seed(scfg.seed, 90, static_cast<std::uint64_t>(f)));
      in.detections = scene::oracle_detections(s, f, {}, det_rng);
      in.depth_maps = scene::make_depth_maps(s, f);
    }
    return in;
  };

  SUBCASE("query budget split and monotone ids") {
    tracker::LifecycleConfig lc;
    tracker::TrackerState state;
    std::set<std::int64_t> dropped, seen;
    std::int64_t prev_next_id = 0;
    for (int f = 0; f < scfg.n_frames; ++f) {
      const auto res =
          tracker::track_step(model, lc, state, make_input(f, true),
                              AttnMode::Mean, nullptr);
      if (f == 0) CHECK(res.n_propagated == 0);
      CHECK(res.n_init == cfg.n_init_queries);
      CHECK(res.n_pqi + res.skipped_detections <=
            static_cast<int>(make_input(f, true).detections.size()));
      CHECK(state.next_id >= prev_next_id);
      prev_next_id = state.next_id;
      std::set<std::int64_t> live;
      for (const auto& t : state.tracks) {
        CHECK(t.id >= 0);
        CHECK(t.id < state.next_id);
        CHECK(live.insert(t.id).second);       // unique ids in state
        CHECK(dropped.count(t.id) == 0);       // dead ids never return
        CHECK(t.emb.size() == static_cast<std::size_t>(cfg.d_model));
      }
      for (const auto& b : res.outputs_world) {
        CHECK(b.score >= lc.tau_out);
        CHECK(live.count(b.track_id) == 1);
      }
      // record ids that disappeared this frame
      for (std::int64_t id : seen)
        if (live.count(id) == 0) dropped.insert(id);
      seen = live;
    }
  }

  SUBCASE("an impossible output threshold silences the tracker") {
    tracker::LifecycleConfig lc;
    lc.tau_out = 1.01;  // scores are strictly below 1
    tracker::TrackerState state;
    for (int f = 0; f < scfg.n_frames; ++f) {
      const auto res = tracker::track_step(model, lc, state,
                                           make_input(f, false),
                                           AttnMode::Mean, nullptr);
      CHECK(res.outputs_world.empty());
    }
  }

  SUBCASE("patience controls how long unsupported tracks survive") {
    tracker::LifecycleConfig lc;
    lc.tau_keep = 2.0;  // unreachable: every track misses every frame
    lc.tau_out = 2.0;
    lc.patience = 1;
    tracker::TrackerState state;
    tracker::Track t;
    t.id = 5;
    t.box.center = {5.0, 0.0, 1.0};
    t.emb.assign(static_cast<std::size_t>(cfg.d_model), 0.1);
    t.score = 0.9;
    state.tracks.push_back(t);
    state.next_id = 6;
    state.last_ego = s.frames[0].ego;
    state.has_ego = true;

    const auto r1 = tracker::track_step(model, lc, state, make_input(1, false),
                                        AttnMode::Mean, nullptr);
    CHECK(r1.n_propagated == 1);
    REQUIRE(state.tracks.size() == 1);  // missed once, still within patience
    CHECK(state.tracks[0].misses == 1);
    const auto r2 = tracker::track_step(model, lc, state, make_input(2, false),
                                        AttnMode::Mean, nullptr);
    CHECK(r2.n_propagated == 1);
    CHECK(state.tracks.empty());        // missed twice, patience 1 exceeded
    CHECK(state.next_id == 6);          // no births happened
  }

  SUBCASE("two fresh states evolve identically") {
    tracker::LifecycleConfig lc;
    tracker::TrackerState sa, sb;
    for (int f = 0; f < scfg.n_frames; ++f) {
      const auto ra = tracker::track_step(model, lc, sa, make_input(f, true),
                                          AttnMode::Mean, nullptr);
      const auto rb = tracker::track_step(model, lc, sb, make_input(f, true),
                                          AttnMode::Mean, nullptr);
      REQUIRE(ra.outputs_world.size() == rb.outputs_world.size());
      for (std::size_t i = 0; i < ra.outputs_world.size(); ++i) {
        CHECK(ra.outputs_world[i].track_id == rb.outputs_world[i].track_id);
        CHECK(ra.outputs_world[i].center.x == rb.outputs_world[i].center.x);
        CHECK(ra.outputs_world[i].score == rb.outputs_world[i].score);
      }
    }
  }
}
