#include "qtrack/tracker/model.hpp"

#include <cmath>
#include <stdexcept>

namespace qtrack::tracker {

using numcore::Act;
using numcore::derive_seed;

void DecoderConfig::validate() const {
  if (d_model <= 0 || n_layers <= 0 || pair_hidden <= 0 || ffn_hidden <= 0)
    throw std::invalid_argument("DecoderConfig: dimensions must be positive");
  if (n_init_queries < 0 || n_classes <= 0 || n_bands <= 0)
    throw std::invalid_argument("DecoderConfig: bad query/class/band counts");
  if (token_feat_dim < 3)
    throw std::invalid_argument(
        "DecoderConfig: token features must end in a 3-d anchor point");
  if (sigma_min <= 0.0)
    throw std::invalid_argument("DecoderConfig: sigma_min must be positive");
  if (tracking_range <= 0.0)
    throw std::invalid_argument("DecoderConfig: tracking_range must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("DecoderConfig: dropout_rate must be in [0, 1)");
}

TrackModel::TrackModel(const DecoderConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));  // independent of data streams
  const int d = cfg.d_model;

  store_.add_param("init.emb", cfg.n_init_queries, d, rng);
  {
    // Fixed reference locations: a deterministic low-discrepancy-ish spread
    // over the arena, not learned.
    Tensor loc = Tensor::zeros(cfg.n_init_queries, 3);
    Rng loc_rng(derive_seed(seed, 0x6c6f63ULL));
    const double r = 0.7 * cfg.tracking_range;
    for (int i = 0; i < cfg.n_init_queries; ++i) {
      loc.at(i, 0) = loc_rng.uniform(-r, r);
      loc.at(i, 1) = loc_rng.uniform(-r, r);
      loc.at(i, 2) = 1.0;
    }
    store_.add_buffer("init.loc", loc);
  }
  store_.add_param("cls_emb", cfg.n_classes, d, rng);

  loc_enc_ = Mlp::create(store_, "loc_enc", {6 * cfg.n_bands, d, d},
                         {Act::Relu, Act::None}, rng);
  store_.add_param("box_enc.w", kBoxCtxDim, d, rng);
  store_.add_param_zeros("box_enc.b", 1, d);
  store_.add_param("feat_proj.w", cfg.token_feat_dim, d, rng);
  store_.add_param_zeros("feat_proj.b", 1, d);

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "l" + std::to_string(l);
    for (const char* blk : {".self", ".cross"}) {
      store_.add_param(p + blk + ".wq", d, d, rng);
      store_.add_param_zeros(p + blk + ".bq", 1, d);
      store_.add_param(p + blk + ".wk", d, d, rng);
      store_.add_param_zeros(p + blk + ".bk", 1, d);
      store_.add_param(p + blk + ".wv", d, d, rng);
      store_.add_param_zeros(p + blk + ".bv", 1, d);
      store_.add_param(p + blk + ".wo", d, d, rng);
      store_.add_param_zeros(p + blk + ".bo", 1, d);
      store_.add_param_const(p + blk + ".ln.g", 1, d, 1.0);
      store_.add_param_zeros(p + blk + ".ln.b", 1, d);
    }
    Mlp::create(store_, p + ".cross.pair",
                {2 * d, cfg.pair_hidden, 2}, {Act::Relu, Act::None}, rng);
    Mlp::create(store_, p + ".ffn", {d, cfg.ffn_hidden, d},
                {Act::Relu, Act::None}, rng);
    store_.add_param_const(p + ".ffn.ln.g", 1, d, 1.0);
    store_.add_param_zeros(p + ".ffn.ln.b", 1, d);
  }

  cls_head_ = Mlp::create(store_, "head.cls", {d, d, cfg.n_classes + 1},
                          {Act::Relu, Act::None}, rng);
  box_head_ = Mlp::create(store_, "head.box", {d, d, kBoxPredDim},
                          {Act::Relu, Act::None}, rng);

  store_.add_param("pqi.cls.w", cfg.token_feat_dim, cfg.n_classes + 1, rng);
  store_.add_param_zeros("pqi.cls.b", 1, cfg.n_classes + 1);
  store_.add_param("pqi.box.w", cfg.token_feat_dim, 4, rng);
  store_.add_param_zeros("pqi.box.b", 1, 4);
  store_.add_param("pqi.depth.w", cfg.token_feat_dim, 1, rng);
  store_.add_param_zeros("pqi.depth.b", 1, 1);
}

Tensor TrackModel::encode_location(const Tensor& locs, int* clamp_count) const {
  if (locs.cols() != 3)
    throw std::invalid_argument("encode_location: expected n x 3 locations");
  const int n = locs.rows();
  const int nb = cfg_.n_bands;
  const double range = cfg_.tracking_range;
  int clamped = 0;
  Tensor enc = Tensor::zeros(n, 6 * nb);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      double t = (locs.at(i, c) + range) / (2.0 * range);
      if (t < 0.0 || t > 1.0) {
        ++clamped;
        t = std::min(1.0, std::max(0.0, t));
      }
      const double angle_base = t * 2.0 * M_PI;
      for (int b = 0; b < nb; ++b) {
        const double freq =
            std::pow(cfg_.temperature, static_cast<double>(b) / nb);
        const double a = angle_base * freq;
        enc.at(i, (c * nb + b) * 2) = std::sin(a);
        enc.at(i, (c * nb + b) * 2 + 1) = std::cos(a);
      }
    }
  }
  if (clamp_count) *clamp_count = clamped;
  return loc_enc_.forward(enc);
}

Tensor TrackModel::project_tokens(const Tensor& feats) const {
  return numcore::add_rowvec(numcore::matmul(feats, store_.get("feat_proj.w")),
                             store_.get("feat_proj.b"));
}

Tensor TrackModel::encode_box_ctx(const Tensor& ctx) const {
  return numcore::add_rowvec(numcore::matmul(ctx, store_.get("box_enc.w")),
                             store_.get("box_enc.b"));
}

Tensor TrackModel::class_embedding(int class_id) const {
  if (class_id < 0 || class_id >= cfg_.n_classes)
    throw std::invalid_argument("class_embedding: class out of range");
  return numcore::slice_rows(store_.get("cls_emb"), class_id, class_id + 1);
}

Tensor TrackModel::cls_logits(const Tensor& emb) const {
  return cls_head_.forward(emb);
}

Tensor TrackModel::box_deltas(const Tensor& emb) const {
  return box_head_.forward(emb);
}

Tensor TrackModel::pqi_cls_logits(const Tensor& feats) const {
  return numcore::add_rowvec(numcore::matmul(feats, store_.get("pqi.cls.w")),
                             store_.get("pqi.cls.b"));
}

Tensor TrackModel::pqi_box(const Tensor& feats) const {
  return numcore::add_rowvec(numcore::matmul(feats, store_.get("pqi.box.w")),
                             store_.get("pqi.box.b"));
}

Tensor TrackModel::pqi_depth(const Tensor& feats) const {
  return numcore::add_rowvec(numcore::matmul(feats, store_.get("pqi.depth.w")),
                             store_.get("pqi.depth.b"));
}

}  // namespace qtrack::tracker
