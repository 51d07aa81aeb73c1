#include "qtrack/tracker/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qtrack/scenegen/scenegen.hpp"

namespace qtrack::tracker {

using namespace numcore;

double decoded_score(const Tensor& cls_probs, int row, int n_classes) {
  return 1.0 - cls_probs.at(row, n_classes);
}

DecodeResult decode(const TrackModel& model, const QueryBatch& batch,
                    const Tensor& token_feats, AttnMode mode, Rng* rng,
                    bool use_dropout) {
  const DecoderConfig& cfg = model.config();
  const int n = static_cast<int>(batch.boxes.size());
  if (batch.emb.rows() != n || batch.emb.cols() != cfg.d_model)
    throw std::invalid_argument("decode: emb shape does not match boxes");
  if (!batch.self_mask.empty() &&
      batch.self_mask.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("decode: self_mask size mismatch");
  if (token_feats.cols() != cfg.token_feat_dim)
    throw std::invalid_argument("decode: token feature dim mismatch");
  if (use_dropout && cfg.dropout_rate > 0.0 && rng == nullptr)
    throw std::invalid_argument("decode: dropout needs an rng");
  const AttnMode cross_mode =
      cfg.probabilistic ? mode : AttnMode::Deterministic;

  DecodeResult out;

  // Numeric query state -> encoder-side context.
  Tensor locs = Tensor::zeros(n, 3);
  Tensor ctx = Tensor::zeros(n, kBoxCtxDim);
  for (int i = 0; i < n; ++i) {
    const geom::Box3D& b = batch.boxes[i];
    locs.at(i, 0) = b.center.x;
    locs.at(i, 1) = b.center.y;
    locs.at(i, 2) = b.center.z;
    ctx.at(i, 0) = std::log(std::max(b.length, 1e-3));
    ctx.at(i, 1) = std::log(std::max(b.width, 1e-3));
    ctx.at(i, 2) = std::log(std::max(b.height, 1e-3));
    ctx.at(i, 3) = std::sin(b.yaw);
    ctx.at(i, 4) = std::cos(b.yaw);
  }
  Tensor e = add(batch.emb, add(model.encode_location(locs, &out.loc_clamps),
                                model.encode_box_ctx(ctx)));
  // Keys share the query-side location encoder, applied to the ego-frame
  // anchor point each token carries in its last three feature columns
  // (stored in kDepthScale units, converted back to meters here). That
  // gives cross-attention a spatial correspondence signal it would otherwise
  // have to extract from raw evidence channels.
  const Tensor anchors = scale(
      slice_cols(token_feats, cfg.token_feat_dim - 3, cfg.token_feat_dim),
      scene::kDepthScale);
  const Tensor keys =
      add(model.project_tokens(token_feats), model.encode_location(anchors));

  const auto& store = model.store();
  auto proj = [&](const Tensor& x, const std::string& w, const std::string& b) {
    return add_rowvec(matmul(x, store.get(w)), store.get(b));
  };

  Tensor nll_sum = Tensor::scalar(0.0);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "l" + std::to_string(l);

    // Self-attention over queries (always deterministic).
    {
      const Tensor q = proj(e, p + ".self.wq", p + ".self.bq");
      const Tensor k = proj(e, p + ".self.wk", p + ".self.bk");
      const Tensor v = proj(e, p + ".self.wv", p + ".self.bv");
      const Tensor scores =
          scale(matmul(q, transpose(k)), 1.0 / std::sqrt(double(cfg.d_model)));
      const Tensor w = softmax_rows(
          scores, batch.self_mask.empty() ? nullptr : &batch.self_mask);
      if (l == 0 && !batch.self_mask.empty()) {
        for (int i = 0; i < n; ++i) {
          bool all = true;
          for (int j = 0; j < n; ++j)
            if (!batch.self_mask[static_cast<std::size_t>(i) * n + j]) {
              all = false;
              break;
            }
          if (all) ++out.masked_rows;
        }
      }
      const Tensor attn_out =
          proj(matmul(w, v), p + ".self.wo", p + ".self.bo");
      e = layer_norm(add(e, attn_out), store.get(p + ".self.ln.g"),
                     store.get(p + ".self.ln.b"));
    }

    // Cross-attention to the image tokens.
    {
      const Tensor q = proj(e, p + ".cross.wq", p + ".cross.bq");
      const Tensor k = proj(keys, p + ".cross.wk", p + ".cross.bk");
      const Tensor v = proj(keys, p + ".cross.wv", p + ".cross.bv");
      PairMlpParams pair{store.get(p + ".cross.pair.l0.w"),
                         store.get(p + ".cross.pair.l0.b"),
                         store.get(p + ".cross.pair.l1.w"),
                         store.get(p + ".cross.pair.l1.b")};
      GaussianAttention ga = probabilistic_attention(
          q, k, pair, cfg.sigma_min, cross_mode, rng, nullptr);
      nll_sum = add(nll_sum, ga.nll);
      const Tensor attn_out =
          proj(matmul(ga.weights, v), p + ".cross.wo", p + ".cross.bo");
      e = layer_norm(add(e, attn_out), store.get(p + ".cross.ln.g"),
                     store.get(p + ".cross.ln.b"));
      out.cross_attn.push_back(std::move(ga));
    }

    // Feed-forward.
    {
      const Tensor w0 = store.get(p + ".ffn.l0.w");
      const Tensor b0 = store.get(p + ".ffn.l0.b");
      const Tensor w1 = store.get(p + ".ffn.l1.w");
      const Tensor b1 = store.get(p + ".ffn.l1.b");
      Tensor h = relu(add_rowvec(matmul(e, w0), b0));
      if (use_dropout && cfg.dropout_rate > 0.0)
        h = dropout(h, cfg.dropout_rate, *rng);
      const Tensor f = add_rowvec(matmul(h, w1), b1);
      e = layer_norm(add(e, f), store.get(p + ".ffn.ln.g"),
                     store.get(p + ".ffn.ln.b"));
    }
  }

  out.emb = e;
  out.cls_logits = model.cls_logits(e);
  out.cls_probs = softmax_rows(out.cls_logits);
  out.upd_nll = scale(nll_sum, 1.0 / cfg.n_layers);

  // Box head: center deltas become absolute via the query positions.
  const Tensor deltas = model.box_deltas(e);
  out.box_pred =
      concat_cols(add(slice_cols(deltas, 0, 3), locs.detach()),
                  slice_cols(deltas, 3, kBoxPredDim));

  out.boxes.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    geom::Box3D b;
    b.center = {out.box_pred.at(i, 0), out.box_pred.at(i, 1),
                out.box_pred.at(i, 2)};
    b.length = std::clamp(std::exp(out.box_pred.at(i, 3)), 1e-3, 100.0);
    b.width = std::clamp(std::exp(out.box_pred.at(i, 4)), 1e-3, 100.0);
    b.height = std::clamp(std::exp(out.box_pred.at(i, 5)), 1e-3, 100.0);
    b.yaw = geom::wrap_angle(
        std::atan2(out.box_pred.at(i, 6), out.box_pred.at(i, 7)));
    b.vx = out.box_pred.at(i, 8);
    b.vy = out.box_pred.at(i, 9);
    b.track_id = batch.boxes[static_cast<std::size_t>(i)].track_id;
    int best = 0;
    for (int c = 1; c < cfg.n_classes; ++c)
      if (out.cls_probs.at(i, c) > out.cls_probs.at(i, best)) best = c;
    b.class_id = best;
    b.score = decoded_score(out.cls_probs, i, cfg.n_classes);
    out.boxes.push_back(b);
  }
  return out;
}

}  // namespace qtrack::tracker
