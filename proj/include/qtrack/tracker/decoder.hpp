#pragma once

#include <cstdint>
#include <vector>

#include "qtrack/tracker/attention.hpp"
#include "qtrack/tracker/model.hpp"

namespace qtrack::tracker {

struct QueryBatch {
  Tensor emb;                      // n x d; may carry graph history
  std::vector<geom::Box3D> boxes;  // numeric per-query state, ego frame
  // Optional n*n self-attention mask (nonzero = blocked), row-major.
  std::vector<std::uint8_t> self_mask;
};

struct DecodeResult {
  Tensor emb;         // n x d, refined queries
  Tensor cls_logits;  // n x (n_classes + 1)
  Tensor cls_probs;   // softmax of the above
  Tensor box_pred;    // n x kBoxPredDim, center made absolute
  std::vector<geom::Box3D> boxes;  // decoded numeric boxes, ego frame
  Tensor upd_nll;     // scalar, mean over layers (Sample mode only)
  std::vector<GaussianAttention> cross_attn;  // per layer
  int masked_rows = 0;  // self-attention rows with no visible peers
  int loc_clamps = 0;   // query coordinates clamped by encode_location
};

// Runs the full decoder stack. `token_feats` holds raw per-token features
// (m x token_feat_dim). `mode` selects the cross-attention behavior; when the
// model was built with probabilistic = false the mode degrades to
// Deterministic. `rng` is required for Sample mode and for dropout.
DecodeResult decode(const TrackModel& model, const QueryBatch& batch,
                    const Tensor& token_feats, AttnMode mode, Rng* rng,
                    bool use_dropout = false);

// Numeric score of a decoded query: 1 - p(background).
double decoded_score(const Tensor& cls_probs, int row, int n_classes);

}  // namespace qtrack::tracker
