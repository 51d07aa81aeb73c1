#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qtrack/geometry/geometry.hpp"
#include "qtrack/numcore/checkpoint.hpp"
#include "qtrack/numcore/mlp.hpp"
#include "qtrack/scenegen/scenegen.hpp"

namespace qtrack::tracker {

using numcore::Mlp;
using numcore::ParamStore;
using numcore::Rng;
using numcore::Tensor;

struct DecoderConfig {
  int d_model = 64;
  int n_layers = 2;
  int pair_hidden = 64;   // hidden width of the attention pair MLP
  int ffn_hidden = 128;
  int n_init_queries = 500;
  int n_classes = scene::kNumClasses;  // classification adds one background slot
  int n_bands = 32;                    // location-encoding frequency bands
  double sigma_min = 1e-3;             // floor added to softplus'd std
  double temperature = 10000.0;        // frequency progression base
  double tracking_range = 50.0;        // meters; location normalization span
  double dropout_rate = 0.0;           // FFN dropout (train mode only)
  int token_feat_dim = 8 + scene::kNumClasses;
  bool probabilistic = true;           // pair-MLP attention vs plain dot product

  void validate() const;  // throws std::invalid_argument
};

// Box-state context fed alongside the location encoding:
// [log l, log w, log h, sin yaw, cos yaw].
inline constexpr int kBoxCtxDim = 5;
// Box regression output: [cx, cy, cz, log l, log w, log h, sin yaw, cos yaw,
// vx, vy] (center absolute after refinement).
inline constexpr int kBoxPredDim = 10;

class TrackModel {
 public:
  TrackModel(const DecoderConfig& cfg, std::uint64_t seed);

  const DecoderConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  // Sinusoidal encoding of ego-frame locations (n x 3) pushed through a
  // two-layer MLP; coordinates are normalized over [-range, range] and
  // clamped first. clamp_count (optional) receives the number of clamped
  // coordinates, a sign queries drifted out of the arena.
  Tensor encode_location(const Tensor& locs, int* clamp_count = nullptr) const;

  // Raw per-token features (m x token_feat_dim) -> key embeddings (m x d).
  Tensor project_tokens(const Tensor& feats) const;

  // Box context features for embeddings (n x kBoxCtxDim -> n x d).
  Tensor encode_box_ctx(const Tensor& ctx) const;

  // Learned initial queries.
  Tensor init_embeddings() const { return store_.get("init.emb"); }
  Tensor init_locations() const { return store_.get("init.loc"); }
  Tensor class_embedding(int class_id) const;

  // Heads.
  Tensor cls_logits(const Tensor& emb) const;   // n x (n_classes + 1)
  Tensor box_deltas(const Tensor& emb) const;   // n x kBoxPredDim (center part is a delta)

  // Auxiliary 2D probes on raw token features.
  Tensor pqi_cls_logits(const Tensor& feats) const;
  Tensor pqi_box(const Tensor& feats) const;    // [du, dv, log w, log h] per token
  Tensor pqi_depth(const Tensor& feats) const;  // depth / kDepthScale

  int background_class() const { return cfg_.n_classes; }

 private:
  DecoderConfig cfg_;
  ParamStore store_;
  Mlp loc_enc_, cls_head_, box_head_;
};

}  // namespace qtrack::tracker
