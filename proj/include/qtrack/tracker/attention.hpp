#pragma once

#include <cstdint>
#include <vector>

#include "qtrack/numcore/tensor.hpp"

namespace qtrack::tracker {

using numcore::Rng;
using numcore::Tensor;

enum class AttnMode {
  Deterministic,  // alpha = q.k / sqrt(d), no pair MLP
  Sample,         // alpha = mu + sigma * eps (training)
  Mean,           // alpha = mu (evaluation)
};

struct PairMlpParams {
  Tensor w0, b0, w1, b1;  // [q;k] -> hidden -> (mu, s)
};

// Pre-softmax attention scores plus the Gaussian bookkeeping needed for the
// NLL term and uncertainty probes.
struct GaussianAttention {
  Tensor scores;  // n x m, pre-softmax
  Tensor weights; // n x m, post-softmax
  Tensor mu;      // n x m (undefined in Deterministic mode)
  Tensor sigma;   // n x m (undefined in Deterministic mode)
  Tensor nll;     // 1 x 1; zero unless Sample mode
  int masked_rows = 0;  // rows with every key blocked (forced to zero)
};

// Computes attention between queries (n x d) and keys (m x d).
//   Deterministic: scores = Q K^T / sqrt(d); mu/sigma stay undefined.
//   Sample:        (mu, s) = pair MLP([q_i; k_j]); sigma = softplus(s) +
//                  sigma_min; alpha = mu + sigma * eps with eps drawn from
//                  rng; nll = mean over unblocked pairs of
//                  log sigma + (alpha - q.k/sqrt(d))^2 / (2 sigma^2), the
//                  dot-product target treated as a constant.
//   Mean:          alpha = mu, no sampling, nll = 0.
// blocked (optional, n x m, nonzero = excluded) masks the softmax; a fully
// blocked row yields all-zero weights and increments masked_rows.
GaussianAttention probabilistic_attention(
    const Tensor& queries, const Tensor& keys, const PairMlpParams& pair,
    double sigma_min, AttnMode mode, Rng* rng,
    const std::vector<std::uint8_t>* blocked = nullptr);

}  // namespace qtrack::tracker
