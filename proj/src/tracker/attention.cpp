#include "qtrack/tracker/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace qtrack::tracker {

using namespace numcore;

GaussianAttention probabilistic_attention(
    const Tensor& queries, const Tensor& keys, const PairMlpParams& pair,
    double sigma_min, AttnMode mode, Rng* rng,
    const std::vector<std::uint8_t>* blocked) {
  if (queries.cols() != keys.cols())
    throw std::invalid_argument("probabilistic_attention: q/k dim mismatch");
  const int n = queries.rows();
  const int m = keys.rows();
  const int d = queries.cols();
  if (blocked && static_cast<int>(blocked->size()) != n * m)
    throw std::invalid_argument("probabilistic_attention: mask size mismatch");
  if (mode == AttnMode::Sample && rng == nullptr)
    throw std::invalid_argument("probabilistic_attention: Sample needs an rng");

  GaussianAttention out;
  const Tensor dots =
      scale(matmul(queries, transpose(keys)), 1.0 / std::sqrt(double(d)));

  if (mode == AttnMode::Deterministic) {
    out.scores = dots;
    out.nll = Tensor::scalar(0.0);
  } else {
    // Pairwise [q_i ; k_j] rows, i-major, matching reshape order below.
    const Tensor pair_in =
        concat_cols(repeat_interleave_rows(queries, m), tile_rows(keys, n));
    const Tensor hidden = relu(add_rowvec(matmul(pair_in, pair.w0), pair.b0));
    const Tensor mu_s = add_rowvec(matmul(hidden, pair.w1), pair.b1);
    const Tensor mu_flat = slice_cols(mu_s, 0, 1);
    const Tensor sigma_flat =
        add_scalar(softplus(slice_cols(mu_s, 1, 2)), sigma_min);
    out.mu = reshape(mu_flat, n, m);
    out.sigma = reshape(sigma_flat, n, m);

    if (mode == AttnMode::Mean) {
      out.scores = out.mu;
      out.nll = Tensor::scalar(0.0);
    } else {
      Tensor eps = Tensor::zeros(n * m, 1);
      for (int i = 0; i < n * m; ++i) eps.at(i, 0) = rng->normal();
      const Tensor alpha_flat = add(mu_flat, mul(sigma_flat, eps));
      out.scores = reshape(alpha_flat, n, m);

      // Gaussian NLL against the deterministic dot product, averaged over
      // the pairs that can actually attend.
      const Tensor target = reshape(dots, n * m, 1).detach();
      const Tensor diff = sub(alpha_flat, target);
      const Tensor per_pair = add(
          log_t(sigma_flat),
          div(square(diff), scale(square(sigma_flat), 2.0)));
      if (blocked) {
        std::vector<int> open;
        for (int i = 0; i < n * m; ++i)
          if (!(*blocked)[static_cast<std::size_t>(i)]) open.push_back(i);
        out.nll = open.empty() ? Tensor::scalar(0.0)
                               : mean(select_rows(per_pair, open));
      } else {
        out.nll = mean(per_pair);
      }
    }
  }

  if (blocked)
    for (int i = 0; i < n; ++i) {
      bool all = true;
      for (int j = 0; j < m; ++j)
        if (!(*blocked)[static_cast<std::size_t>(i) * m + j]) {
          all = false;
          break;
        }
      if (all) ++out.masked_rows;
    }

  out.weights = softmax_rows(out.scores, blocked);
  return out;
}

}  // namespace qtrack::tracker
