#include "qtrack/matcher/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace qtrack::match {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Assignment hungarian(const std::vector<double>& cost, int n_rows, int n_cols) {
  if (n_rows < 0 || n_cols < 0 ||
      cost.size() != static_cast<std::size_t>(n_rows) * static_cast<std::size_t>(n_cols))
    throw std::invalid_argument("hungarian: cost size does not match n_rows*n_cols");

  Assignment out;
  out.row_to_col.assign(static_cast<std::size_t>(n_rows), -1);
  out.col_to_row.assign(static_cast<std::size_t>(n_cols), -1);
  if (n_rows == 0 || n_cols == 0) return out;

  // Potentials formulation; pad to square with zero-cost dummy entries so
  // rectangular problems reduce to the square case.
  const int n = std::max(n_rows, n_cols);
  auto c = [&](int r, int col) -> double {
    if (r < n_rows && col < n_cols)
      return cost[static_cast<std::size_t>(r) * n_cols + col];
    return 0.0;
  };

  // 1-indexed internals; p[j] = row matched to column j.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = c(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= n; ++j) {
    const int r = p[static_cast<std::size_t>(j)] - 1;
    const int col = j - 1;
    if (r < n_rows && col < n_cols) {
      out.row_to_col[static_cast<std::size_t>(r)] = col;
      out.col_to_row[static_cast<std::size_t>(col)] = r;
      out.total_cost += cost[static_cast<std::size_t>(r) * n_cols + col];
    }
  }
  return out;
}

Assignment hungarian_bruteforce(const std::vector<double>& cost, int n_rows,
                                int n_cols) {
  if (cost.size() != static_cast<std::size_t>(n_rows) * static_cast<std::size_t>(n_cols))
    throw std::invalid_argument("hungarian_bruteforce: cost size mismatch");
  if (std::min(n_rows, n_cols) > 9)
    throw std::invalid_argument("hungarian_bruteforce: problem too large");

  Assignment best;
  best.row_to_col.assign(static_cast<std::size_t>(n_rows), -1);
  best.col_to_row.assign(static_cast<std::size_t>(n_cols), -1);
  if (n_rows == 0 || n_cols == 0) return best;

  // Permute the larger side over slots of the smaller side.
  const bool rows_small = n_rows <= n_cols;
  std::vector<int> perm(static_cast<std::size_t>(std::max(n_rows, n_cols)));
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = kInf;
  std::vector<int> best_perm;
  do {
    double c = 0.0;
    const int k = std::min(n_rows, n_cols);
    for (int i = 0; i < k; ++i) {
      const int r = rows_small ? i : perm[static_cast<std::size_t>(i)];
      const int col = rows_small ? perm[static_cast<std::size_t>(i)] : i;
      c += cost[static_cast<std::size_t>(r) * n_cols + col];
    }
    if (c < best_cost - 1e-15) {
      best_cost = c;
      best_perm.assign(perm.begin(), perm.begin() + k);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  const int k = std::min(n_rows, n_cols);
  for (int i = 0; i < k; ++i) {
    const int r = rows_small ? i : best_perm[static_cast<std::size_t>(i)];
    const int col = rows_small ? best_perm[static_cast<std::size_t>(i)] : i;
    best.row_to_col[static_cast<std::size_t>(r)] = col;
    best.col_to_row[static_cast<std::size_t>(col)] = r;
  }
  best.total_cost = best_cost;
  return best;
}

std::vector<double> build_train_costs(
    const std::vector<double>& class_probs, int n_classes,
    const std::vector<geom::Vec3>& query_centers,
    const std::vector<geom::Box3D>& gts, const TrainCostWeights& w) {
  const std::size_t n_q = query_centers.size();
  const std::size_t n_g = gts.size();
  if (class_probs.size() != n_q * static_cast<std::size_t>(n_classes))
    throw std::invalid_argument("build_train_costs: class_probs size mismatch");
  std::vector<double> cost(n_q * n_g, 0.0);
  for (std::size_t i = 0; i < n_q; ++i) {
    for (std::size_t j = 0; j < n_g; ++j) {
      const int cls = gts[j].class_id;
      if (cls < 0 || cls >= n_classes)
        throw std::invalid_argument("build_train_costs: gt class_id out of range");
      const double p = class_probs[i * static_cast<std::size_t>(n_classes) +
                                   static_cast<std::size_t>(cls)];
      const geom::Vec3 d = query_centers[i] - gts[j].center;
      const double l1 = std::abs(d.x) + std::abs(d.y) + std::abs(d.z);
      cost[i * n_g + j] = w.w_cls * (1.0 - p) + w.w_center * l1;
    }
  }
  return cost;
}

}  // namespace qtrack::match
