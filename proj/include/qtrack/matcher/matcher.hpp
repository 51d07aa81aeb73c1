#pragma once

#include <cstdint>
#include <vector>

#include "qtrack/geometry/geometry.hpp"

namespace qtrack::match {

struct Assignment {
  // row_to_col[i] = matched column of row i, or -1 when unmatched.
  std::vector<int> row_to_col;
  std::vector<int> col_to_row;
  double total_cost = 0.0;
};

// Min-cost assignment on an n_rows x n_cols dense cost matrix (row-major).
// Rectangular inputs are padded internally; every row (or column when
// n_cols < n_rows) of the smaller side is matched. O(n^3) and fully
// deterministic: rows are augmented in index order, so tied optima always
// resolve the same way for the same input.
Assignment hungarian(const std::vector<double>& cost, int n_rows, int n_cols);

// Brute-force oracle, O(n!) with n = min(n_rows, n_cols) <= 9.
Assignment hungarian_bruteforce(const std::vector<double>& cost, int n_rows,
                                int n_cols);

struct TrainCostWeights {
  double w_cls = 1.0;
  double w_center = 0.25;
};

// Query-to-ground-truth matching cost for training:
//   cost(i, j) = w_cls * (1 - p_i[class_j]) + w_center * |c_i - c_j|_1
// class_probs is n_queries x n_classes row-major, centers are rig-frame.
std::vector<double> build_train_costs(
    const std::vector<double>& class_probs, int n_classes,
    const std::vector<geom::Vec3>& query_centers,
    const std::vector<geom::Box3D>& gts, const TrainCostWeights& w);

}  // namespace qtrack::match
