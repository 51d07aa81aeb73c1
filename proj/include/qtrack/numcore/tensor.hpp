#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "qtrack/numcore/rng.hpp"

namespace qtrack::numcore {

// Dense 2-D tensor of doubles with reverse-mode autodiff. The graph is
// define-by-run: every op allocates a fresh node holding its parents and a
// backward closure, and backward() walks the DAG in reverse topological
// order. Scalars are 1x1, vectors are 1xN or Nx1.
class Tensor;

struct TensorNode {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;
  std::vector<double> g;  // allocated iff requires_grad
  bool requires_grad = false;
  std::vector<Tensor> parents;
  std::function<void(TensorNode&)> backward_fn;
  bool backward_done = false;  // set on the root after backward()
  int topo_mark = 0;           // scratch for graph walks
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor full(int rows, int cols, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<double> values, int rows, int cols,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(int rows, int cols, double lo, double hi, Rng& rng,
                        bool requires_grad = false);

  bool defined() const { return static_cast<bool>(n_); }
  int rows() const { return n_->rows; }
  int cols() const { return n_->cols; }
  std::size_t size() const { return n_->v.size(); }
  bool requires_grad() const { return n_->requires_grad; }

  double at(int r, int c) const { return n_->v[idx(r, c)]; }
  double& at(int r, int c) { return n_->v[idx(r, c)]; }
  double item() const;  // value of a 1x1 tensor

  const std::vector<double>& values() const { return n_->v; }
  std::vector<double>& values() { return n_->v; }
  const std::vector<double>& grad() const;
  double grad_at(int r, int c) const;

  // Clears accumulated gradients on this tensor (typically a leaf).
  void zero_grad();

  // Value-only copy with no graph history.
  Tensor detach() const;

  TensorNode* node() const { return n_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}
  std::size_t idx(int r, int c) const {
    return static_cast<std::size_t>(r) * n_->cols + c;
  }
  friend Tensor make_op(int rows, int cols, std::vector<Tensor> parents,
                        std::function<void(TensorNode&)> backward_fn);
  std::shared_ptr<TensorNode> n_;
};

// --- graph execution ------------------------------------------------------

// Populates grads of every requires_grad leaf reachable from `loss`.
// `loss` must be 1x1; calling twice on the same root without rebuilding the
// graph throws.
void backward(const Tensor& loss);

// --- elementwise / structural ops ------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& a, const Tensor& row);  // a: n x m, row: 1 x m
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);  // stable log(1 + e^x)
Tensor log_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor square(const Tensor& a);
Tensor pow_scalar(const Tensor& a, double p);
Tensor sum(const Tensor& a);   // 1x1
Tensor mean(const Tensor& a);  // 1x1
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, int r0, int r1);  // [r0, r1)
Tensor slice_cols(const Tensor& a, int c0, int c1);  // [c0, c1)
Tensor reshape(const Tensor& a, int rows, int cols);
Tensor repeat_interleave_rows(const Tensor& a, int k);  // row i -> k copies
Tensor tile_rows(const Tensor& a, int k);               // whole block k times
Tensor select_rows(const Tensor& a, const std::vector<int>& idx);
Tensor gather_cols(const Tensor& a, const std::vector<int>& col_per_row);

// Row softmax. blocked (n x m, same shape, nonzero = excluded) zeroes the
// excluded entries; a fully blocked row yields an all-zero row.
Tensor softmax_rows(const Tensor& a, const std::vector<std::uint8_t>* blocked = nullptr);

// Per-row layer normalization with learnable gain/bias (1 x d each).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& a, double rate, Rng& rng);

// --- gradient verification ---------------------------------------------------

struct GradReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::string worst_index;  // "leaf_k[r,c]"
};

// Compares reverse-mode gradients of the scalar expression built by `f`
// against central finite differences (f(x+h) - f(x-h)) / 2h at every entry
// of every leaf. `f` must rebuild the graph from the leaves' current values
// on each call and be deterministic.
GradReport grad_check(const std::function<Tensor()>& f,
                      const std::vector<Tensor>& leaves, double step);

}  // namespace qtrack::numcore
