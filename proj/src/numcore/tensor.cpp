#include "qtrack/numcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qtrack::numcore {

namespace {

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << t.rows() << "x" << t.cols();
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a,
                              const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_str(a) + " vs " + shape_str(b));
}

void check_defined(const char* op, const Tensor& t) {
  if (!t.defined())
    throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

}  // namespace

Tensor make_op(int rows, int cols, std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward_fn) {
  auto n = std::make_shared<TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->v.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  for (const Tensor& p : parents)
    if (p.requires_grad()) n->requires_grad = true;
  if (n->requires_grad) {
    n->g.assign(n->v.size(), 0.0);
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  if (rows < 0 || cols < 0)
    throw std::invalid_argument("Tensor::zeros: negative shape");
  auto n = std::make_shared<TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->v.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  n->requires_grad = requires_grad;
  if (requires_grad) n->g.assign(n->v.size(), 0.0);
  return Tensor(std::move(n));
}

Tensor Tensor::full(int rows, int cols, double value, bool requires_grad) {
  Tensor t = zeros(rows, cols, requires_grad);
  std::fill(t.n_->v.begin(), t.n_->v.end(), value);
  return t;
}

Tensor Tensor::from(std::vector<double> values, int rows, int cols,
                    bool requires_grad) {
  if (values.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("Tensor::from: " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " needs " +
                                std::to_string(rows * cols) + " values, got " +
                                std::to_string(values.size()));
  Tensor t = zeros(rows, cols, requires_grad);
  t.n_->v = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({value}, 1, 1, requires_grad);
}

Tensor Tensor::uniform(int rows, int cols, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  Tensor t = zeros(rows, cols, requires_grad);
  for (double& x : t.n_->v) x = rng.uniform(lo, hi);
  return t;
}

double Tensor::item() const {
  if (size() != 1)
    throw std::invalid_argument("Tensor::item: tensor is " + shape_str(*this) +
                                ", not scalar");
  return n_->v[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!n_->requires_grad)
    throw std::logic_error("Tensor::grad: tensor does not require grad");
  return n_->g;
}

double Tensor::grad_at(int r, int c) const { return grad()[idx(r, c)]; }

void Tensor::zero_grad() {
  if (n_->requires_grad) std::fill(n_->g.begin(), n_->g.end(), 0.0);
  n_->backward_done = false;
}

Tensor Tensor::detach() const {
  Tensor t = zeros(rows(), cols(), false);
  t.n_->v = n_->v;
  return t;
}

// --- backward ----------------------------------------------------------------

void backward(const Tensor& loss) {
  check_defined("backward", loss);
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(loss));
  TensorNode* root = loss.node();
  if (root->backward_done)
    throw std::logic_error("backward: called twice on the same graph root");
  root->backward_done = true;
  if (!root->requires_grad) return;  // nothing to propagate into

  // iterative DFS post-order for reverse topological order
  std::vector<TensorNode*> order;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  root->topo_mark = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].node();
      if (p->requires_grad && p->topo_mark == 0) {
        p->topo_mark = 1;
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (TensorNode* n : order) n->topo_mark = 0;

  root->g[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// --- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a, b);
  Tensor out = make_op(a.rows(), a.cols(), {a, b}, [](TensorNode& o) {
    for (int s = 0; s < 2; ++s) {
      TensorNode* p = o.parents[s].node();
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < o.g.size(); ++i) p->g[i] += o.g[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = a.values()[i] + b.values()[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
  Tensor out = make_op(a.rows(), a.cols(), {a, b}, [](TensorNode& o) {
    TensorNode* pa = o.parents[0].node();
    TensorNode* pb = o.parents[1].node();
    for (std::size_t i = 0; i < o.g.size(); ++i) {
      if (pa->requires_grad) pa->g[i] += o.g[i];
      if (pb->requires_grad) pb->g[i] -= o.g[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = a.values()[i] - b.values()[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a, b);
  Tensor out = make_op(a.rows(), a.cols(), {a, b}, [](TensorNode& o) {
    TensorNode* pa = o.parents[0].node();
    TensorNode* pb = o.parents[1].node();
    for (std::size_t i = 0; i < o.g.size(); ++i) {
      if (pa->requires_grad) pa->g[i] += o.g[i] * pb->v[i];
      if (pb->requires_grad) pb->g[i] += o.g[i] * pa->v[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = a.values()[i] * b.values()[i];
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("div", a, b);
  Tensor out = make_op(a.rows(), a.cols(), {a, b}, [](TensorNode& o) {
    TensorNode* pa = o.parents[0].node();
    TensorNode* pb = o.parents[1].node();
    for (std::size_t i = 0; i < o.g.size(); ++i) {
      const double inv = 1.0 / pb->v[i];
      if (pa->requires_grad) pa->g[i] += o.g[i] * inv;
      if (pb->requires_grad) pb->g[i] -= o.g[i] * pa->v[i] * inv * inv;
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = a.values()[i] / b.values()[i];
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    shape_error("add_rowvec", a, row);
  const int m = a.cols();
  Tensor out = make_op(a.rows(), m, {a, row}, [m](TensorNode& o) {
    TensorNode* pa = o.parents[0].node();
    TensorNode* pr = o.parents[1].node();
    for (std::size_t i = 0; i < o.g.size(); ++i) {
      if (pa->requires_grad) pa->g[i] += o.g[i];
      if (pr->requires_grad) pr->g[i % m] += o.g[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = a.values()[i] + row.values()[i % m];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = make_op(a.rows(), a.cols(), {a}, [s](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t i = 0; i < o.g.size(); ++i) p->g[i] += o.g[i] * s;
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = a.values()[i] * s;
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = make_op(a.rows(), a.cols(), {a}, [](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t i = 0; i < o.g.size(); ++i) p->g[i] += o.g[i];
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = a.values()[i] + s;
  return out;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const int n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out = make_op(n, m, {a, b}, [n, k, m](TensorNode& o) {
    TensorNode* pa = o.parents[0].node();
    TensorNode* pb = o.parents[1].node();
    if (pa->requires_grad) {  // dA += dO * B^T
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const double go = o.g[static_cast<std::size_t>(i) * m + j];
          if (go == 0.0) continue;
          for (int t = 0; t < k; ++t)
            pa->g[static_cast<std::size_t>(i) * k + t] +=
                go * pb->v[static_cast<std::size_t>(t) * m + j];
        }
    }
    if (pb->requires_grad) {  // dB += A^T * dO
      for (int i = 0; i < n; ++i)
        for (int t = 0; t < k; ++t) {
          const double av = pa->v[static_cast<std::size_t>(i) * k + t];
          if (av == 0.0) continue;
          for (int j = 0; j < m; ++j)
            pb->g[static_cast<std::size_t>(t) * m + j] +=
                av * o.g[static_cast<std::size_t>(i) * m + j];
        }
    }
  });
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < k; ++t) {
      const double av = a.values()[static_cast<std::size_t>(i) * k + t];
      if (av == 0.0) continue;
      for (int j = 0; j < m; ++j)
        out.values()[static_cast<std::size_t>(i) * m + j] +=
            av * b.values()[static_cast<std::size_t>(t) * m + j];
    }
  return out;
}

Tensor transpose(const Tensor& a) {
  const int n = a.rows(), m = a.cols();
  Tensor out = make_op(m, n, {a}, [n, m](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        p->g[static_cast<std::size_t>(j) * m + i] +=
            o.g[static_cast<std::size_t>(i) * n + j];
  });
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      out.values()[static_cast<std::size_t>(j) * n + i] =
          a.values()[static_cast<std::size_t>(i) * m + j];
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = make_op(a.rows(), a.cols(), {a}, [](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t i = 0; i < o.g.size(); ++i)
      if (p->v[i] > 0.0) p->g[i] += o.g[i];
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  return out;
}

Tensor softplus(const Tensor& a) {
  Tensor out = make_op(a.rows(), a.cols(), {a}, [](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t i = 0; i < o.g.size(); ++i) {
      const double x = p->v[i];
      const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                  : std::exp(x) / (1.0 + std::exp(x));
      p->g[i] += o.g[i] * sig;
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.values()[i];
    out.values()[i] =
        x >= 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  return out;
}

Tensor log_t(const Tensor& a) {
  Tensor out = make_op(a.rows(), a.cols(), {a}, [](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t i = 0; i < o.g.size(); ++i) p->g[i] += o.g[i] / p->v[i];
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = std::log(a.values()[i]);
  return out;
}

Tensor exp_t(const Tensor& a) {
  Tensor out = make_op(a.rows(), a.cols(), {a}, [](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t i = 0; i < o.g.size(); ++i) p->g[i] += o.g[i] * o.v[i];
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = std::exp(a.values()[i]);
  return out;
}

Tensor square(const Tensor& a) {
  Tensor out = make_op(a.rows(), a.cols(), {a}, [](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t i = 0; i < o.g.size(); ++i)
      p->g[i] += o.g[i] * 2.0 * p->v[i];
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = a.values()[i] * a.values()[i];
  return out;
}

Tensor pow_scalar(const Tensor& a, double p) {
  Tensor out = make_op(a.rows(), a.cols(), {a}, [p](TensorNode& o) {
    TensorNode* pa = o.parents[0].node();
    for (std::size_t i = 0; i < o.g.size(); ++i)
      pa->g[i] += o.g[i] * p * std::pow(pa->v[i], p - 1.0);
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = std::pow(a.values()[i], p);
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = make_op(1, 1, {a}, [](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t i = 0; i < p->g.size(); ++i) p->g[i] += o.g[0];
  });
  double s = 0.0;
  for (double x : a.values()) s += x;
  out.values()[0] = s;
  return out;
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(a.size());
  Tensor out = make_op(1, 1, {a}, [inv](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t i = 0; i < p->g.size(); ++i) p->g[i] += o.g[0] * inv;
  });
  double s = 0.0;
  for (double x : a.values()) s += x;
  out.values()[0] = s * inv;
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_error("concat_cols", a, b);
  const int n = a.rows(), p = a.cols(), q = b.cols();
  Tensor out = make_op(n, p + q, {a, b}, [n, p, q](TensorNode& o) {
    TensorNode* pa = o.parents[0].node();
    TensorNode* pb = o.parents[1].node();
    for (int i = 0; i < n; ++i) {
      const std::size_t ro = static_cast<std::size_t>(i) * (p + q);
      if (pa->requires_grad)
        for (int j = 0; j < p; ++j)
          pa->g[static_cast<std::size_t>(i) * p + j] += o.g[ro + j];
      if (pb->requires_grad)
        for (int j = 0; j < q; ++j)
          pb->g[static_cast<std::size_t>(i) * q + j] += o.g[ro + p + j];
    }
  });
  for (int i = 0; i < n; ++i) {
    const std::size_t ro = static_cast<std::size_t>(i) * (p + q);
    for (int j = 0; j < p; ++j)
      out.values()[ro + j] = a.values()[static_cast<std::size_t>(i) * p + j];
    for (int j = 0; j < q; ++j)
      out.values()[ro + p + j] =
          b.values()[static_cast<std::size_t>(i) * q + j];
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_error("concat_rows", a, b);
  const std::size_t na = a.size();
  Tensor out = make_op(a.rows() + b.rows(), a.cols(), {a, b},
                       [na](TensorNode& o) {
                         TensorNode* pa = o.parents[0].node();
                         TensorNode* pb = o.parents[1].node();
                         if (pa->requires_grad)
                           for (std::size_t i = 0; i < na; ++i)
                             pa->g[i] += o.g[i];
                         if (pb->requires_grad)
                           for (std::size_t i = na; i < o.g.size(); ++i)
                             pb->g[i - na] += o.g[i];
                       });
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(),
            out.values().begin() + static_cast<std::ptrdiff_t>(na));
  return out;
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  if (r0 < 0 || r1 > a.rows() || r0 > r1)
    throw std::invalid_argument("slice_rows: [" + std::to_string(r0) + "," +
                                std::to_string(r1) + ") out of range for " +
                                std::to_string(a.rows()) + " rows");
  const int m = a.cols();
  const std::size_t off = static_cast<std::size_t>(r0) * m;
  Tensor out = make_op(r1 - r0, m, {a}, [off](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t i = 0; i < o.g.size(); ++i) p->g[off + i] += o.g[i];
  });
  std::copy(a.values().begin() + static_cast<std::ptrdiff_t>(off),
            a.values().begin() + static_cast<std::ptrdiff_t>(off + out.size()),
            out.values().begin());
  return out;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  if (c0 < 0 || c1 > a.cols() || c0 > c1)
    throw std::invalid_argument("slice_cols: [" + std::to_string(c0) + "," +
                                std::to_string(c1) + ") out of range for " +
                                std::to_string(a.cols()) + " cols");
  const int n = a.rows(), m = a.cols(), w = c1 - c0;
  Tensor out = make_op(n, w, {a}, [n, m, w, c0](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j)
        p->g[static_cast<std::size_t>(i) * m + c0 + j] +=
            o.g[static_cast<std::size_t>(i) * w + j];
  });
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < w; ++j)
      out.values()[static_cast<std::size_t>(i) * w + j] =
          a.values()[static_cast<std::size_t>(i) * m + c0 + j];
  return out;
}

Tensor reshape(const Tensor& a, int rows, int cols) {
  if (static_cast<std::size_t>(rows) * cols != a.size())
    throw std::invalid_argument(
        "reshape: cannot view " + shape_str(a) + " as " +
        std::to_string(rows) + "x" + std::to_string(cols));
  Tensor out = make_op(rows, cols, {a}, [](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t i = 0; i < o.g.size(); ++i) p->g[i] += o.g[i];
  });
  out.values() = a.values();
  return out;
}

Tensor repeat_interleave_rows(const Tensor& a, int k) {
  if (k < 1) throw std::invalid_argument("repeat_interleave_rows: k < 1");
  const int n = a.rows(), m = a.cols();
  Tensor out = make_op(n * k, m, {a}, [n, m, k](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (int i = 0; i < n; ++i)
      for (int r = 0; r < k; ++r)
        for (int j = 0; j < m; ++j)
          p->g[static_cast<std::size_t>(i) * m + j] +=
              o.g[(static_cast<std::size_t>(i) * k + r) * m + j];
  });
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < k; ++r)
      for (int j = 0; j < m; ++j)
        out.values()[(static_cast<std::size_t>(i) * k + r) * m + j] =
            a.values()[static_cast<std::size_t>(i) * m + j];
  return out;
}

Tensor tile_rows(const Tensor& a, int k) {
  if (k < 1) throw std::invalid_argument("tile_rows: k < 1");
  const std::size_t block = a.size();
  Tensor out = make_op(a.rows() * k, a.cols(), {a}, [block, k](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (int r = 0; r < k; ++r)
      for (std::size_t i = 0; i < block; ++i)
        p->g[i] += o.g[static_cast<std::size_t>(r) * block + i];
  });
  for (int r = 0; r < k; ++r)
    std::copy(a.values().begin(), a.values().end(),
              out.values().begin() +
                  static_cast<std::ptrdiff_t>(static_cast<std::size_t>(r) * block));
  return out;
}

Tensor select_rows(const Tensor& a, const std::vector<int>& idx) {
  const int m = a.cols();
  for (int i : idx)
    if (i < 0 || i >= a.rows())
      throw std::invalid_argument("select_rows: index " + std::to_string(i) +
                                  " out of range for " +
                                  std::to_string(a.rows()) + " rows");
  auto idx_copy = idx;
  Tensor out = make_op(static_cast<int>(idx.size()), m, {a},
                       [m, idx_copy](TensorNode& o) {
                         TensorNode* p = o.parents[0].node();
                         for (std::size_t r = 0; r < idx_copy.size(); ++r)
                           for (int j = 0; j < m; ++j)
                             p->g[static_cast<std::size_t>(idx_copy[r]) * m + j] +=
                                 o.g[r * m + j];
                       });
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int j = 0; j < m; ++j)
      out.values()[r * m + j] =
          a.values()[static_cast<std::size_t>(idx[r]) * m + j];
  return out;
}

Tensor gather_cols(const Tensor& a, const std::vector<int>& col_per_row) {
  if (static_cast<int>(col_per_row.size()) != a.rows())
    throw std::invalid_argument("gather_cols: need one column index per row");
  const int m = a.cols();
  for (int c : col_per_row)
    if (c < 0 || c >= m)
      throw std::invalid_argument("gather_cols: column " + std::to_string(c) +
                                  " out of range for " + std::to_string(m) +
                                  " cols");
  auto idx = col_per_row;
  Tensor out = make_op(a.rows(), 1, {a}, [m, idx](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t r = 0; r < idx.size(); ++r)
      p->g[r * m + idx[r]] += o.g[r];
  });
  for (std::size_t r = 0; r < idx.size(); ++r)
    out.values()[r] = a.values()[r * m + idx[r]];
  return out;
}

Tensor softmax_rows(const Tensor& a, const std::vector<std::uint8_t>* blocked) {
  if (blocked && blocked->size() != a.size())
    throw std::invalid_argument("softmax_rows: mask size mismatch");
  const int n = a.rows(), m = a.cols();
  std::vector<std::uint8_t> mask =
      blocked ? *blocked : std::vector<std::uint8_t>(a.size(), 0);
  Tensor out = make_op(n, m, {a}, [n, m, mask](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (int i = 0; i < n; ++i) {
      const std::size_t ro = static_cast<std::size_t>(i) * m;
      double dot = 0.0;
      for (int j = 0; j < m; ++j)
        if (!mask[ro + j]) dot += o.g[ro + j] * o.v[ro + j];
      for (int j = 0; j < m; ++j)
        if (!mask[ro + j])
          p->g[ro + j] += o.v[ro + j] * (o.g[ro + j] - dot);
    }
  });
  for (int i = 0; i < n; ++i) {
    const std::size_t ro = static_cast<std::size_t>(i) * m;
    double mx = -1e300;
    bool any = false;
    for (int j = 0; j < m; ++j)
      if (!mask[ro + j]) {
        any = true;
        mx = std::max(mx, a.values()[ro + j]);
      }
    if (!any) continue;  // fully blocked row stays all-zero
    double z = 0.0;
    for (int j = 0; j < m; ++j)
      if (!mask[ro + j]) {
        out.values()[ro + j] = std::exp(a.values()[ro + j] - mx);
        z += out.values()[ro + j];
      }
    for (int j = 0; j < m; ++j)
      if (!mask[ro + j]) out.values()[ro + j] /= z;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const int n = x.rows(), d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d) shape_error("layer_norm", x, gain);
  if (bias.rows() != 1 || bias.cols() != d) shape_error("layer_norm", x, bias);
  Tensor out = make_op(n, d, {x, gain, bias}, [n, d, eps](TensorNode& o) {
    TensorNode* px = o.parents[0].node();
    TensorNode* pg = o.parents[1].node();
    TensorNode* pb = o.parents[2].node();
    for (int i = 0; i < n; ++i) {
      const std::size_t ro = static_cast<std::size_t>(i) * d;
      double mu = 0.0, var = 0.0;
      for (int j = 0; j < d; ++j) mu += px->v[ro + j];
      mu /= d;
      for (int j = 0; j < d; ++j) {
        const double c = px->v[ro + j] - mu;
        var += c * c;
      }
      var /= d;
      const double inv_s = 1.0 / std::sqrt(var + eps);
      // xhat_j = (x_j - mu) * inv_s
      double m1 = 0.0, m2 = 0.0;  // mean(g*gain), mean(g*gain*xhat)
      for (int j = 0; j < d; ++j) {
        const double xhat = (px->v[ro + j] - mu) * inv_s;
        const double gg = o.g[ro + j] * pg->v[j];
        m1 += gg;
        m2 += gg * xhat;
        if (pg->requires_grad) pg->g[j] += o.g[ro + j] * xhat;
        if (pb->requires_grad) pb->g[j] += o.g[ro + j];
      }
      m1 /= d;
      m2 /= d;
      if (px->requires_grad)
        for (int j = 0; j < d; ++j) {
          const double xhat = (px->v[ro + j] - mu) * inv_s;
          const double gg = o.g[ro + j] * pg->v[j];
          px->g[ro + j] += (gg - m1 - xhat * m2) * inv_s;
        }
    }
  });
  for (int i = 0; i < n; ++i) {
    const std::size_t ro = static_cast<std::size_t>(i) * d;
    double mu = 0.0, var = 0.0;
    for (int j = 0; j < d; ++j) mu += x.values()[ro + j];
    mu /= d;
    for (int j = 0; j < d; ++j) {
      const double c = x.values()[ro + j] - mu;
      var += c * c;
    }
    var /= d;
    const double inv_s = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j)
      out.values()[ro + j] =
          (x.values()[ro + j] - mu) * inv_s * gain.values()[j] +
          bias.values()[j];
  }
  return out;
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return scale(a, 1.0);
  const double keep = 1.0 - rate;
  std::vector<double> m(a.size());
  for (double& x : m) x = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  Tensor out = make_op(a.rows(), a.cols(), {a}, [m](TensorNode& o) {
    TensorNode* p = o.parents[0].node();
    for (std::size_t i = 0; i < o.g.size(); ++i) p->g[i] += o.g[i] * m[i];
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = a.values()[i] * m[i];
  return out;
}

// --- grad check ----------------------------------------------------------------

GradReport grad_check(const std::function<Tensor()>& f,
                      const std::vector<Tensor>& leaves, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be > 0");
  Tensor loss = f();
  if (loss.size() != 1)
    throw std::invalid_argument("grad_check: f must be scalar-valued");
  for (Tensor l : leaves) l.zero_grad();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const Tensor& l : leaves) analytic.push_back(l.grad());

  GradReport rep;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    for (std::size_t i = 0; i < leaf.size(); ++i) {
      const double saved = leaf.values()[i];
      leaf.values()[i] = saved + step;
      const double fp = f().item();
      leaf.values()[i] = saved - step;
      const double fm = f().item();
      leaf.values()[i] = saved;
      const double fd = (fp - fm) / (2.0 * step);
      const double ad = analytic[li][i];
      const double abs_err = std::abs(ad - fd);
      const double rel_err =
          abs_err / std::max({std::abs(ad), std::abs(fd), 1e-8});
      if (abs_err > rep.max_abs_err) rep.max_abs_err = abs_err;
      if (rel_err > rep.max_rel_err) {
        rep.max_rel_err = rel_err;
        rep.worst_index = "leaf_" + std::to_string(li) + "[" +
                          std::to_string(i / leaf.cols()) + "," +
                          std::to_string(i % leaf.cols()) + "]";
      }
    }
  }
  return rep;
}

}  // namespace qtrack::numcore
