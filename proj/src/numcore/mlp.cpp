#include "qtrack/numcore/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace qtrack::numcore {

Tensor ParamStore::insert(const std::string& name, Tensor t, bool learnable) {
  if (entries_.count(name))
    throw std::invalid_argument("ParamStore: duplicate name '" + name + "'");
  entries_.emplace(name, t);
  learnable_.emplace(name, learnable);
  return t;
}

Tensor ParamStore::add_param(const std::string& name, int rows, int cols,
                             Rng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  return insert(name, Tensor::uniform(rows, cols, -bound, bound, rng, true),
                true);
}

Tensor ParamStore::add_param_zeros(const std::string& name, int rows,
                                   int cols) {
  return insert(name, Tensor::zeros(rows, cols, true), true);
}

Tensor ParamStore::add_param_const(const std::string& name, int rows, int cols,
                                   double value) {
  return insert(name, Tensor::full(rows, cols, value, true), true);
}

Tensor ParamStore::add_buffer(const std::string& name, Tensor value) {
  if (value.requires_grad())
    throw std::invalid_argument("ParamStore: buffer '" + name +
                                "' must not require grad");
  return insert(name, std::move(value), false);
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw std::out_of_range("ParamStore: unknown name '" + name + "'");
  return it->second;
}

bool ParamStore::has(const std::string& name) const {
  return entries_.count(name) != 0;
}

std::vector<Tensor> ParamStore::params() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : entries_)
    if (learnable_.at(name)) out.push_back(t);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_)
    if (learnable_.at(name)) t.zero_grad();
}

Mlp Mlp::create(ParamStore& store, const std::string& prefix,
                const std::vector<int>& widths, const std::vector<Act>& acts,
                Rng& rng) {
  if (widths.size() < 2)
    throw std::invalid_argument("Mlp: need at least in/out widths");
  if (acts.size() != widths.size() - 1)
    throw std::invalid_argument("Mlp: need one activation per layer");
  Mlp mlp;
  mlp.acts = acts;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::string layer = prefix + ".l" + std::to_string(i);
    mlp.weights.push_back(
        store.add_param(layer + ".w", widths[i], widths[i + 1], rng));
    mlp.biases.push_back(store.add_param_zeros(layer + ".b", 1, widths[i + 1]));
  }
  return mlp;
}

Mlp Mlp::bind(const ParamStore& store, const std::string& prefix,
              const std::vector<int>& widths, const std::vector<Act>& acts) {
  Mlp mlp;
  mlp.acts = acts;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::string layer = prefix + ".l" + std::to_string(i);
    Tensor w = store.get(layer + ".w");
    if (w.rows() != widths[i] || w.cols() != widths[i + 1])
      throw std::invalid_argument("Mlp::bind: " + layer + ".w has shape " +
                                  std::to_string(w.rows()) + "x" +
                                  std::to_string(w.cols()));
    mlp.weights.push_back(w);
    mlp.biases.push_back(store.get(layer + ".b"));
  }
  return mlp;
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    h = add_rowvec(matmul(h, weights[i]), biases[i]);
    switch (acts[i]) {
      case Act::None:
        break;
      case Act::Relu:
        h = relu(h);
        break;
      case Act::Softplus:
        h = softplus(h);
        break;
    }
  }
  return h;
}

AdamW::AdamW(std::vector<Tensor> params, double lr, double weight_decay,
             double beta1, double beta2, double eps)
    : params_(std::move(params)),
      lr_(lr),
      wd_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::step(double lr_scale) {
  ++t_;
  const double lr = lr_ * lr_scale;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    const std::vector<double>& g = p.grad();
    std::vector<double>& v = p.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
      v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m_[k][i] / bc1;
      const double vhat = v_[k][i] / bc2;
      v[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * v[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double cosine_lr_scale(int step, int total_steps, double floor) {
  if (total_steps <= 0) return 1.0;
  double x = static_cast<double>(step) / total_steps;
  x = std::min(1.0, std::max(0.0, x));
  const double c = 0.5 * (1.0 + std::cos(3.14159265358979323846 * x));
  return floor + (1.0 - floor) * c;
}

}  // namespace qtrack::numcore
