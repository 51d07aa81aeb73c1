#pragma once

#include <map>
#include <string>
#include <vector>

#include "qtrack/numcore/tensor.hpp"

namespace qtrack::numcore {

// Named registry of learnable parameters and persistent buffers. Iteration is
// in name order, which makes checkpoints and optimizer sweeps deterministic.
class ParamStore {
 public:
  // Glorot-uniform init: +-sqrt(6 / (fan_in + fan_out)).
  Tensor add_param(const std::string& name, int rows, int cols, Rng& rng);
  Tensor add_param_zeros(const std::string& name, int rows, int cols);
  Tensor add_param_const(const std::string& name, int rows, int cols,
                         double value);
  // Buffers persist in checkpoints but receive no gradient.
  Tensor add_buffer(const std::string& name, Tensor value);

  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<Tensor> params() const;          // name order, learnable only
  const std::map<std::string, Tensor>& all() const { return entries_; }
  const std::map<std::string, bool>& learnable() const { return learnable_; }

  void zero_grad();

 private:
  Tensor insert(const std::string& name, Tensor t, bool learnable);
  std::map<std::string, Tensor> entries_;
  std::map<std::string, bool> learnable_;
};

enum class Act { None, Relu, Softplus };

// Fully connected stack. widths = {in, h1, ..., out}; acts has one entry per
// layer (widths.size() - 1).
struct Mlp {
  std::vector<Tensor> weights;  // in_i x out_i
  std::vector<Tensor> biases;   // 1 x out_i
  std::vector<Act> acts;

  static Mlp create(ParamStore& store, const std::string& prefix,
                    const std::vector<int>& widths,
                    const std::vector<Act>& acts, Rng& rng);
  // Re-binds to tensors already present in the store (after checkpoint load).
  static Mlp bind(const ParamStore& store, const std::string& prefix,
                  const std::vector<int>& widths, const std::vector<Act>& acts);

  Tensor forward(const Tensor& x) const;  // x: n x widths.front()
  int in_dim() const { return weights.front().rows(); }
  int out_dim() const { return weights.back().cols(); }
};

// AdamW with optional cosine learning-rate schedule.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, double lr, double weight_decay,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // lr_scale multiplies the base lr (cosine schedules pass cos-annealed
  // factors here; 1.0 = base lr).
  void step(double lr_scale = 1.0);
  void zero_grad();
  int step_count() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, wd_, beta1_, beta2_, eps_;
  int t_ = 0;
};

// Cosine decay from 1 to floor over total steps.
double cosine_lr_scale(int step, int total_steps, double floor = 0.0);

}  // namespace qtrack::numcore
