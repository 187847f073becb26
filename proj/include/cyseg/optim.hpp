#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cyseg/layers.hpp"

namespace cyseg {

// ADAM over one parameter group. The learning rate is supplied per step so
// the schedule stays outside the optimizer.
struct AdamHyper {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  using Hyper = AdamHyper;

  Adam(std::vector<Param*> params, Hyper hyper = Hyper())
      : params_(std::move(params)), hp_(hyper) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Param* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(hp_.beta1, t_);
    const double bc2 = 1.0 - std::pow(hp_.beta2, t_);
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      Param& p = *params_[pi];
      Tensor& m = m_[pi];
      Tensor& v = v_[pi];
      for (std::int64_t i = 0; i < p.value.size(); ++i) {
        double g = p.grad[i];
        m[i] = hp_.beta1 * m[i] + (1.0 - hp_.beta1) * g;
        v[i] = hp_.beta2 * v[i] + (1.0 - hp_.beta2) * g * g;
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        p.value[i] -= lr * mhat / (std::sqrt(vhat) + hp_.eps);
      }
    }
  }

  std::int64_t step_count() const { return t_; }
  const Hyper& hyper() const { return hp_; }

  // Checkpoint access: moment tensors plus the step counter.
  std::vector<Tensor>& moment1() { return m_; }
  std::vector<Tensor>& moment2() { return v_; }
  void set_step_count(std::int64_t t) { t_ = t; }

 private:
  std::vector<Param*> params_;
  Hyper hp_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace cyseg
