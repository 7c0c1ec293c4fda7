#pragma once

#include <cmath>
#include <vector>

#include "reverbdoa/errors.hpp"
#include "reverbdoa/tensor.hpp"

namespace reverbdoa {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. State holds first/second moment estimates per
// parameter tensor, in the order the tensors are first passed to step().
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long long steps() const { return t_; }

  void step(const std::vector<Tensor*>& params,
            const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size()) {
      throw dimension_error("adam: parameter/gradient count mismatch");
    }
    if (m_.empty()) {
      m_.reserve(params.size());
      v_.reserve(params.size());
      for (const Tensor* p : params) {
        m_.emplace_back(p->shape);
        v_.emplace_back(p->shape);
      }
    }
    if (params.size() != m_.size()) {
      throw dimension_error("adam: parameter count changed between steps");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor& p = *params[k];
      const Tensor& g = *grads[k];
      require_same_shape(p, m_[k], "adam step");
      require_same_shape(p, g, "adam step");
      double* mp = m_[k].values.data();
      double* vp = v_[k].values.data();
      double* pp = p.values.data();
      const double* gp = g.values.data();
      const int n = p.numel();
      for (int i = 0; i < n; ++i) {
        mp[i] = cfg_.beta1 * mp[i] + (1.0 - cfg_.beta1) * gp[i];
        vp[i] = cfg_.beta2 * vp[i] + (1.0 - cfg_.beta2) * gp[i] * gp[i];
        const double mhat = mp[i] / bc1;
        const double vhat = vp[i] / bc2;
        pp[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  long long t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace reverbdoa
