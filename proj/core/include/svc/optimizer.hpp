#pragma once

#include <cmath>
#include <vector>

#include "svc/tensor.hpp"

namespace svc {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Adam with bias correction. One state slot per parameter tensor, indexed
// by registration order, so updates are bit-reproducible for a fixed seed
// and iteration order.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void register_param(const Tensor& p) {
    m_.emplace_back(p.shape);
    v_.emplace_back(p.shape);
  }

  size_t size() const { return m_.size(); }
  int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(float lr) { cfg_.lr = lr; }

  // Applies one update across all registered parameters. `params[i]` and
  // `grads[i]` must match the shapes given at registration.
  void step(std::vector<Tensor*> params, std::vector<const Tensor*> grads) {
    require(params.size() == m_.size() && grads.size() == m_.size(), "optimizer_mismatch",
            "optimizer_step: parameter count differs from registration");
    ++step_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_));
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i];
      const Tensor& g = *grads[i];
      require(p.same_shape(m_[i]) && g.same_shape(m_[i]), "shape_mismatch",
              "optimizer_step: shape changed since registration");
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (size_t j = 0; j < p.data.size(); ++j) {
        const float gj = g.data[j];
        m.data[j] = cfg_.beta1 * m.data[j] + (1.0f - cfg_.beta1) * gj;
        v.data[j] = cfg_.beta2 * v.data[j] + (1.0f - cfg_.beta2) * gj * gj;
        const double mhat = m.data[j] / bc1;
        const double vhat = v.data[j] / bc2;
        const double upd = cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        if (!std::isfinite(upd)) fail("non_finite", "optimizer_step: non-finite update");
        p.data[j] -= static_cast<float>(upd);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  int64_t step_ = 0;
};

}  // namespace svc
