#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.h"
#include "model/config.h"

namespace refbase {

// AdamW with decoupled weight decay. Decay 0.05 comes from the tuned
// recipe; the remaining values are the usual large-scale-training defaults,
// all overridable. Rank-1 tensors (biases, norm scales) are excluded from
// decay unless decay_scales_and_biases is set.
struct OptimConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  double grad_clip = 1.0;
  bool decay_scales_and_biases = false;

  std::string to_json() const;
  static OptimConfig from_json(const std::string& text);
};

class AdamW {
 public:
  AdamW(const OptimConfig& cfg, const std::vector<TensorSpec>& specs);

  // Restores moments from a checkpoint.
  AdamW(const OptimConfig& cfg, const std::vector<TensorSpec>& specs,
        std::vector<Tensor<float>> m, std::vector<Tensor<float>> v);

  // Scales `grads` in place so the global L2 norm is at most
  // cfg.grad_clip; returns the pre-clip norm.
  double clip_gradients(std::vector<std::vector<float>>& grads) const;

  // One decoupled update; `step` is 1-based for bias correction. With
  // lr == 0 parameters are untouched regardless of decay.
  void update(std::vector<Tensor<float>>& params,
              const std::vector<std::vector<float>>& grads, double lr, int64_t step);

  const std::vector<Tensor<float>>& m() const { return m_; }
  const std::vector<Tensor<float>>& v() const { return v_; }
  const OptimConfig& config() const { return cfg_; }

 private:
  OptimConfig cfg_;
  std::vector<bool> apply_decay_;
  std::vector<Tensor<float>> m_, v_;
};

}  // namespace refbase
