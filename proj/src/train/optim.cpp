#include "train/optim.h"

#include <cmath>
#include <json.hpp>

#include "core/error.h"

namespace refbase {

std::string OptimConfig::to_json() const {
  nlohmann::json j;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["eps"] = eps;
  j["weight_decay"] = weight_decay;
  j["grad_clip"] = grad_clip;
  j["decay_scales_and_biases"] = decay_scales_and_biases;
  return j.dump();
}

OptimConfig OptimConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("optim json: ") + e.what());
  }
  OptimConfig c;
  auto opt = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
  };
  opt("beta1", c.beta1);
  opt("beta2", c.beta2);
  opt("eps", c.eps);
  opt("weight_decay", c.weight_decay);
  opt("grad_clip", c.grad_clip);
  opt("decay_scales_and_biases", c.decay_scales_and_biases);
  return c;
}

AdamW::AdamW(const OptimConfig& cfg, const std::vector<TensorSpec>& specs) : cfg_(cfg) {
  for (const auto& spec : specs) {
    m_.emplace_back(spec.shape);
    v_.emplace_back(spec.shape);
    apply_decay_.push_back(cfg.decay_scales_and_biases || spec.shape.size() > 1);
  }
}

AdamW::AdamW(const OptimConfig& cfg, const std::vector<TensorSpec>& specs,
             std::vector<Tensor<float>> m, std::vector<Tensor<float>> v)
    : cfg_(cfg), m_(std::move(m)), v_(std::move(v)) {
  if (m_.size() != specs.size() || v_.size() != specs.size())
    throw ConfigError("optimizer: moment count does not match parameter count");
  for (size_t i = 0; i < specs.size(); ++i) {
    if (m_[i].shape() != specs[i].shape || v_[i].shape() != specs[i].shape)
      throw ConfigError("optimizer: moment shape mismatch for '" + specs[i].name + "'");
    apply_decay_.push_back(cfg.decay_scales_and_biases || specs[i].shape.size() > 1);
  }
}

double AdamW::clip_gradients(std::vector<std::vector<float>>& grads) const {
  double sq = 0.0;
  for (const auto& g : grads)
    for (float v : g) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (cfg_.grad_clip > 0 && norm > cfg_.grad_clip) {
    const float s = static_cast<float>(cfg_.grad_clip / norm);
    for (auto& g : grads)
      for (float& v : g) v *= s;
  }
  return norm;
}

void AdamW::update(std::vector<Tensor<float>>& params,
                   const std::vector<std::vector<float>>& grads, double lr, int64_t step) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw ConfigError("optimizer: parameter/gradient count mismatch");
  if (step < 1) throw ConfigError("optimizer: step must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    float* p = params[pi].mutable_data();
    float* m = m_[pi].mutable_data();
    float* v = v_[pi].mutable_data();
    const std::vector<float>& g = grads[pi];
    const float decay = apply_decay_[pi] ? static_cast<float>(lr * cfg_.weight_decay) : 0.0f;
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = static_cast<float>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i]);
      v[i] = static_cast<float>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) *
                                                        static_cast<double>(g[i]) * g[i]);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      const float update = static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      p[i] -= update + decay * p[i];
    }
  }
}

}  // namespace refbase
