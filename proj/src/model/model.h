#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/rng.h"
#include "core/tape.h"
#include "core/tensor.h"
#include "model/config.h"

namespace refbase {

// Per-head RMS normalization with a learned per-dimension scale (shared
// across heads), applied before RoPE and attention scores.
template <typename T>
typename Tape<T>::Id qk_normalize(Tape<T>& tape, typename Tape<T>::Id heads,
                                  typename Tape<T>::Id scale, T eps) {
  return tape.mul(tape.rms_normalize(heads, -1, eps), scale);
}

// Rotate-half rotary embedding on (..., S, head_dim) given full-width
// cos/sin tables of shape (S, head_dim).
template <typename T>
typename Tape<T>::Id apply_rope(Tape<T>& tape, typename Tape<T>::Id x,
                                typename Tape<T>::Id cos_tab, typename Tape<T>::Id sin_tab) {
  const int64_t hd = tape.value(x).shape().back();
  auto lo = tape.slice(x, -1, 0, hd / 2);
  auto hi = tape.slice(x, -1, hd / 2, hd);
  auto rotated = tape.concat({tape.scale(hi, T(-1)), lo}, -1);
  return tape.add(tape.mul(x, cos_tab), tape.mul(rotated, sin_tab));
}

// Decoder-only transformer: pre-RMS-norm blocks, biased linear layers,
// per-head QK normalization, SwiGLU FFN, rotary positions, tied output head.
template <typename T>
class Model {
 public:
  using Id = typename Tape<T>::Id;

  static Model build(const ModelConfig& cfg, uint64_t seed) {
    validate(cfg);
    if (cfg.head_dim() % 2 != 0)
      throw ConfigError("config: head_dim (" + std::to_string(cfg.head_dim()) +
                        ") must be even for rotary embeddings");
    Model m;
    m.cfg_ = cfg;
    m.specs_ = tensor_specs(cfg);
    const T base_std = T(0.02);
    // residual-output projections are scaled down to keep the residual
    // stream variance flat across depth
    const T resid_std = static_cast<T>(0.02 / std::sqrt(2.0 * cfg.layers));
    for (size_t i = 0; i < m.specs_.size(); ++i) {
      const TensorSpec& spec = m.specs_[i];
      Tensor<T> t(spec.shape);
      m.index_[spec.name] = i;
      if (ends_with(spec.name, ".bias")) {
        // zero-initialized
      } else if (ends_with(spec.name, ".scale")) {
        for (int64_t j = 0; j < t.size(); ++j) t.mutable_data()[j] = T(1);
      } else {
        Rng rng = Rng::from_stream(seed, i);
        const bool resid = spec.name.find("attn.out.weight") != std::string::npos ||
                           spec.name.find("ffn.down.weight") != std::string::npos;
        const T std_dev = resid ? resid_std : base_std;
        for (int64_t j = 0; j < t.size(); ++j)
          t.mutable_data()[j] = static_cast<T>(rng.normal()) * std_dev;
      }
      m.params_.push_back(std::move(t));
    }
    m.build_rope_tables();
    return m;
  }

  // Reconstructs a model around externally loaded tensors (checkpoint path).
  static Model from_tensors(const ModelConfig& cfg, std::vector<Tensor<T>> params) {
    validate(cfg);
    Model m;
    m.cfg_ = cfg;
    m.specs_ = tensor_specs(cfg);
    if (params.size() != m.specs_.size())
      throw ConfigError("model: expected " + std::to_string(m.specs_.size()) +
                        " tensors, got " + std::to_string(params.size()));
    for (size_t i = 0; i < m.specs_.size(); ++i) {
      if (params[i].shape() != m.specs_[i].shape)
        throw ConfigError("model: tensor '" + m.specs_[i].name + "' has shape " +
                          shape_str(params[i].shape()) + ", expected " +
                          shape_str(m.specs_[i].shape));
      m.index_[m.specs_[i].name] = i;
    }
    m.params_ = std::move(params);
    m.build_rope_tables();
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<TensorSpec>& specs() const { return specs_; }
  const std::vector<Tensor<T>>& params() const { return params_; }
  std::vector<Tensor<T>>& mutable_params() { return params_; }

  const Tensor<T>& param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("model: no tensor named '" + name + "'");
    return params_[it->second];
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  // The tied output head is the embedding storage itself.
  const void* head_storage() const {
    return cfg_.tied_embeddings ? param("embedding").storage_id()
                                : param("head").storage_id();
  }

  // Parameter tensors registered on a tape; ids align with specs().
  struct Bound {
    std::vector<Id> ids;
    Id id(const Model& m, const std::string& name) const {
      auto it = m.index_.find(name);
      if (it == m.index_.end()) throw ConfigError("model: no tensor named '" + name + "'");
      return ids[it->second];
    }
  };

  Bound bind(Tape<T>& tape) const {
    Bound b;
    b.ids.reserve(params_.size());
    for (const auto& p : params_) b.ids.push_back(tape.input(p));
    return b;
  }

  // Runs the decoder on a (batch, seq) id tensor and returns logits
  // (batch, seq, vocab). `rng` drives dropout and is required only when
  // training with dropout_p > 0.
  Id forward(Tape<T>& tape, const Bound& bound, const TokenTensor& tokens,
             bool train = false, Rng* rng = nullptr) const {
    if (tokens.shape.size() != 2)
      throw ShapeError("forward: tokens must be (batch, seq), got " + shape_str(tokens.shape));
    const int64_t seq = tokens.shape[1];
    if (seq > cfg_.context_length)
      throw DataError("forward: sequence length " + std::to_string(seq) +
                      " exceeds context_length " + std::to_string(cfg_.context_length));
    const double p = train ? cfg_.dropout_p : 0.0;
    if (p > 0 && rng == nullptr)
      throw ConfigError("forward: dropout requires an rng in training mode");
    const int64_t bsz = tokens.shape[0];
    const int64_t h = cfg_.hidden, nh = cfg_.heads, hd = cfg_.head_dim();
    const T eps = static_cast<T>(cfg_.norm_eps);
    const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));

    auto cos_tab = tape.constant(rope_slice(rope_cos_, seq));
    auto sin_tab = tape.constant(rope_slice(rope_sin_, seq));

    Id emb = bound.id(*this, "embedding");
    Id x = tape.embedding_lookup(emb, tokens);
    for (int l = 0; l < cfg_.layers; ++l) {
      const std::string pre = "layer." + std::to_string(l) + ".";
      // attention
      Id a = tape.mul(tape.rms_normalize(x, -1, eps), bound.id(*this, pre + "attn_norm.scale"));
      Id qkv = tape.matmul(a, bound.id(*this, pre + "attn.qkv.weight"));
      if (cfg_.biases_enabled) qkv = tape.add(qkv, bound.id(*this, pre + "attn.qkv.bias"));
      Id q = split_heads(tape, tape.slice(qkv, -1, 0, h), bsz, seq, nh, hd);
      Id k = split_heads(tape, tape.slice(qkv, -1, h, 2 * h), bsz, seq, nh, hd);
      Id v = split_heads(tape, tape.slice(qkv, -1, 2 * h, 3 * h), bsz, seq, nh, hd);
      if (cfg_.qk_norm_enabled) {
        q = qk_normalize(tape, q, bound.id(*this, pre + "attn.q_norm.scale"), eps);
        k = qk_normalize(tape, k, bound.id(*this, pre + "attn.k_norm.scale"), eps);
      }
      q = apply_rope(tape, q, cos_tab, sin_tab);
      k = apply_rope(tape, k, cos_tab, sin_tab);
      q = tape.scale(q, att_scale);
      Id scores = tape.matmul(q, tape.transpose(k, -1, -2));
      Id probs = tape.softmax(tape.causal_mask(scores), -1);
      if (p > 0) probs = tape.dropout(probs, p, *rng);
      Id ctx = tape.reshape(tape.transpose(tape.matmul(probs, v), 1, 2), {bsz, seq, h});
      Id attn_out = tape.matmul(ctx, bound.id(*this, pre + "attn.out.weight"));
      if (cfg_.biases_enabled)
        attn_out = tape.add(attn_out, bound.id(*this, pre + "attn.out.bias"));
      if (p > 0) attn_out = tape.dropout(attn_out, p, *rng);
      x = tape.add(attn_out, x);
      // swiglu ffn
      Id f = tape.mul(tape.rms_normalize(x, -1, eps), bound.id(*this, pre + "ffn_norm.scale"));
      Id gate = tape.matmul(f, bound.id(*this, pre + "ffn.gate.weight"));
      if (cfg_.biases_enabled) gate = tape.add(gate, bound.id(*this, pre + "ffn.gate.bias"));
      Id up = tape.matmul(f, bound.id(*this, pre + "ffn.up.weight"));
      if (cfg_.biases_enabled) up = tape.add(up, bound.id(*this, pre + "ffn.up.bias"));
      Id act = tape.mul(tape.silu(gate), up);
      Id down = tape.matmul(act, bound.id(*this, pre + "ffn.down.weight"));
      if (cfg_.biases_enabled) down = tape.add(down, bound.id(*this, pre + "ffn.down.bias"));
      if (p > 0) down = tape.dropout(down, p, *rng);
      x = tape.add(down, x);
    }
    x = tape.mul(tape.rms_normalize(x, -1, eps), bound.id(*this, "final_norm.scale"));
    Id head = cfg_.tied_embeddings ? emb : bound.id(*this, "head");
    return tape.matmul(x, tape.transpose(head, 0, 1));
  }

  // Mean next-token cross-entropy in nats; targets are inputs shifted by one.
  Id loss(Tape<T>& tape, Id logits, const TokenTensor& targets) const {
    return tape.cross_entropy(logits, targets);
  }

 private:
  static bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  }

  static Id split_heads(Tape<T>& tape, Id x, int64_t bsz, int64_t seq, int64_t nh, int64_t hd) {
    return tape.transpose(tape.reshape(x, {bsz, seq, nh, hd}), 1, 2);
  }

  void build_rope_tables() {
    const int64_t hd = cfg_.head_dim();
    const int64_t half = hd / 2;
    const int64_t ctx = cfg_.context_length;
    rope_cos_ = Tensor<T>({ctx, hd});
    rope_sin_ = Tensor<T>({ctx, hd});
    for (int64_t s = 0; s < ctx; ++s) {
      for (int64_t i = 0; i < half; ++i) {
        const double freq = std::pow(cfg_.rope_base, -2.0 * static_cast<double>(i) /
                                                         static_cast<double>(hd));
        const double angle = static_cast<double>(s) * freq;
        const T c = static_cast<T>(std::cos(angle));
        const T si = static_cast<T>(std::sin(angle));
        rope_cos_.mutable_data()[s * hd + i] = c;
        rope_cos_.mutable_data()[s * hd + half + i] = c;
        rope_sin_.mutable_data()[s * hd + i] = si;
        rope_sin_.mutable_data()[s * hd + half + i] = si;
      }
    }
  }

  static Tensor<T> rope_slice(const Tensor<T>& table, int64_t seq) {
    const int64_t hd = table.shape()[1];
    std::vector<T> rows(table.vec().begin(), table.vec().begin() + seq * hd);
    return Tensor<T>({seq, hd}, std::move(rows));
  }

  ModelConfig cfg_;
  std::vector<TensorSpec> specs_;
  std::vector<Tensor<T>> params_;
  std::unordered_map<std::string, size_t> index_;
  Tensor<T> rope_cos_, rope_sin_;
};

}  // namespace refbase
