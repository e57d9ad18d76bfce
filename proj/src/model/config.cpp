#include "model/config.h"

#include <json.hpp>

#include "core/error.h"

namespace refbase {

void validate(const ModelConfig& cfg) {
  if (cfg.layers <= 0) throw ConfigError("config: layers must be positive");
  if (cfg.hidden <= 0) throw ConfigError("config: hidden must be positive");
  if (cfg.heads <= 0) throw ConfigError("config: heads must be positive");
  if (cfg.hidden % cfg.heads != 0)
    throw ConfigError("config: hidden (" + std::to_string(cfg.hidden) +
                      ") not divisible by heads (" + std::to_string(cfg.heads) + ")");
  if (cfg.ffn_hidden <= 0) throw ConfigError("config: ffn_hidden must be positive");
  if (cfg.vocab <= 0) throw ConfigError("config: vocab must be positive");
  if (cfg.context_length <= 0) throw ConfigError("config: context_length must be positive");
  if (cfg.rope_base <= 0) throw ConfigError("config: rope_base must be positive");
  if (cfg.dropout_p < 0 || cfg.dropout_p >= 1)
    throw ConfigError("config: dropout_p must be in [0,1)");
  if (cfg.norm_eps <= 0) throw ConfigError("config: norm_eps must be positive");
}

ModelConfig preset(const std::string& name) {
  ModelConfig c;
  if (name == "0.13B") {
    c.layers = 22; c.hidden = 512; c.heads = 8; c.ffn_hidden = 2256;
  } else if (name == "0.4B") {
    c.layers = 22; c.hidden = 1024; c.heads = 16; c.ffn_hidden = 3840;
  } else if (name == "1.3B") {
    c.layers = 24; c.hidden = 2048; c.heads = 32; c.ffn_hidden = 5440;
  } else if (name == "1.7B") {
    c.layers = 24; c.hidden = 2048; c.heads = 32; c.ffn_hidden = 8192;
  } else if (name == "toy") {
    c.layers = 2; c.hidden = 32; c.heads = 4; c.ffn_hidden = 96;
    c.vocab = 256; c.context_length = 64;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  validate(c);
  return c;
}

std::vector<std::string> preset_names() { return {"0.13B", "0.4B", "1.3B", "1.7B", "toy"}; }

ParamCounts count_params(const ModelConfig& cfg) {
  validate(cfg);
  const int64_t h = cfg.hidden, f = cfg.ffn_hidden, v = cfg.vocab;
  const int64_t hd = cfg.head_dim();
  int64_t per_layer = 0;
  per_layer += h * 3 * h;           // qkv projection
  per_layer += h * h;               // attention output projection
  per_layer += 2 * h * f + f * h;   // swiglu gate/up/down
  if (cfg.biases_enabled) per_layer += 3 * h + h + 2 * f + h;
  if (cfg.qk_norm_enabled) per_layer += 2 * hd;
  per_layer += 2 * h;               // pre-attention / pre-ffn norm scales
  ParamCounts counts;
  counts.non_embedding = cfg.layers * per_layer + h;  // + final norm scale
  counts.embedding = v * h;
  if (!cfg.tied_embeddings) counts.embedding += v * h;  // separate output head
  return counts;
}

std::vector<TensorSpec> tensor_specs(const ModelConfig& cfg) {
  validate(cfg);
  const int64_t h = cfg.hidden, f = cfg.ffn_hidden, v = cfg.vocab;
  const int64_t hd = cfg.head_dim();
  std::vector<TensorSpec> specs;
  specs.push_back({"embedding", {v, h}});
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "layer." + std::to_string(l) + ".";
    specs.push_back({p + "attn_norm.scale", {h}});
    specs.push_back({p + "attn.qkv.weight", {h, 3 * h}});
    if (cfg.biases_enabled) specs.push_back({p + "attn.qkv.bias", {3 * h}});
    if (cfg.qk_norm_enabled) {
      specs.push_back({p + "attn.q_norm.scale", {hd}});
      specs.push_back({p + "attn.k_norm.scale", {hd}});
    }
    specs.push_back({p + "attn.out.weight", {h, h}});
    if (cfg.biases_enabled) specs.push_back({p + "attn.out.bias", {h}});
    specs.push_back({p + "ffn_norm.scale", {h}});
    specs.push_back({p + "ffn.gate.weight", {h, f}});
    if (cfg.biases_enabled) specs.push_back({p + "ffn.gate.bias", {f}});
    specs.push_back({p + "ffn.up.weight", {h, f}});
    if (cfg.biases_enabled) specs.push_back({p + "ffn.up.bias", {f}});
    specs.push_back({p + "ffn.down.weight", {f, h}});
    if (cfg.biases_enabled) specs.push_back({p + "ffn.down.bias", {h}});
  }
  specs.push_back({"final_norm.scale", {h}});
  if (!cfg.tied_embeddings) specs.push_back({"head", {v, h}});
  return specs;
}

double rope_base_for_context(int context_length, std::optional<double> override_base,
                             bool alt) {
  if (override_base) {
    if (*override_base <= 0) throw ConfigError("rope base override must be positive");
    return *override_base;
  }
  switch (context_length) {
    case 2048: return 10'000.0;
    case 4096: return alt ? 100'000.0 : 10'000.0;
    case 8192: return 500'000.0;
    case 16384: return 1'000'000.0;
    default:
      throw ConfigError("no rope base known for context length " +
                        std::to_string(context_length) + "; pass an explicit override");
  }
}

std::string config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["layers"] = cfg.layers;
  j["hidden"] = cfg.hidden;
  j["heads"] = cfg.heads;
  j["ffn_hidden"] = cfg.ffn_hidden;
  j["vocab"] = cfg.vocab;
  j["context_length"] = cfg.context_length;
  j["rope_base"] = cfg.rope_base;
  j["dropout_p"] = cfg.dropout_p;
  j["norm_eps"] = cfg.norm_eps;
  j["qk_norm_enabled"] = cfg.qk_norm_enabled;
  j["biases_enabled"] = cfg.biases_enabled;
  j["tied_embeddings"] = cfg.tied_embeddings;
  return j.dump();
}

ModelConfig config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config json: ") + e.what());
  }
  ModelConfig cfg;
  try {
    if (j.contains("preset")) cfg = preset(j.at("preset").get<std::string>());
    auto opt = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    opt("layers", cfg.layers);
    opt("hidden", cfg.hidden);
    opt("heads", cfg.heads);
    opt("ffn_hidden", cfg.ffn_hidden);
    opt("vocab", cfg.vocab);
    opt("context_length", cfg.context_length);
    opt("rope_base", cfg.rope_base);
    opt("dropout_p", cfg.dropout_p);
    opt("norm_eps", cfg.norm_eps);
    opt("qk_norm_enabled", cfg.qk_norm_enabled);
    opt("biases_enabled", cfg.biases_enabled);
    opt("tied_embeddings", cfg.tied_embeddings);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config json: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

}  // namespace refbase
