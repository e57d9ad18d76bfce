#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/tensor.h"

namespace refbase {

// Decoder architecture hyperparameters. Defaults follow the reference
// training recipe; the four named presets give the released scales.
struct ModelConfig {
  int layers = 0;
  int hidden = 0;
  int heads = 0;
  int ffn_hidden = 0;
  int vocab = 50304;
  int context_length = 4096;
  double rope_base = 10000.0;
  double dropout_p = 0.1;
  double norm_eps = 1e-5;  // not specified by the recipe; surfaced here
  bool qk_norm_enabled = true;
  bool biases_enabled = true;
  bool tied_embeddings = true;

  int head_dim() const { return hidden / heads; }
};

// Throws ConfigError naming the violated constraint.
void validate(const ModelConfig& cfg);

// The four reference scales plus a tiny smoke config ("toy").
ModelConfig preset(const std::string& name);
std::vector<std::string> preset_names();

struct ParamCounts {
  int64_t non_embedding = 0;
  int64_t embedding = 0;
  int64_t total() const { return non_embedding + embedding; }
};

// Closed-form parameter count including biases, QK-norm scales and norm
// scales. A tied output head is counted once, under embedding; an untied
// head adds a second vocab x hidden matrix there.
ParamCounts count_params(const ModelConfig& cfg);

// Name and shape of every parameter tensor, in the canonical order used by
// initialization, the optimizer, and the checkpoint format.
struct TensorSpec {
  std::string name;
  Shape shape;
};
std::vector<TensorSpec> tensor_specs(const ModelConfig& cfg);

// Rotary-embedding base for the trained context lengths. Unknown lengths
// require an explicit override. `alt` selects the documented alternative
// base for 4096.
double rope_base_for_context(int context_length, std::optional<double> override_base = {},
                             bool alt = false);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& json_text);

}  // namespace refbase
