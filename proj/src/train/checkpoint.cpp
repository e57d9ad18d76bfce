#include "train/checkpoint.h"

#include <cstring>
#include <json.hpp>

#include "core/binio.h"
#include "core/error.h"

namespace refbase {

namespace {

constexpr char kMagic[9] = "RBCKPT01";
constexpr uint32_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 0;

void write_tensor(ByteWriter& w, const std::string& name, const Tensor<float>& t) {
  w.str(name);
  w.u8(kDtypeF32);
  w.u32(static_cast<uint32_t>(t.shape().size()));
  for (int64_t d : t.shape()) w.i64(d);
  w.span(t.data(), static_cast<size_t>(t.size()));
}

std::pair<std::string, Tensor<float>> read_tensor(ByteReader& r) {
  std::string name = r.str();
  const uint8_t dtype = r.u8();
  if (dtype != kDtypeF32)
    throw IoError("checkpoint: tensor '" + name + "' has unsupported dtype " +
                  std::to_string(dtype));
  const uint32_t ndim = r.u32();
  Shape shape(ndim);
  for (auto& d : shape) d = r.i64();
  std::vector<float> data = r.span<float>(static_cast<size_t>(shape_numel(shape)));
  return {std::move(name), Tensor<float>(std::move(shape), std::move(data))};
}

}  // namespace

TrainState init_train_state(const ModelConfig& model_cfg, const ScheduleSpec& schedule,
                            const OptimConfig& optim, int64_t global_batch_tokens,
                            uint64_t seed, const std::string& run_id) {
  validate(model_cfg);
  validate(schedule);
  if (global_batch_tokens <= 0)
    throw ConfigError("train state: global_batch_tokens must be > 0");
  TrainState s;
  s.model_cfg = model_cfg;
  s.schedule = schedule;
  s.optim = optim;
  s.seed = seed;
  s.global_batch_tokens = global_batch_tokens;
  s.run_id = run_id;
  s.model = Model<float>::build(model_cfg, seed);
  for (const auto& spec : s.model.specs()) {
    s.opt_m.emplace_back(spec.shape);
    s.opt_v.emplace_back(spec.shape);
  }
  return s;
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  if (state.tokens_seen != state.iteration * state.global_batch_tokens)
    throw Error("checkpoint: tokens_seen (" + std::to_string(state.tokens_seen) +
                ") inconsistent with iteration * global_batch_tokens");
  nlohmann::json meta;
  meta["model"] = nlohmann::json::parse(config_to_json(state.model_cfg));
  meta["schedule"] = nlohmann::json::parse(state.schedule.to_json());
  meta["optim"] = nlohmann::json::parse(state.optim.to_json());
  meta["seed"] = state.seed;
  meta["iteration"] = state.iteration;
  meta["tokens_seen"] = state.tokens_seen;
  meta["global_batch_tokens"] = state.global_batch_tokens;
  meta["run_id"] = state.run_id;

  ByteWriter w;
  w.raw(kMagic, 8);
  w.u32(kVersion);
  w.str(meta.dump());
  const auto& specs = state.model.specs();
  w.u32(static_cast<uint32_t>(2 * specs.size() + 1 + specs.size()));
  for (size_t i = 0; i < specs.size(); ++i)
    write_tensor(w, "model." + specs[i].name, state.model.params()[i]);
  for (size_t i = 0; i < specs.size(); ++i)
    write_tensor(w, "opt.m." + specs[i].name, state.opt_m[i]);
  for (size_t i = 0; i < specs.size(); ++i)
    write_tensor(w, "opt.v." + specs[i].name, state.opt_v[i]);
  w.str("meta.loss_history");
  w.u8(kDtypeF32);
  w.u32(1);
  w.i64(static_cast<int64_t>(state.loss_history.size()));
  w.span(state.loss_history.data(), state.loss_history.size());
  w.write_file(path);
}

namespace {

TrainState load_checkpoint_impl(const std::string& path, const ModelConfig* expected) {
  ByteReader r = ByteReader::open_checked(path);
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw IoError(path + ": not a checkpoint (bad magic)");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": corrupt metadata: " + e.what());
  }

  TrainState s;
  try {
    s.model_cfg = config_from_json(meta.at("model").dump());
    s.schedule = ScheduleSpec::from_json(meta.at("schedule").dump());
    s.optim = OptimConfig::from_json(meta.at("optim").dump());
    s.seed = meta.at("seed").get<uint64_t>();
    s.iteration = meta.at("iteration").get<int64_t>();
    s.tokens_seen = meta.at("tokens_seen").get<int64_t>();
    s.global_batch_tokens = meta.at("global_batch_tokens").get<int64_t>();
    s.run_id = meta.at("run_id").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": corrupt metadata: " + e.what());
  }

  const uint32_t tensor_count = r.u32();
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  tensors.reserve(tensor_count);
  for (uint32_t i = 0; i + 1 < tensor_count; ++i) tensors.push_back(read_tensor(r));
  // loss history is written with its true (possibly zero) length
  {
    std::string name = r.str();
    if (name != "meta.loss_history") throw IoError(path + ": missing loss history");
    r.u8();
    r.u32();
    const int64_t n = r.i64();
    s.loss_history = r.span<float>(static_cast<size_t>(n));
  }
  if (r.remaining() != 0) throw IoError(path + ": trailing bytes");

  const ModelConfig& cfg = expected ? *expected : s.model_cfg;
  const auto specs = tensor_specs(cfg);
  auto find = [&](const std::string& name) -> Tensor<float>& {
    for (auto& [n, t] : tensors)
      if (n == name) return t;
    throw ConfigError(path + ": tensor '" + name + "' missing from checkpoint");
  };
  std::vector<Tensor<float>> params, m, v;
  for (const auto& spec : specs) {
    Tensor<float>& t = find("model." + spec.name);
    if (t.shape() != spec.shape)
      throw ConfigError(path + ": tensor 'model." + spec.name + "' has shape " +
                        shape_str(t.shape()) + ", expected " + shape_str(spec.shape));
    params.push_back(t);
    m.push_back(find("opt.m." + spec.name));
    v.push_back(find("opt.v." + spec.name));
  }
  if (expected && tensors.size() != 3 * specs.size())
    throw ConfigError(path + ": checkpoint holds " + std::to_string(tensors.size() / 3) +
                      " model tensors, expected " + std::to_string(specs.size()));
  s.model_cfg = cfg;
  s.model = Model<float>::from_tensors(cfg, std::move(params));
  s.opt_m = std::move(m);
  s.opt_v = std::move(v);
  if (s.tokens_seen != s.iteration * s.global_batch_tokens)
    throw IoError(path + ": tokens_seen inconsistent with iteration");
  return s;
}

}  // namespace

TrainState load_checkpoint(const std::string& path) {
  return load_checkpoint_impl(path, nullptr);
}

TrainState load_checkpoint(const std::string& path, const ModelConfig& expected) {
  return load_checkpoint_impl(path, &expected);
}

}  // namespace refbase
