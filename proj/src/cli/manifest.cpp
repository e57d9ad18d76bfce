#include "cli/manifest.h"

#include <cstdlib>
#include <filesystem>
#include <json.hpp>

#include "core/binio.h"
#include "core/error.h"

namespace refbase {

void RunManifest::check() const {
  if (run_id.empty()) throw ConfigError("manifest: run_id must not be empty");
  validate(model);
  validate(schedule);
  if (corpus_manifest.empty()) throw ConfigError("manifest: corpus_manifest path missing");
  if (global_batch_tokens <= 0 || global_batch_tokens % model.context_length != 0)
    throw ConfigError("manifest: global_batch_tokens (" + std::to_string(global_batch_tokens) +
                      ") must be a positive multiple of context_length (" +
                      std::to_string(model.context_length) + ")");
  if (holdout_fraction < 0 || holdout_fraction >= 1)
    throw ConfigError("manifest: holdout_fraction must be in [0,1)");
  if (micro_batch_rows < 0) throw ConfigError("manifest: micro_batch_rows must be >= 0");
  if (micro_batch_rows > 0 &&
      (global_batch_tokens / model.context_length) % micro_batch_rows != 0)
    throw ConfigError("manifest: batch rows not divisible by micro_batch_rows");
}

void RunManifest::save(const std::string& path) const {
  check();
  nlohmann::json j;
  j["run_id"] = run_id;
  j["model"] = nlohmann::json::parse(config_to_json(model));
  j["schedule"] = nlohmann::json::parse(schedule.to_json());
  j["optim"] = nlohmann::json::parse(optim.to_json());
  j["corpus_manifest"] = corpus_manifest;
  j["holdout_fraction"] = holdout_fraction;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["global_batch_tokens"] = global_batch_tokens;
  j["micro_batch_rows"] = micro_batch_rows;
  j["checkpoint_every"] = checkpoint_every;
  write_file_atomic(path, j.dump(2) + "\n");
}

RunManifest RunManifest::load(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const IoError& e) {
    throw DataError(std::string("manifest: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + path + ": " + e.what());
  }
  RunManifest m;
  try {
    m.run_id = j.at("run_id").get<std::string>();
    m.model = config_from_json(j.at("model").dump());
    m.schedule = ScheduleSpec::from_json(j.at("schedule").dump());
    if (j.contains("optim")) m.optim = OptimConfig::from_json(j.at("optim").dump());
    m.corpus_manifest = j.at("corpus_manifest").get<std::string>();
    m.holdout_fraction = j.value("holdout_fraction", 0.0);
    m.seed = j.at("seed").get<uint64_t>();
    m.out_dir = j.value("out_dir", "runs");
    m.global_batch_tokens = j.at("global_batch_tokens").get<int64_t>();
    m.micro_batch_rows = j.value("micro_batch_rows", static_cast<int64_t>(0));
    m.checkpoint_every = j.value("checkpoint_every", static_cast<int64_t>(0));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + path + ": " + e.what());
  }
  // resolve paths against the manifest directory; env var overrides out root
  const auto dir = std::filesystem::path(path).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (dir / p).string();
  };
  resolve(m.corpus_manifest);
  if (const char* root = std::getenv("REFBASE_OUT_ROOT")) {
    m.out_dir = root;  // output root; the run writes to out_dir/run_id
  } else {
    resolve(m.out_dir);
  }
  m.check();
  return m;
}

}  // namespace refbase
