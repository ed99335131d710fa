#pragma once

#include <cstdint>
#include <string>

#include "msim/trainer.hpp"
#include "msim/world.hpp"

namespace msim {

struct EvalSettings {
  uint64_t seed = 0;
  std::string drop;  // comma-separated modalities absent at test time
};

struct PolicySettings {
  std::string mode = "baseline";  // "baseline" or "with_sim"
  int64_t steps = 2000;
  int batch = 16;
  double lr = 1e-4;
  int hidden = 128;
  int sample_steps = 8;  // reduced sampler steps inside the simulator loss
  double sim_weight = 1.0;
  uint64_t seed = 0;
};

// Umbrella configuration for every subcommand. File format is JSON with
// one object per section; any key outside the schema is an error.
struct RunConfig {
  WorldConfig world;
  TrainConfig train;  // dataset_path/out_dir/seed are filled from flags
  EvalSettings eval;
  PolicySettings policy;
};

// Missing path ("") yields defaults. Throws on unknown keys, wrong types,
// or unreadable files, naming the offending key.
RunConfig load_run_config(const std::string& path);

// Applies one dotted-key override, e.g. "train.steps=500"; last writer wins.
void apply_override(RunConfig& rc, const std::string& assignment);

// Canonical echo of every effective setting, suitable for config.resolved.
std::string resolved_config(const RunConfig& rc);

}  // namespace msim
