#pragma once

#include <string>

#include "bevworld/model/encoder.hpp"
#include "bevworld/model/osm.hpp"
#include "bevworld/sim/world.hpp"

namespace bevworld::run {

/// Everything a train/eval command needs, parseable from the flat
/// `key = value` config format with [section] headers. Unknown keys are
/// rejected; the canonical echo re-parses to the same config.
struct RunConfig {
  // [data]
  std::string manifest;     // dataset manifest path
  int train_count = 24;     // manifest entries used for training; rest held out
  std::string encoder_checkpoint;
  std::string decoder_checkpoint;

  // [world]
  sim::WorldConfig world;

  // [model]
  model::ModelConfig model;

  // [rays]
  model::RayBudget rays;
  // Future-horizon renders reuse the stage-1 budgets unless overridden.
  model::RayBudget future_rays{512, 768, 128};

  // [train]
  int steps = 500;
  double lr = 3e-3;
  double weight_decay = 1e-4;
  uint64_t seed = 1;
  int log_every = 25;
  bool joint = false;          // decoder stage: co-train a fresh encoder
  bool dynamic_rays = true;    // decoder stage: keep the dynamic quota
  int fsa_k = 2;               // downstream: future frames (0 disables FSA)
  std::string task = "occupancy";  // downstream: occupancy | planner

  // [loss]
  double w_latent = 1.0;
  double w_scene = 0.5;
  bool sup_depth = true;
  bool sup_semantic = true;
  bool sup_color = true;

  // [eval]
  int eval_horizons = 6;
  double eval_range = 20.0;
};

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");
RunConfig load_config(const std::string& path);

/// Canonical text form; parse(echo(c)) == c field-for-field.
std::string echo_config(const RunConfig& c);

/// FNV-1a hash of the canonical echo, hex string.
std::string config_hash(const RunConfig& c);

}  // namespace bevworld::run
