#pragma once

#include <string>
#include <vector>

#include "bevworld/run/config.hpp"
#include "bevworld/sim/io.hpp"

namespace bevworld::run {

struct Dataset {
  std::vector<sim::Episode> train;
  std::vector<sim::Episode> heldout;
};

/// Generates episodes for seeds [seed_a, seed_b], one file each, plus a
/// plain-text manifest (one "path seed" line per episode). Returns the
/// manifest path.
std::string generate_dataset(const sim::WorldConfig& wcfg, uint64_t seed_a, uint64_t seed_b,
                             const std::string& out_dir);

/// Loads the manifest named by the config and splits at train_count.
Dataset load_dataset(const RunConfig& cfg);

std::vector<std::pair<std::string, uint64_t>> read_manifest(const std::string& path);

}  // namespace bevworld::run
