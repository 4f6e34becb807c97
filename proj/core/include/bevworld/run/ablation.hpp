#pragma once

#include <string>
#include <vector>

#include "bevworld/run/config.hpp"

namespace bevworld::run {

inline const std::vector<std::string> kAblationNames = {
    "osm-components", "horizon", "decoupled", "direct-vs-ar", "dynamic-sampling"};

struct AblationResult {
  std::string csv_path;
  std::string svg_path;
  std::vector<std::string> variants;
};

/// Trains/evaluates the named pair (or triple) of variants under identical
/// seeds and emits CSV + SVG under out_dir. Reporting only: asserts nothing.
/// Unknown names throw, listing the valid set.
AblationResult run_ablation(const std::string& name, const RunConfig& cfg,
                            const std::string& out_dir);

}  // namespace bevworld::run
