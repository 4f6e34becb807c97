#pragma once

#include <string>

#include "bevworld/sim/world.hpp"

namespace bevworld::sim {

// Episode archive layout (little-endian):
//   magic "BWEP" | version u32 | seed u64 | config block | rig block |
//   actor count u32 | actors | frame count u32 | frames
// Doubles are stored raw, so save/load round-trips bit-exactly.

inline constexpr uint32_t kEpisodeVersion = 1;

void save_episode(const Episode& ep, const std::string& path);
Episode load_episode(const std::string& path);

}  // namespace bevworld::sim
