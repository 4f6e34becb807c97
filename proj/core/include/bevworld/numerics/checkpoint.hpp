#pragma once

#include <map>
#include <string>

#include "bevworld/numerics/params.hpp"

namespace bevworld::num {

// Checkpoint archive layout (all little-endian):
//   magic "BWCK" | version u32 | count u32
//   per entry: name_len u16 | name bytes | dtype u8 | rank u8 |
//              dims u32 x rank | raw values
// dtype 0 = float32, 1 = float64.

inline constexpr uint32_t kCheckpointVersion = 1;
enum class CheckpointDtype : uint8_t { F32 = 0, F64 = 1 };

/// Writes all parameters of the set, in registration order.
void save_checkpoint(const ParamSet& params, const std::string& path,
                     CheckpointDtype dtype = CheckpointDtype::F64);

/// Loads values into an already-constructed ParamSet. Every archive entry
/// must match an existing parameter name and shape; every parameter must be
/// covered. Throws on any mismatch.
void load_checkpoint(ParamSet& params, const std::string& path);

/// Reads an archive into a name -> tensor map (inspection/tools).
std::map<std::string, Tensor> read_checkpoint(const std::string& path);

}  // namespace bevworld::num
