#include "bevworld/numerics/checkpoint.hpp"

#include <stdexcept>

#include "bevworld/numerics/binio.hpp"

namespace bevworld::num {

namespace {
constexpr char kMagic[4] = {'B', 'W', 'C', 'K'};
}

void save_checkpoint(const ParamSet& params, const std::string& path, CheckpointDtype dtype) {
  BinWriter w(path);
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<uint32_t>(params.size()));
  for (const auto& p : params.all()) {
    if (p.name.size() > 0xffff) throw std::invalid_argument("parameter name too long: " + p.name);
    w.u16(static_cast<uint16_t>(p.name.size()));
    w.str(p.name);
    w.u8(static_cast<uint8_t>(dtype));
    const auto& t = p.var->value;
    w.u8(static_cast<uint8_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) w.u32(static_cast<uint32_t>(t.dim(i)));
    for (int64_t i = 0; i < t.numel(); ++i) {
      if (dtype == CheckpointDtype::F64) {
        w.f64(t[i]);
      } else {
        w.f32(static_cast<float>(t[i]));
      }
    }
  }
  w.close();
}

std::map<std::string, Tensor> read_checkpoint(const std::string& path) {
  BinReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != std::string(kMagic, 4)) {
    throw std::runtime_error("not a checkpoint archive (bad magic): " + path);
  }
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + ": " +
                             path);
  }
  const uint32_t count = r.u32();
  std::map<std::string, Tensor> out;
  for (uint32_t e = 0; e < count; ++e) {
    const uint16_t name_len = r.u16();
    std::string name = r.str(name_len);
    const uint8_t dtype = r.u8();
    if (dtype > 1) throw std::runtime_error("unknown dtype in checkpoint entry " + name);
    const uint8_t rank = r.u8();
    Shape shape(rank);
    for (uint8_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(r.u32());
    Tensor t = Tensor::zeros(shape);
    for (int64_t i = 0; i < t.numel(); ++i) {
      t[i] = dtype == 1 ? r.f64() : static_cast<double>(r.f32());
    }
    if (!out.emplace(std::move(name), std::move(t)).second) {
      throw std::runtime_error("duplicate parameter name in checkpoint: " + path);
    }
  }
  return out;
}

void load_checkpoint(ParamSet& params, const std::string& path) {
  auto entries = read_checkpoint(path);
  if (entries.size() != params.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(entries.size()) +
                             " entries but model has " + std::to_string(params.size()) +
                             " parameters: " + path);
  }
  for (auto& p : params.all()) {
    auto it = entries.find(p.name);
    if (it == entries.end()) throw std::runtime_error("checkpoint missing parameter " + p.name);
    if (!(it->second.shape() == p.var->value.shape())) {
      throw std::runtime_error("checkpoint shape mismatch for " + p.name + ": " +
                               shape_str(it->second.shape()) + " vs " +
                               shape_str(p.var->value.shape()));
    }
    p.var->value = std::move(it->second);
  }
}

}  // namespace bevworld::num
