#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "bevworld/numerics/graph.hpp"
#include "bevworld/numerics/rng.hpp"

namespace bevworld::num {

struct Parameter {
  std::string name;
  Var var;  // requires_grad reflects trainable/frozen state
};

/// Named parameter registry. Names are '.'-separated paths and must be
/// unique; checkpoints round-trip by name.
class ParamSet {
 public:
  /// Registers a zero tensor of the given shape.
  Var create(const std::string& name, const Shape& shape);
  /// Registers a tensor filled by init(rng) per element.
  Var create_normal(const std::string& name, const Shape& shape, Rng& rng, double stddev);
  Var create_uniform(const std::string& name, const Shape& shape, Rng& rng, double lo, double hi);
  Var create_full(const std::string& name, const Shape& shape, double value);

  Var get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  size_t size() const { return params_.size(); }

  void zero_grad();
  void set_trainable(bool trainable);
  /// Sum of squared gradient entries over all parameters.
  double grad_norm_sq() const;
  int64_t numel() const;

 private:
  Var insert(const std::string& name, Tensor t);
  std::vector<Parameter> params_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace bevworld::num
