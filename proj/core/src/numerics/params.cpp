#include "bevworld/numerics/params.hpp"

#include <stdexcept>

namespace bevworld::num {

Var ParamSet::insert(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("parameter name not unique: " + name);
  Var v = leaf(std::move(t), true);
  index_[name] = params_.size();
  params_.push_back(Parameter{name, v});
  return v;
}

Var ParamSet::create(const std::string& name, const Shape& shape) {
  return insert(name, Tensor::zeros(shape));
}

Var ParamSet::create_normal(const std::string& name, const Shape& shape, Rng& rng, double stddev) {
  Tensor t = Tensor::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
  return insert(name, std::move(t));
}

Var ParamSet::create_uniform(const std::string& name, const Shape& shape, Rng& rng, double lo,
                             double hi) {
  Tensor t = Tensor::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return insert(name, std::move(t));
}

Var ParamSet::create_full(const std::string& name, const Shape& shape, double value) {
  return insert(name, Tensor::full(shape, value));
}

Var ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no such parameter: " + name);
  return params_[it->second].var;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) {
    p.var->ensure_grad();
    p.var->grad.fill(0.0);
    p.var->backward_ran = false;
  }
}

void ParamSet::set_trainable(bool trainable) {
  for (auto& p : params_) p.var->requires_grad = trainable;
}

double ParamSet::grad_norm_sq() const {
  double s = 0.0;
  for (const auto& p : params_) {
    if (!p.var->has_grad()) continue;
    for (int64_t i = 0; i < p.var->grad.numel(); ++i) s += p.var->grad[i] * p.var->grad[i];
  }
  return s;
}

int64_t ParamSet::numel() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.var->value.numel();
  return n;
}

}  // namespace bevworld::num
