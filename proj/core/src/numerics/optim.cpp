#include "bevworld/numerics/optim.hpp"

#include <cmath>
#include <cstdio>

namespace bevworld::num {

void AdamW::step(ParamSet& params) {
  if (state_.size() < params.size()) state_.resize(params.size());
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params.all()[pi];
    if (!p.var->requires_grad) continue;
    p.var->ensure_grad();
    const Tensor& g = p.var->grad;
    if (!g.all_finite()) {
      ++skipped_;
      std::fprintf(stderr, "adamw: non-finite gradient for %s at step %lld, skipping\n",
                   p.name.c_str(), static_cast<long long>(t_));
      continue;
    }
    auto& st = state_[pi];
    const size_t n = static_cast<size_t>(g.numel());
    if (st.m.size() != n) {
      st.m.assign(n, 0.0);
      st.v.assign(n, 0.0);
    }
    double* val = p.var->value.data();
    for (size_t i = 0; i < n; ++i) {
      const double gi = g[static_cast<int64_t>(i)];
      st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gi;
      st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      val[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * val[i]);
    }
  }
}

}  // namespace bevworld::num
