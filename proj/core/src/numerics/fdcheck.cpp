#include "bevworld/numerics/fdcheck.hpp"

#include <cmath>

#include "bevworld/numerics/rng.hpp"

namespace bevworld::num {

FdReport fd_check(const std::function<double(const Tensor&)>& f, const Tensor& point,
                  const Tensor& analytic_grad, const FdOptions& opt) {
  FdReport rep;
  if (!point.same_shape(analytic_grad)) {
    rep.message = "fd_check: gradient shape " + shape_str(analytic_grad.shape()) +
                  " does not match point shape " + shape_str(point.shape());
    return rep;
  }
  std::vector<int64_t> coords;
  const int64_t n = point.numel();
  if (opt.max_coords >= 0 && opt.max_coords < n) {
    Rng rng(derive_seed(opt.seed, "fd_check"));
    coords = rng.sample_without_replacement(n, opt.max_coords);
  } else {
    coords.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
  }

  Tensor x = point;
  rep.pass = true;
  for (int64_t i : coords) {
    const double keep = x[i];
    x[i] = keep + opt.step;
    const double fp = f(x);
    x[i] = keep - opt.step;
    const double fm = f(x);
    x[i] = keep;
    const double numeric = (fp - fm) / (2.0 * opt.step);
    const double analytic = analytic_grad[i];
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(numeric) ||
        !std::isfinite(analytic)) {
      rep.pass = false;
      rep.worst_coord = i;
      rep.worst_analytic = analytic;
      rep.worst_numeric = numeric;
      rep.message = "fd_check: non-finite value at coordinate " + std::to_string(i);
      return rep;
    }
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    const double rel = std::abs(analytic - numeric) / denom;
    ++rep.coords_checked;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_coord = i;
      rep.worst_analytic = analytic;
      rep.worst_numeric = numeric;
    }
  }
  rep.pass = rep.max_rel_err <= opt.tol;
  if (!rep.pass && rep.message.empty()) {
    rep.message = "fd_check: max rel err " + std::to_string(rep.max_rel_err) + " at coordinate " +
                  std::to_string(rep.worst_coord) + " (analytic " +
                  std::to_string(rep.worst_analytic) + ", numeric " +
                  std::to_string(rep.worst_numeric) + ")";
  }
  return rep;
}

FdReport fd_check_graph(const std::function<Var(const Var&)>& build, const Tensor& point,
                        const FdOptions& opt) {
  Var x = leaf(point, true);
  Var loss = build(x);
  backward(loss);
  Tensor analytic = x->has_grad() ? x->grad : Tensor::zeros(point.shape());
  auto f = [&build](const Tensor& t) {
    Var x0 = leaf(t, false);
    return build(x0)->value.scalar();
  };
  return fd_check(f, point, analytic, opt);
}

}  // namespace bevworld::num
