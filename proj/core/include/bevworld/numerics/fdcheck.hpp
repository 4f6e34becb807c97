#pragma once

#include <functional>
#include <string>

#include "bevworld/numerics/graph.hpp"

namespace bevworld::num {

struct FdOptions {
  double step = 1e-5;
  double tol = 1e-4;
  /// Check at most this many coordinates per tensor (seeded subsample);
  /// -1 checks all.
  int max_coords = -1;
  uint64_t seed = 0;
};

struct FdReport {
  bool pass = false;
  double max_rel_err = 0.0;
  int64_t worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int64_t coords_checked = 0;
  std::string message;
};

/// Compares an analytic gradient against central finite differences of f
/// around `point`. Relative error uses denominator max(1, |a|, |n|). Any
/// non-finite value fails immediately, naming the coordinate.
FdReport fd_check(const std::function<double(const Tensor&)>& f, const Tensor& point,
                  const Tensor& analytic_grad, const FdOptions& opt);

/// Convenience wrapper: `build` maps an input leaf to a scalar Var. The
/// analytic gradient is obtained by one backward pass at `point`, then
/// compared against central differences of the forward value.
FdReport fd_check_graph(const std::function<Var(const Var&)>& build, const Tensor& point,
                        const FdOptions& opt);

}  // namespace bevworld::num
