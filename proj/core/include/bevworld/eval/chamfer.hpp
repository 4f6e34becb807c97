#pragma once

#include "bevworld/numerics/tensor.hpp"

namespace bevworld::eval {

struct ChamferResult {
  double cd = 0.0;       // sum of both directional means of squared distances
  double term_ab = 0.0;  // mean over A of min squared distance to B
  double term_ba = 0.0;
  int count_a = 0;       // in-range point counts
  int count_b = 0;
  double range = 0.0;
};

/// Chamfer distance in m^2 between two [N,3] point sets. Points are first
/// filtered to |x| <= range and |y| <= range; an empty set after filtering
/// throws, naming the set. Exact nearest neighbors via a spatial hash with
/// expanding ring search.
ChamferResult chamfer(const num::Tensor& a, const num::Tensor& b, double range);

/// Filter helper exposed for region-restricted evaluation.
num::Tensor filter_range(const num::Tensor& points, double range);

/// Deterministic pairwise summation; the documented reduction order for all
/// metric aggregation.
double pairwise_sum(const std::vector<double>& values);

}  // namespace bevworld::eval
