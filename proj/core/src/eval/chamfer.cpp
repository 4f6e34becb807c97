#include "bevworld/eval/chamfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace bevworld::eval {

using num::Tensor;

Tensor filter_range(const Tensor& points, double range) {
  if (points.numel() > 0 && (points.rank() != 2 || points.dim(1) != 3)) {
    throw std::invalid_argument("filter_range: expected [N,3] points");
  }
  std::vector<double> kept;
  const int64_t n = points.numel() / 3;
  for (int64_t i = 0; i < n; ++i) {
    const double x = points[i * 3 + 0], y = points[i * 3 + 1];
    if (std::abs(x) <= range && std::abs(y) <= range) {
      kept.push_back(x);
      kept.push_back(y);
      kept.push_back(points[i * 3 + 2]);
    }
  }
  const int n_kept = static_cast<int>(kept.size() / 3);
  return Tensor({n_kept, 3}, std::move(kept));
}

namespace {

struct HashGrid {
  double cell;
  std::unordered_map<int64_t, std::vector<int>> map;
  const Tensor* pts;

  static int64_t key(int ix, int iy, int iz) {
    // 21 bits per axis, offset to stay positive.
    const int64_t b = 1 << 20;
    return ((static_cast<int64_t>(ix) + b) << 42) | ((static_cast<int64_t>(iy) + b) << 21) |
           (static_cast<int64_t>(iz) + b);
  }

  HashGrid(const Tensor& p, double cell_size) : cell(cell_size), pts(&p) {
    const int64_t n = p.dim(0);
    for (int64_t i = 0; i < n; ++i) {
      map[key(static_cast<int>(std::floor(p[i * 3 + 0] / cell)),
              static_cast<int>(std::floor(p[i * 3 + 1] / cell)),
              static_cast<int>(std::floor(p[i * 3 + 2] / cell)))]
          .push_back(static_cast<int>(i));
    }
  }

  /// Exact min squared distance from q to any stored point: rings expand
  /// until the nearest possible cell is provably farther than the best hit.
  double min_sq_dist(double qx, double qy, double qz) const {
    const int cx = static_cast<int>(std::floor(qx / cell));
    const int cy = static_cast<int>(std::floor(qy / cell));
    const int cz = static_cast<int>(std::floor(qz / cell));
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0;; ++r) {
      // Any point in a cell at ring r is at least (r-1)*cell away.
      if (r > 0 && best < std::numeric_limits<double>::infinity()) {
        const double ring_min = (r - 1) * cell;
        if (ring_min > 0.0 && ring_min * ring_min > best) break;
      }
      for (int dx = -r; dx <= r; ++dx) {
        for (int dy = -r; dy <= r; ++dy) {
          for (int dz = -r; dz <= r; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
            auto it = map.find(key(cx + dx, cy + dy, cz + dz));
            if (it == map.end()) continue;
            for (int i : it->second) {
              const double ddx = (*pts)[static_cast<int64_t>(i) * 3 + 0] - qx;
              const double ddy = (*pts)[static_cast<int64_t>(i) * 3 + 1] - qy;
              const double ddz = (*pts)[static_cast<int64_t>(i) * 3 + 2] - qz;
              best = std::min(best, ddx * ddx + ddy * ddy + ddz * ddz);
            }
          }
        }
      }
      if (r > (1 << 16)) break;  // unreachable with finite inputs
    }
    return best;
  }
};

double directional_mean(const Tensor& from, const HashGrid& to_grid) {
  const int64_t n = from.dim(0);
  std::vector<double> mins(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    mins[static_cast<size_t>(i)] =
        to_grid.min_sq_dist(from[i * 3 + 0], from[i * 3 + 1], from[i * 3 + 2]);
  }
  return pairwise_sum(mins) / static_cast<double>(n);
}

}  // namespace

ChamferResult chamfer(const Tensor& a, const Tensor& b, double range) {
  const Tensor fa = filter_range(a, range);
  const Tensor fb = filter_range(b, range);
  if (fa.dim(0) == 0) throw std::invalid_argument("chamfer: set A empty after range filtering");
  if (fb.dim(0) == 0) throw std::invalid_argument("chamfer: set B empty after range filtering");

  const HashGrid ga(fa, 2.0);
  const HashGrid gb(fb, 2.0);
  ChamferResult r;
  r.term_ab = directional_mean(fa, gb);
  r.term_ba = directional_mean(fb, ga);
  r.cd = r.term_ab + r.term_ba;
  r.count_a = fa.dim(0);
  r.count_b = fb.dim(0);
  r.range = range;
  return r;
}

double pairwise_sum(const std::vector<double>& values) {
  // Recursive halving; order depends only on the element count.
  if (values.empty()) return 0.0;
  std::vector<double> buf = values;
  size_t n = buf.size();
  while (n > 1) {
    const size_t half = n / 2;
    for (size_t i = 0; i < half; ++i) buf[i] = buf[2 * i] + buf[2 * i + 1];
    if (n % 2 == 1) {
      buf[half] = buf[n - 1];
      n = half + 1;
    } else {
      n = half;
    }
  }
  return buf[0];
}

}  // namespace bevworld::eval
