#pragma once

#include <string>
#include <vector>

#include "bevworld/numerics/graph.hpp"
#include "bevworld/numerics/params.hpp"
#include "bevworld/sim/geometry.hpp"

namespace bevworld::model {

using num::ParamSet;
using num::Rng;
using num::Tensor;
using num::Var;

/// Fully connected layer, weights [in, out]. scale == 0 gives exact zero
/// init (used for residual output projections).
class Linear {
 public:
  Linear() = default;
  Linear(ParamSet& ps, const std::string& name, int in, int out, Rng& rng, double scale = -1.0,
         bool with_bias = true);
  Var apply(const Var& x) const;  // [N,in] -> [N,out]
  int in() const { return in_; }
  int out() const { return out_; }
  Var w, b;  // b is null for pure projections

 private:
  int in_ = 0, out_ = 0;
};

/// tanh-activated MLP; the output layer is affine.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamSet& ps, const std::string& name, const std::vector<int>& widths, Rng& rng,
      double out_scale = -1.0);
  Var apply(const Var& x) const;

 private:
  std::vector<Linear> layers_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamSet& ps, const std::string& name, int kh, int kw, int cin, int cout, int stride,
         int pad, Rng& rng, double scale = -1.0);
  Var apply(const Var& x) const;  // [H,W,Cin] -> [Ho,Wo,Cout]
  Var w, b;

 private:
  int stride_ = 1, pad_ = 0;
};

/// Single-head scaled-dot-product attention where every cell of the query
/// grid attends over the 3x3 neighborhood of the key/value grid (zero keys
/// beyond the border). Returns the attention output without residual.
class NeighborhoodAttention {
 public:
  NeighborhoodAttention() = default;
  NeighborhoodAttention(ParamSet& ps, const std::string& name, int channels, Rng& rng,
                        double out_scale = -1.0);
  Var apply(const Var& query_grid, const Var& kv_grid) const;  // both [H,W,C]

 private:
  Linear wq_, wk_, wv_, wo_;
  int c_ = 0;
};

/// BEV lattice bookkeeping: cell (i,j) covers ego coordinates
/// x = (j+0.5)*cell - extent/2, y = (i+0.5)*cell - extent/2.
struct GridSpec {
  int h = 32, w = 32;
  double extent = 40.0;

  double cell() const { return extent / h; }
  sim::Vec2 cell_center(int i, int j) const {
    return {(j + 0.5) * cell() - extent / 2, (i + 0.5) * cell() - extent / 2};
  }
  /// Ego xy -> continuous (row, col) index coordinates.
  sim::Vec2 to_index(const sim::Vec2& xy) const {
    return {(xy.y + extent / 2) / cell() - 0.5, (xy.x + extent / 2) / cell() - 0.5};
  }
  /// Flat [H*W, 2] tensor of cell-center ego coordinates, row-major.
  Tensor centers() const;
};

/// Rigidly resamples a latent grid expressed in src_pose's frame into
/// dst_pose's frame (bilinear, zeros beyond the grid).
Var warp_grid(const Var& src_grid, const sim::PlanarPose& src_pose,
              const sim::PlanarPose& dst_pose, const GridSpec& gs);

/// Column k of a [N,K] matrix as [N,1] (differentiable selector).
Var select_column(const Var& x, int k);

}  // namespace bevworld::model
