#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "bevworld/model/layers.hpp"
#include "bevworld/sim/world.hpp"

namespace bevworld::model {

/// Architecture dimensions shared across the world model. Grid extent is
/// fixed to the sensing range; cell size follows from grid_h.
struct ModelConfig {
  int grid_h = 32;
  int grid_w = 32;
  int latent_c = 16;
  double extent = 40.0;
  int z_bins = 4;        // Z
  int cstar = 8;         // C*
  double z_max = 2.0;    // volume height range [0, z_max]
  int c2h_kernel = 1;
  int n_waypoints = 32;
  double waypoint_near = 0.5;
  double waypoint_far = 40.0;
  int horizons = 6;      // F
  int memory_depth = 3;  // M
  int warp_neighbors = 4;
  double warp_cutoff_cells = 2.0;
  int img_feat_c = 16;
  int fsa_j = 4;
  int query_c = 32;

  GridSpec grid() const { return {grid_h, grid_w, extent}; }
  double z_bin_size() const { return z_max / z_bins; }
  double height_of_bin(int zi) const { return (zi + 0.5) * z_bin_size(); }
};

/// The latent BEV state: grid values plus the ego pose and timestamp that
/// anchor it to the world.
struct BevLatent {
  Var grid;  // [H,W,C]
  sim::PlanarPose ego;
  double timestamp = 0.0;
};

/// Ring buffer of recent latents, oldest first. Cleared at episode starts.
class StreamingMemory {
 public:
  explicit StreamingMemory(int capacity) : capacity_(capacity) {}

  void push(const BevLatent& latent);
  void clear() { entries_.clear(); }
  bool empty() const { return entries_.empty(); }
  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }
  const std::deque<BevLatent>& entries() const { return entries_; }
  const BevLatent& newest() const { return entries_.back(); }

 private:
  int capacity_;
  std::deque<BevLatent> entries_;
};

/// Precomputed projection geometry of BEV cells into the camera rig:
/// constant per (rig, grid) pair, shared by the lift and the adapter.
struct LiftGeometry {
  // One entry per (view, height-bin): sample points [H*W, 2] in feature-map
  // index coordinates and a validity column [H*W, 1].
  std::vector<Tensor> points;
  std::vector<Tensor> valid;
  Tensor inv_valid_count;  // [H*W, 1], 1/max(1, #valid pairs)
  int pairs = 0;

  static LiftGeometry build(const sim::CameraRig& rig, const ModelConfig& cfg);
};

/// Streaming world encoder: image backbone, geometric 2D->3D lift, and
/// temporal cross-attention against the warped previous latent.
class WorldEncoder {
 public:
  WorldEncoder(const ModelConfig& cfg, ParamSet& ps, Rng& rng);

  /// Per-view feature maps at 1/4 resolution, shared weights across views.
  std::vector<Var> extract_image_features(const std::vector<Tensor>& images) const;

  Var lift_to_bev(const std::vector<Var>& feats, const LiftGeometry& geo) const;

  /// Fuses the lifted grid with the warped previous latent; with empty
  /// memory returns the input unchanged. Does not touch the memory.
  Var temporal_cross_attention(const Var& current, const sim::PlanarPose& current_pose,
                               const StreamingMemory& memory) const;

  /// Full per-frame step: encode, fuse, and cache into memory.
  BevLatent encode_frame(const sim::SceneFrame& frame, const sim::CameraRig& rig,
                         StreamingMemory& memory) const;

  const LiftGeometry& geometry(const sim::CameraRig& rig) const;
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  Conv2d conv1_, conv2_, conv3_;
  Mlp lift_mlp_;
  NeighborhoodAttention tca_;
  mutable std::optional<sim::CameraRig> geo_rig_;
  mutable LiftGeometry geo_;
};

/// Downstream adapter: BEV cells re-query the image features through the
/// lift projection geometry, one attention layer stack, residual output.
/// Output projections start at zero, so a fresh adapter is the identity.
class Adapter {
 public:
  Adapter() = default;
  Adapter(const ModelConfig& cfg, ParamSet& ps, Rng& rng, int layers = 4);

  Var apply(const Var& bev, const std::vector<Var>& img_feats, const LiftGeometry& geo) const;

 private:
  struct Layer {
    Linear q, k, v, o;
  };
  ModelConfig cfg_;
  std::vector<Layer> layers_;
};

}  // namespace bevworld::model
