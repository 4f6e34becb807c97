#pragma once

#include <vector>

#include "bevworld/model/encoder.hpp"

namespace bevworld::model {

/// Supervision ray in the ego frame of the frame it was sampled from.
struct Ray {
  enum class Source { kCamera, kLidar };
  sim::Vec3 origin;
  sim::Vec3 dir;  // unit
  Source source = Source::kCamera;
  bool hit = false;              // camera: surface hit (false = sky/miss)
  double depth_target = 0.0;     // lidar: supervised; camera: oracle only
  sim::Rgb color_target;         // camera
  uint8_t semantic_target = 0;   // camera
  bool dynamic_tag = false;
};

struct RayBudget {
  int n_lidar = 512;
  int n_camera = 768;
  int n_dynamic = 128;
};

/// Draws the supervision batch for one frame: voxel-downsampled lidar rays,
/// class-stratified camera rays, and a dynamic quota of rays whose hit
/// point lies inside a moving actor box (tagged). Deterministic per seed.
std::vector<Ray> sample_rays(const sim::SceneFrame& frame, const sim::CameraRig& rig,
                             const sim::WorldConfig& wcfg, const RayBudget& budget,
                             uint64_t seed);

/// Fixed per-ray sampling distances; deltas[j] = dist[j] - dist[j-1] with
/// dist[-1] taken as 0.
struct WaypointSchedule {
  std::vector<double> distances;
  std::vector<double> deltas;

  static WaypointSchedule uniform(int n, double near, double far);
  int count() const { return static_cast<int>(distances.size()); }
};

/// Waypoint positions o + lambda_j * d for one ray, [n,3].
Tensor sample_waypoints(const Ray& ray, const WaypointSchedule& sched);

struct RenderOutput {
  Var sem_logits;  // [N, Ns]
  Var color;       // [N, 3]
  Var depth;       // [N, 1]
  Var weights;     // [N, n]
  Tensor tau;      // [N, n+1] transmittances (diagnostic)
};

struct SceneLoss {
  Var sem;    // cross-entropy over camera rays (misses included, background target)
  Var rgb;    // color MSE over camera surface hits
  Var depth;  // depth MSE over lidar rays
  bool has_sem = false, has_rgb = false, has_depth = false;
  Var camera() const { return num::add(sem, rgb); }
  Var lidar() const { return depth; }
  Var total() const { return num::add(camera(), lidar()); }
};

/// Density/attribute field over the lifted volume: channel-to-height conv,
/// cosine position encoding, shared MLP trunk with semantic/color/density
/// heads, and the volume-rendering reduction.
class OsmField {
 public:
  OsmField(const ModelConfig& cfg, ParamSet& ps, Rng& rng);

  /// Reshape(Conv(B), [H,W,Z,C*]).
  Var channel_to_height(const Var& bev) const;

  /// Renders a ray batch against a volume grid ([H,W,Z,C*], same frame as
  /// the rays).
  RenderOutput render(const Var& volume, const std::vector<Ray>& rays,
                      const WaypointSchedule& sched) const;

  /// Convenience: channel_to_height + render from a BEV latent.
  RenderOutput render_from_bev(const Var& bev, const std::vector<Ray>& rays,
                               const WaypointSchedule& sched) const;

  /// Field evaluation at arbitrary feature/position rows (v:[N,C*],
  /// pos:[N,3] ego meters): returns (attributes [N,Ns+3] with sigmoided
  /// color, density [N,1]).
  std::pair<Var, Var> field(const Var& v, const Tensor& positions) const;

  const ModelConfig& config() const { return cfg_; }

  /// Cosine position encoding rows for ego-frame positions.
  Tensor position_encoding(const Tensor& positions) const;

 private:
  ModelConfig cfg_;
  Conv2d c2h_;
  Linear trunk1_, trunk2_;
  Linear sem_head_, color_head_, sigma_head_;
};

/// Per-kind scene losses over a rendered batch. Camera rays contribute
/// cross-entropy on all rays and color MSE on surface hits only; lidar rays
/// contribute depth MSE. Absent kinds yield zero terms with flags cleared.
SceneLoss scene_loss(const RenderOutput& render, const std::vector<Ray>& rays);

/// Masks and index volume sampling used by render(); exposed for tests.
Tensor waypoint_index_coords(const std::vector<Ray>& rays, const WaypointSchedule& sched,
                             const ModelConfig& cfg, Tensor* inside_mask);

}  // namespace bevworld::model
