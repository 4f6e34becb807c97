#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevworld/numerics/tensor.hpp"
#include "bevworld/sim/geometry.hpp"

namespace bevworld::sim {

/// Semantic taxonomy used everywhere: ray targets, rendered logits, BEV
/// occupancy. kEgoIgnored only appears in BEV occupancy maps.
enum SemanticClass : uint8_t {
  kBackground = 0,
  kRoad = 1,
  kVehicle = 2,
  kPedestrian = 3,
  kBarrier = 4,
  kEgoIgnored = 5,
};
inline constexpr int kNumClasses = 6;

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kSkyColor{0.55, 0.75, 0.95};
inline constexpr Rgb kRoadColor{0.35, 0.35, 0.35};

struct WorldConfig {
  double bound = 20.0;  // actor placement box half side, meters
  int n_frames = 16;
  double dt = 0.5;
  int n_actors_min = 2;
  int n_actors_max = 8;
  bool dynamics = true;  // require at least one moving actor
  int n_cameras = 4;
  int img_h = 24;
  int img_w = 32;
  double hfov_deg = 90.0;
  double cam_height = 1.6;
  int lidar_azimuths = 16;
  int lidar_elevations = 8;
  double lidar_height = 1.8;
  double max_range = 45.0;
  double ego_speed_min = 1.5;
  double ego_speed_max = 4.0;

  bool operator==(const WorldConfig&) const = default;
};

/// Rigid box on the ground plane with constant-velocity planar motion and
/// constant yaw. pose0 is the pose at episode time zero.
struct BoxActor {
  int id = 0;
  double length = 1.0, width = 1.0, height = 1.0;
  PlanarPose pose0;
  double vx = 0.0, vy = 0.0;  // world frame, m/s
  uint8_t semantic_class = kVehicle;
  Rgb albedo;

  PlanarPose pose_at(double t) const { return {pose0.x + vx * t, pose0.y + vy * t, pose0.yaw}; }
  OrientedBox box_at(double t) const { return {pose_at(t), length, width, height}; }
  double speed() const { return std::hypot(vx, vy); }
  bool is_dynamic() const { return speed() > 0.1; }

  bool operator==(const BoxActor&) const = default;
};

struct RaycastResult {
  bool hit = false;
  double depth = 0.0;  // distance along the ray; max_range on miss
  uint8_t semantic_class = kBackground;
  Rgb color = kSkyColor;
  int actor_id = -1;  // -1: ground or miss
};

/// Nearest surface along a world-frame ray among the ground plane (z = 0)
/// and all actor boxes at time t. Hits beyond max_range count as misses.
RaycastResult raycast(const std::vector<BoxActor>& actors, double t, const Vec3& origin,
                      const Vec3& dir, double max_range = 45.0);

/// Shared pinhole intrinsics plus per-view mounts. Pixel (row v, col u) maps
/// to the optical-frame direction ((u+0.5-cx)/fx, (v+0.5-cy)/fy, 1); the
/// optical frame is x-right, y-down, z-forward, with right = -ego-left.
struct CameraRig {
  double fx = 16.0, fy = 16.0, cx = 16.0, cy = 12.0;
  int width = 32, height = 24;
  double mount_height = 1.6;
  std::vector<double> mount_yaws;  // one per view

  static CameraRig from_config(const WorldConfig& cfg);

  /// Ego-frame unit direction through a (possibly fractional) pixel.
  Vec3 pixel_dir(int view, double u, double v) const;
  Vec3 center(int) const { return {0.0, 0.0, mount_height}; }

  /// Projects an ego-frame point; returns false when behind the camera.
  bool project(int view, const Vec3& p_ego, double* u, double* v, double* depth) const;

  bool operator==(const CameraRig&) const = default;
};

/// Spinning-lidar ray table: all (azimuth, elevation) combinations, ego frame.
std::vector<Vec3> lidar_directions(const WorldConfig& cfg);
inline Vec3 lidar_center(const WorldConfig& cfg) { return {0.0, 0.0, cfg.lidar_height}; }

struct SceneFrame {
  double timestamp = 0.0;
  PlanarPose ego;
  std::vector<num::Tensor> images;       // per view, [H,W,3], albedo in [0,1]
  std::vector<num::Tensor> image_depth;  // per view, [H,W]
  std::vector<std::vector<uint8_t>> image_semantics;  // per view, H*W row-major
  num::Tensor lidar_points;  // [N,3] ego frame
  std::vector<BoxActor> boxes;  // snapshot: pose0 holds the pose at `timestamp`

  bool operator==(const SceneFrame& o) const;
};

struct Episode {
  WorldConfig config;
  uint64_t seed = 0;
  CameraRig rig;
  std::vector<BoxActor> actors;  // poses at episode time 0
  std::vector<SceneFrame> frames;

  bool operator==(const Episode& o) const;
};

/// Deterministic procedural episode. Throws on degenerate configs.
Episode generate_episode(const WorldConfig& cfg, uint64_t seed);

/// Renders one frame of an arbitrary actor arrangement (images, depth,
/// semantics, lidar, box snapshots).
SceneFrame render_scene_frame(const WorldConfig& cfg, const CameraRig& rig,
                              const std::vector<BoxActor>& actors, const PlanarPose& ego,
                              double t);

/// Scenario for planner evaluation: ego drives straight along +x, one
/// obstacle sits a few meters ahead. When `crossing`, the obstacle moves
/// laterally through the ego corridor so the currently-open side closes
/// within the horizon; otherwise it is static with a barrier sealing one
/// side. Returns a regular Episode.
Episode generate_planner_scenario(const WorldConfig& cfg, uint64_t seed, bool crossing);

/// BEV occupancy ground truth: semantic class and ego-frame velocity of the
/// content at each grid cell of the `ref` ego frame, sampled at world time
/// t_query. Cell (i,j) covers ego coords x = (j+0.5)*cell - extent/2,
/// y = (i+0.5)*cell - extent/2.
struct BevGroundTruth {
  std::vector<uint8_t> classes;  // H*W
  num::Tensor velocity;          // [H,W,2] m/s in ref ego frame
};
BevGroundTruth bev_occupancy(const std::vector<BoxActor>& actors, const PlanarPose& ref_ego,
                             const PlanarPose& ego_at_query, double t_query, int grid_h,
                             int grid_w, double cell_size, double extent);

/// Minimum footprint clearance (capped) of an ego rollout against all
/// actors over the given timestamps.
double min_clearance(const std::vector<BoxActor>& actors, const std::vector<PlanarPose>& ego_poses,
                     const std::vector<double>& times, double cap);

inline constexpr double kEgoLength = 2.4;
inline constexpr double kEgoWidth = 1.4;

}  // namespace bevworld::sim
