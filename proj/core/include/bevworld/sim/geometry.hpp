#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace bevworld::sim {

struct Vec2 {
  double x = 0.0, y = 0.0;
  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
};

/// Wraps an angle into (-pi, pi].
double normalize_angle(double a);

/// SE(2) pose, read as the transform from its local frame into the world
/// frame: world = R(yaw) * local + (x, y). z passes through untouched.
struct PlanarPose {
  double x = 0.0, y = 0.0, yaw = 0.0;

  static PlanarPose identity() { return {}; }

  Vec2 apply(const Vec2& p) const;
  Vec3 apply(const Vec3& p) const;
  /// Rotate a direction (no translation).
  Vec2 rotate(const Vec2& d) const;
  Vec3 rotate(const Vec3& d) const;

  PlanarPose inverse() const;
  /// Normalized-yaw copy.
  PlanarPose normalized() const { return {x, y, normalize_angle(yaw)}; }

  bool operator==(const PlanarPose& o) const { return x == o.x && y == o.y && yaw == o.yaw; }
};

/// compose(a, b)(p) == a(b(p)).
PlanarPose compose(const PlanarPose& a, const PlanarPose& b);

/// Transform taking coordinates expressed in `src`'s frame to coordinates in
/// `dst`'s frame: frame_transform(src, dst) = dst^-1 ∘ src.
PlanarPose frame_transform(const PlanarPose& src, const PlanarPose& dst);

/// Axis-aligned-in-local-frame box: yaw-rotated rectangle footprint sitting
/// on the ground, occupying z in [0, height].
struct OrientedBox {
  PlanarPose pose;  // footprint center
  double length = 1.0, width = 1.0, height = 1.0;

  bool contains(const Vec3& world_point, double eps = 1e-9) const;
  bool contains_xy(const Vec2& world_point, double eps = 1e-9) const;
  std::array<Vec2, 4> footprint_corners() const;
};

/// Nearest positive hit distance of a ray against the box, if any.
std::optional<double> ray_box_intersect(const Vec3& origin, const Vec3& dir,
                                        const OrientedBox& box);

/// Distance between two rectangle footprints (0 when overlapping).
double rect_distance(const OrientedBox& a, const OrientedBox& b);

/// Exact constant-curvature rollout: poses after 1..n steps of duration dt
/// at speed v and curvature kappa (1/m, positive turns left).
std::vector<PlanarPose> roll_constant_curvature(const PlanarPose& start, double v, double kappa,
                                                double dt, int n);

}  // namespace bevworld::sim
