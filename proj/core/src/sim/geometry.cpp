#include "bevworld/sim/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

namespace bevworld::sim {

double normalize_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::fmod(a, 2.0 * pi);
  if (a > pi) a -= 2.0 * pi;
  if (a <= -pi) a += 2.0 * pi;
  return a;
}

Vec2 PlanarPose::apply(const Vec2& p) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * p.x - s * p.y + x, s * p.x + c * p.y + y};
}

Vec3 PlanarPose::apply(const Vec3& p) const {
  const Vec2 q = apply(Vec2{p.x, p.y});
  return {q.x, q.y, p.z};
}

Vec2 PlanarPose::rotate(const Vec2& d) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * d.x - s * d.y, s * d.x + c * d.y};
}

Vec3 PlanarPose::rotate(const Vec3& d) const {
  const Vec2 q = rotate(Vec2{d.x, d.y});
  return {q.x, q.y, d.z};
}

PlanarPose PlanarPose::inverse() const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return PlanarPose{-(c * x + s * y), -(-s * x + c * y), normalize_angle(-yaw)};
}

PlanarPose compose(const PlanarPose& a, const PlanarPose& b) {
  const Vec2 t = a.apply(Vec2{b.x, b.y});
  return PlanarPose{t.x, t.y, normalize_angle(a.yaw + b.yaw)};
}

PlanarPose frame_transform(const PlanarPose& src, const PlanarPose& dst) {
  return compose(dst.inverse(), src);
}

bool OrientedBox::contains(const Vec3& world_point, double eps) const {
  if (world_point.z < -eps || world_point.z > height + eps) return false;
  return contains_xy(Vec2{world_point.x, world_point.y}, eps);
}

bool OrientedBox::contains_xy(const Vec2& world_point, double eps) const {
  const PlanarPose inv = pose.inverse();
  const Vec2 local = inv.apply(world_point);
  return std::abs(local.x) <= length / 2 + eps && std::abs(local.y) <= width / 2 + eps;
}

std::array<Vec2, 4> OrientedBox::footprint_corners() const {
  const double hl = length / 2, hw = width / 2;
  return {pose.apply(Vec2{hl, hw}), pose.apply(Vec2{hl, -hw}), pose.apply(Vec2{-hl, -hw}),
          pose.apply(Vec2{-hl, hw})};
}

std::optional<double> ray_box_intersect(const Vec3& origin, const Vec3& dir,
                                        const OrientedBox& box) {
  // Slab test in the box's local frame.
  const PlanarPose inv = box.pose.inverse();
  const Vec3 o = inv.apply(origin);
  const Vec3 d = inv.rotate(dir);
  const double half[3] = {box.length / 2, box.width / 2, box.height / 2};
  const double oc[3] = {o.x, o.y, o.z - box.height / 2};
  const double dc[3] = {d.x, d.y, d.z};
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(dc[i]) < 1e-14) {
      if (std::abs(oc[i]) > half[i]) return std::nullopt;
      continue;
    }
    double t1 = (-half[i] - oc[i]) / dc[i];
    double t2 = (half[i] - oc[i]) / dc[i];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return std::nullopt;
  }
  if (tmax < 1e-9) return std::nullopt;
  return tmin > 1e-9 ? tmin : tmax;
}

namespace {

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

bool rects_overlap(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b) {
  // Separating axis test over both rectangles' edge normals.
  auto has_gap = [](const std::array<Vec2, 4>& pa, const std::array<Vec2, 4>& pb) {
    for (int i = 0; i < 4; ++i) {
      const Vec2 edge = pa[(i + 1) % 4] - pa[static_cast<size_t>(i)];
      const Vec2 axis{-edge.y, edge.x};
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (const auto& p : pa) {
        const double v = p.dot(axis);
        amin = std::min(amin, v);
        amax = std::max(amax, v);
      }
      for (const auto& p : pb) {
        const double v = p.dot(axis);
        bmin = std::min(bmin, v);
        bmax = std::max(bmax, v);
      }
      if (amax < bmin || bmax < amin) return true;
    }
    return false;
  };
  return !has_gap(a, b) && !has_gap(b, a);
}

}  // namespace

double rect_distance(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.footprint_corners();
  const auto cb = b.footprint_corners();
  if (rects_overlap(ca, cb)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      best = std::min(best, point_segment_distance(ca[static_cast<size_t>(i)],
                                                   cb[static_cast<size_t>(j)],
                                                   cb[static_cast<size_t>((j + 1) % 4)]));
      best = std::min(best, point_segment_distance(cb[static_cast<size_t>(i)],
                                                   ca[static_cast<size_t>(j)],
                                                   ca[static_cast<size_t>((j + 1) % 4)]));
    }
  }
  return best;
}

std::vector<PlanarPose> roll_constant_curvature(const PlanarPose& start, double v, double kappa,
                                                double dt, int n) {
  std::vector<PlanarPose> out;
  out.reserve(static_cast<size_t>(n));
  PlanarPose p = start;
  for (int k = 0; k < n; ++k) {
    const double ds = v * dt;
    if (std::abs(kappa) < 1e-9) {
      p.x += ds * std::cos(p.yaw);
      p.y += ds * std::sin(p.yaw);
    } else {
      const double dyaw = kappa * ds;
      const double r = 1.0 / kappa;
      p.x += r * (std::sin(p.yaw + dyaw) - std::sin(p.yaw));
      p.y += r * (-std::cos(p.yaw + dyaw) + std::cos(p.yaw));
      p.yaw = normalize_angle(p.yaw + dyaw);
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace bevworld::sim
