#include "bevworld/sim/world.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bevworld/numerics/rng.hpp"

namespace bevworld::sim {

using num::Rng;

RaycastResult raycast(const std::vector<BoxActor>& actors, double t, const Vec3& origin,
                      const Vec3& dir, double max_range) {
  RaycastResult best;
  best.depth = max_range;
  best.semantic_class = kBackground;
  best.color = kSkyColor;
  double best_t = max_range;

  // Ground plane z = 0.
  if (dir.z < -1e-12 && origin.z > 0.0) {
    const double tg = -origin.z / dir.z;
    if (tg > 1e-9 && tg < best_t) {
      best_t = tg;
      best = {true, tg, kRoad, kRoadColor, -1};
    }
  }
  for (const auto& a : actors) {
    const auto hit = ray_box_intersect(origin, dir, a.box_at(t));
    if (hit && *hit < best_t) {
      best_t = *hit;
      best = {true, *hit, a.semantic_class, a.albedo, a.id};
    }
  }
  return best;
}

CameraRig CameraRig::from_config(const WorldConfig& cfg) {
  CameraRig rig;
  rig.width = cfg.img_w;
  rig.height = cfg.img_h;
  const double half_fov = cfg.hfov_deg * std::numbers::pi / 360.0;
  rig.fx = (cfg.img_w / 2.0) / std::tan(half_fov);
  rig.fy = rig.fx;
  rig.cx = cfg.img_w / 2.0;
  rig.cy = cfg.img_h / 2.0;
  rig.mount_height = cfg.cam_height;
  rig.mount_yaws.resize(static_cast<size_t>(cfg.n_cameras));
  // front, left, right, rear, then evenly spaced extras.
  const double presets[4] = {0.0, std::numbers::pi / 2, -std::numbers::pi / 2, std::numbers::pi};
  for (int v = 0; v < cfg.n_cameras; ++v) {
    rig.mount_yaws[static_cast<size_t>(v)] =
        v < 4 ? presets[v] : 2.0 * std::numbers::pi * v / cfg.n_cameras;
  }
  return rig;
}

Vec3 CameraRig::pixel_dir(int view, double u, double v) const {
  const double xc = (u - cx) / fx;
  const double yc = (v - cy) / fy;
  const double psi = mount_yaws[static_cast<size_t>(view)];
  // optical x-right -> ego (sin psi, -cos psi, 0); optical y-down -> ego -z;
  // optical z-forward -> ego (cos psi, sin psi, 0).
  const Vec3 d{std::cos(psi) + xc * std::sin(psi), std::sin(psi) - xc * std::cos(psi), -yc};
  return d.normalized();
}

bool CameraRig::project(int view, const Vec3& p_ego, double* u, double* v, double* depth) const {
  const double psi = mount_yaws[static_cast<size_t>(view)];
  const Vec3 rel = p_ego - center(view);
  const double zf = rel.x * std::cos(psi) + rel.y * std::sin(psi);       // optical forward
  const double xr = rel.x * std::sin(psi) - rel.y * std::cos(psi);      // optical right
  const double yd = -rel.z;                                             // optical down
  if (zf < 1e-6) return false;
  *u = cx + fx * xr / zf;
  *v = cy + fy * yd / zf;
  *depth = zf;
  return true;
}

std::vector<Vec3> lidar_directions(const WorldConfig& cfg) {
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<size_t>(cfg.lidar_azimuths * cfg.lidar_elevations));
  const double el_lo = -25.0 * std::numbers::pi / 180.0;
  const double el_hi = 2.0 * std::numbers::pi / 180.0;
  for (int e = 0; e < cfg.lidar_elevations; ++e) {
    const double el = cfg.lidar_elevations == 1
                          ? el_lo
                          : el_lo + (el_hi - el_lo) * e / (cfg.lidar_elevations - 1);
    for (int a = 0; a < cfg.lidar_azimuths; ++a) {
      const double az = 2.0 * std::numbers::pi * a / cfg.lidar_azimuths;
      dirs.push_back(Vec3{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)});
    }
  }
  return dirs;
}

bool SceneFrame::operator==(const SceneFrame& o) const {
  auto teq = [](const num::Tensor& a, const num::Tensor& b) {
    return a.shape() == b.shape() && a.vec() == b.vec();
  };
  if (!(timestamp == o.timestamp && ego == o.ego && boxes == o.boxes)) return false;
  if (images.size() != o.images.size() || image_depth.size() != o.image_depth.size() ||
      image_semantics != o.image_semantics) {
    return false;
  }
  for (size_t i = 0; i < images.size(); ++i) {
    if (!teq(images[i], o.images[i]) || !teq(image_depth[i], o.image_depth[i])) return false;
  }
  return teq(lidar_points, o.lidar_points);
}

bool Episode::operator==(const Episode& o) const {
  return config == o.config && seed == o.seed && rig == o.rig && actors == o.actors &&
         frames == o.frames;
}

namespace {

BoxActor sample_actor(Rng& rng, int id, double bound) {
  BoxActor a;
  a.id = id;
  const double kind = rng.uniform();
  if (kind < 0.5) {
    a.semantic_class = kVehicle;
    a.length = rng.uniform(3.5, 4.5);
    a.width = rng.uniform(1.8, 2.1);
    a.height = rng.uniform(1.4, 1.7);
    const double speed = rng.uniform(0.8, 3.0);
    const double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
    a.vx = speed * std::cos(heading);
    a.vy = speed * std::sin(heading);
    a.pose0.yaw = heading;
  } else if (kind < 0.75) {
    a.semantic_class = kPedestrian;
    a.length = rng.uniform(0.4, 0.6);
    a.width = rng.uniform(0.4, 0.6);
    a.height = rng.uniform(1.6, 1.8);
    const double speed = rng.uniform(0.8, 1.8);
    const double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
    a.vx = speed * std::cos(heading);
    a.vy = speed * std::sin(heading);
    a.pose0.yaw = heading;
  } else {
    a.semantic_class = kBarrier;
    a.length = rng.uniform(1.5, 2.5);
    a.width = rng.uniform(0.4, 0.6);
    a.height = rng.uniform(0.8, 1.1);
    a.pose0.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
  }
  const double margin = 0.75 * bound;
  a.pose0.x = rng.uniform(-margin, margin);
  a.pose0.y = rng.uniform(-margin, margin);
  a.albedo = Rgb{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  return a;
}

SceneFrame render_frame(const WorldConfig& cfg, const CameraRig& rig,
                        const std::vector<BoxActor>& actors, const PlanarPose& ego, double t) {
  SceneFrame f;
  f.timestamp = t;
  f.ego = ego;
  f.images.reserve(static_cast<size_t>(cfg.n_cameras));
  for (int view = 0; view < cfg.n_cameras; ++view) {
    num::Tensor img = num::Tensor::zeros({cfg.img_h, cfg.img_w, 3});
    num::Tensor dep = num::Tensor::zeros({cfg.img_h, cfg.img_w});
    std::vector<uint8_t> sem(static_cast<size_t>(cfg.img_h * cfg.img_w));
    for (int v = 0; v < cfg.img_h; ++v) {
      for (int u = 0; u < cfg.img_w; ++u) {
        const Vec3 dir_ego = rig.pixel_dir(view, u + 0.5, v + 0.5);
        const Vec3 o_world = ego.apply(rig.center(view));
        const Vec3 d_world = ego.rotate(dir_ego);
        const RaycastResult r = raycast(actors, t, o_world, d_world, cfg.max_range);
        const int64_t px = (static_cast<int64_t>(v) * cfg.img_w + u);
        img[px * 3 + 0] = r.color.r;
        img[px * 3 + 1] = r.color.g;
        img[px * 3 + 2] = r.color.b;
        dep[px] = r.depth;
        sem[static_cast<size_t>(px)] = r.semantic_class;
      }
    }
    f.images.push_back(std::move(img));
    f.image_depth.push_back(std::move(dep));
    f.image_semantics.push_back(std::move(sem));
  }

  const Vec3 lc_ego = lidar_center(cfg);
  const Vec3 lc_world = ego.apply(lc_ego);
  std::vector<double> pts;
  for (const Vec3& d_ego : lidar_directions(cfg)) {
    const Vec3 d_world = ego.rotate(d_ego);
    const RaycastResult r = raycast(actors, t, lc_world, d_world, cfg.max_range);
    if (!r.hit) continue;
    const Vec3 p = lc_ego + d_ego * r.depth;
    pts.push_back(p.x);
    pts.push_back(p.y);
    pts.push_back(p.z);
  }
  const int n_pts = static_cast<int>(pts.size() / 3);
  f.lidar_points = num::Tensor({n_pts, 3}, std::move(pts));

  f.boxes.reserve(actors.size());
  for (const auto& a : actors) {
    BoxActor snap = a;
    snap.pose0 = a.pose_at(t);
    f.boxes.push_back(snap);
  }
  return f;
}

}  // namespace

SceneFrame render_scene_frame(const WorldConfig& cfg, const CameraRig& rig,
                              const std::vector<BoxActor>& actors, const PlanarPose& ego,
                              double t) {
  return render_frame(cfg, rig, actors, ego, t);
}

Episode generate_episode(const WorldConfig& cfg, uint64_t seed) {
  if (cfg.n_frames <= 0 || cfg.n_cameras <= 0 || cfg.img_h <= 0 || cfg.img_w <= 0 ||
      cfg.lidar_azimuths <= 0 || cfg.lidar_elevations <= 0) {
    throw std::invalid_argument("generate_episode: degenerate config");
  }
  Episode ep;
  ep.config = cfg;
  ep.seed = seed;
  ep.rig = CameraRig::from_config(cfg);

  Rng rng(num::derive_seed(seed, "episode"));
  const int n_actors = cfg.n_actors_min +
                       static_cast<int>(rng.randint(cfg.n_actors_max - cfg.n_actors_min + 1));
  ep.actors.reserve(static_cast<size_t>(n_actors));
  for (int i = 0; i < n_actors; ++i) {
    BoxActor a = sample_actor(rng, i, cfg.bound);
    if (!cfg.dynamics) {
      a.vx = a.vy = 0.0;
    }
    ep.actors.push_back(a);
  }
  if (cfg.dynamics) {
    bool any_dynamic = false;
    for (const auto& a : ep.actors) any_dynamic = any_dynamic || a.is_dynamic();
    if (!any_dynamic && !ep.actors.empty()) {
      auto& a = ep.actors.front();
      a.semantic_class = kVehicle;
      a.vx = 1.5 * std::cos(a.pose0.yaw);
      a.vy = 1.5 * std::sin(a.pose0.yaw);
    }
  }

  // Ego: piecewise-constant curvature at constant speed, starting near the
  // -x edge heading roughly +x so the trajectory crosses the actor field.
  const double speed = rng.uniform(cfg.ego_speed_min, cfg.ego_speed_max);
  PlanarPose ego{rng.uniform(-0.6 * cfg.bound, -0.3 * cfg.bound),
                 rng.uniform(-0.25 * cfg.bound, 0.25 * cfg.bound), rng.uniform(-0.3, 0.3)};
  const int segment_len = 4;  // frames per curvature segment
  double kappa = rng.uniform(-0.06, 0.06);

  ep.frames.reserve(static_cast<size_t>(cfg.n_frames));
  for (int k = 0; k < cfg.n_frames; ++k) {
    const double t = k * cfg.dt;
    ep.frames.push_back(render_frame(cfg, ep.rig, ep.actors, ego.normalized(), t));
    if ((k + 1) % segment_len == 0) kappa = rng.uniform(-0.06, 0.06);
    ego = roll_constant_curvature(ego, speed, kappa, cfg.dt, 1).front();
  }
  return ep;
}

Episode generate_planner_scenario(const WorldConfig& cfg, uint64_t seed, bool crossing) {
  if (cfg.n_frames <= 0 || cfg.n_cameras <= 0) {
    throw std::invalid_argument("generate_planner_scenario: degenerate config");
  }
  Episode ep;
  ep.config = cfg;
  ep.seed = seed;
  ep.rig = CameraRig::from_config(cfg);

  Rng rng(num::derive_seed(seed, "scenario"));
  const double speed = rng.uniform(2.0, 2.4);
  // The frame the planner acts at: enough history before, horizon after.
  const int t_act = 3;
  const double act_time = t_act * cfg.dt;

  // Obstacle placed relative to the ego position at act time, close enough
  // that the straight primitive meets it inside the horizon.
  const double ahead = rng.uniform(6.5, 8.0);
  const double ego_x_act = -10.0 + speed * act_time;

  BoxActor obstacle;
  obstacle.id = 0;
  obstacle.semantic_class = kVehicle;
  obstacle.length = rng.uniform(3.6, 4.4);
  obstacle.width = rng.uniform(1.8, 2.1);
  obstacle.height = rng.uniform(1.4, 1.7);
  obstacle.albedo = Rgb{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};

  const bool clear_left = rng.uniform() < 0.5;
  if (crossing) {
    // Starts on the soon-to-be-clear side and slides across the corridor,
    // so the side that looks open now is blocked inside the horizon.
    const double lateral0 = clear_left ? 2.4 : -2.4;
    const double lat_speed = rng.uniform(1.8, 2.2) * (clear_left ? -1.0 : 1.0);
    obstacle.pose0 = {ego_x_act + ahead, lateral0, 0.0};
    obstacle.vx = 0.0;
    obstacle.vy = lat_speed;
    // Undo motion back to episode time zero.
    obstacle.pose0.y -= obstacle.vy * act_time;
  } else {
    obstacle.pose0 = {ego_x_act + ahead, rng.uniform(-0.3, 0.3), 0.0};
  }
  ep.actors.push_back(obstacle);

  if (!crossing) {
    // Barrier seals the turning corridor on the non-clear side.
    BoxActor barrier;
    barrier.id = 1;
    barrier.semantic_class = kBarrier;
    barrier.length = 4.0;
    barrier.width = 0.5;
    barrier.height = 1.0;
    barrier.albedo = Rgb{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    barrier.pose0 = {ego_x_act + ahead * 0.65, clear_left ? -2.4 : 2.4, 0.0};
    ep.actors.push_back(barrier);
  }

  PlanarPose ego{-10.0, 0.0, 0.0};
  ep.frames.reserve(static_cast<size_t>(cfg.n_frames));
  for (int k = 0; k < cfg.n_frames; ++k) {
    const double t = k * cfg.dt;
    ep.frames.push_back(render_frame(cfg, ep.rig, ep.actors, ego, t));
    ego = roll_constant_curvature(ego, speed, 0.0, cfg.dt, 1).front();
  }
  return ep;
}

BevGroundTruth bev_occupancy(const std::vector<BoxActor>& actors, const PlanarPose& ref_ego,
                             const PlanarPose& ego_at_query, double t_query, int grid_h,
                             int grid_w, double cell_size, double extent) {
  BevGroundTruth gt;
  gt.classes.assign(static_cast<size_t>(grid_h * grid_w), kRoad);
  gt.velocity = num::Tensor::zeros({grid_h, grid_w, 2});
  const OrientedBox ego_box{ego_at_query, kEgoLength, kEgoWidth, 1.5};
  for (int i = 0; i < grid_h; ++i) {
    for (int j = 0; j < grid_w; ++j) {
      const Vec2 local{(j + 0.5) * cell_size - extent / 2, (i + 0.5) * cell_size - extent / 2};
      const Vec2 world = ref_ego.apply(local);
      const int64_t idx = static_cast<int64_t>(i) * grid_w + j;
      if (ego_box.contains_xy(world)) {
        gt.classes[static_cast<size_t>(idx)] = kEgoIgnored;
        continue;
      }
      for (const auto& a : actors) {
        if (!a.box_at(t_query).contains_xy(world)) continue;
        gt.classes[static_cast<size_t>(idx)] = a.semantic_class;
        // Velocity expressed in the reference ego frame.
        const double c = std::cos(ref_ego.yaw), s = std::sin(ref_ego.yaw);
        gt.velocity[idx * 2 + 0] = c * a.vx + s * a.vy;
        gt.velocity[idx * 2 + 1] = -s * a.vx + c * a.vy;
        break;
      }
    }
  }
  return gt;
}

double min_clearance(const std::vector<BoxActor>& actors, const std::vector<PlanarPose>& ego_poses,
                     const std::vector<double>& times, double cap) {
  double best = cap;
  for (size_t k = 0; k < ego_poses.size(); ++k) {
    const OrientedBox ego_box{ego_poses[k], kEgoLength, kEgoWidth, 1.5};
    for (const auto& a : actors) {
      best = std::min(best, rect_distance(ego_box, a.box_at(times[k])));
    }
  }
  return best;
}

}  // namespace bevworld::sim
