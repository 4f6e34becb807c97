#include "bevworld/model/osm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace bevworld::model {

using namespace num;

namespace {

struct PixelRef {
  int view, row, col;
};

Ray make_camera_ray(const sim::SceneFrame& frame, const sim::CameraRig& rig, const PixelRef& px) {
  Ray r;
  r.source = Ray::Source::kCamera;
  r.origin = rig.center(px.view);
  r.dir = rig.pixel_dir(px.view, px.col + 0.5, px.row + 0.5);
  const int64_t at = static_cast<int64_t>(px.row) * rig.width + px.col;
  r.semantic_target = frame.image_semantics[static_cast<size_t>(px.view)][static_cast<size_t>(at)];
  r.hit = r.semantic_target != sim::kBackground;
  r.depth_target = frame.image_depth[static_cast<size_t>(px.view)][at];
  r.color_target = {frame.images[static_cast<size_t>(px.view)][at * 3 + 0],
                    frame.images[static_cast<size_t>(px.view)][at * 3 + 1],
                    frame.images[static_cast<size_t>(px.view)][at * 3 + 2]};
  return r;
}

Ray make_lidar_ray(const sim::SceneFrame& frame, const sim::WorldConfig& wcfg, int64_t point) {
  Ray r;
  r.source = Ray::Source::kLidar;
  r.origin = sim::lidar_center(wcfg);
  const sim::Vec3 p{frame.lidar_points[point * 3 + 0], frame.lidar_points[point * 3 + 1],
                    frame.lidar_points[point * 3 + 2]};
  const sim::Vec3 rel = p - r.origin;
  r.depth_target = rel.norm();
  r.dir = rel * (1.0 / r.depth_target);
  r.hit = true;
  return r;
}

bool in_dynamic_box(const sim::SceneFrame& frame, const sim::Vec3& p_ego) {
  const sim::Vec3 p_world = frame.ego.apply(p_ego);
  for (const auto& b : frame.boxes) {
    if (b.is_dynamic() && b.box_at(0.0).contains(p_world, 1e-6)) return true;
  }
  return false;
}

}  // namespace

std::vector<Ray> sample_rays(const sim::SceneFrame& frame, const sim::CameraRig& rig,
                             const sim::WorldConfig& wcfg, const RayBudget& budget,
                             uint64_t seed) {
  if (frame.images.empty() || frame.lidar_points.numel() == 0) {
    throw std::invalid_argument("sample_rays: empty frame");
  }
  std::vector<Ray> rays;
  Rng rng(derive_seed(seed, "rays"));

  // Lidar: one representative point per occupied 0.5 m voxel, point order.
  const int64_t n_points = frame.lidar_points.dim(0);
  std::map<std::tuple<int, int, int>, int64_t> voxels;
  std::vector<int64_t> reps;
  for (int64_t p = 0; p < n_points; ++p) {
    const auto key = std::make_tuple(
        static_cast<int>(std::floor(frame.lidar_points[p * 3 + 0] / 0.5)),
        static_cast<int>(std::floor(frame.lidar_points[p * 3 + 1] / 0.5)),
        static_cast<int>(std::floor(frame.lidar_points[p * 3 + 2] / 0.5)));
    if (voxels.emplace(key, p).second) reps.push_back(p);
  }
  if (static_cast<int>(reps.size()) > budget.n_lidar) {
    auto pick = rng.sample_without_replacement(static_cast<int64_t>(reps.size()), budget.n_lidar);
    std::sort(pick.begin(), pick.end());
    std::vector<int64_t> kept;
    kept.reserve(pick.size());
    for (int64_t i : pick) kept.push_back(reps[static_cast<size_t>(i)]);
    reps = std::move(kept);
  }
  for (int64_t p : reps) rays.push_back(make_lidar_ray(frame, wcfg, p));

  // Camera: equal per-class quotas over the classes present, remainder
  // uniform over what is left.
  std::map<uint8_t, std::vector<PixelRef>> by_class;
  for (size_t view = 0; view < frame.image_semantics.size(); ++view) {
    const auto& sem = frame.image_semantics[view];
    for (int row = 0; row < rig.height; ++row) {
      for (int col = 0; col < rig.width; ++col) {
        const uint8_t cls = sem[static_cast<size_t>(row * rig.width + col)];
        by_class[cls].push_back({static_cast<int>(view), row, col});
      }
    }
  }
  std::vector<PixelRef> leftovers;
  int taken = 0;
  const int quota = budget.n_camera / std::max<int>(1, static_cast<int>(by_class.size()));
  for (auto& [cls, pixels] : by_class) {
    const int want = std::min<int>(quota, static_cast<int>(pixels.size()));
    auto pick = rng.permutation(static_cast<int64_t>(pixels.size()));
    for (int i = 0; i < static_cast<int>(pixels.size()); ++i) {
      const auto& px = pixels[static_cast<size_t>(pick[static_cast<size_t>(i)])];
      if (i < want) {
        rays.push_back(make_camera_ray(frame, rig, px));
        ++taken;
      } else {
        leftovers.push_back(px);
      }
    }
  }
  const int remainder = std::min<int>(budget.n_camera - taken, static_cast<int>(leftovers.size()));
  if (remainder > 0) {
    auto pick = rng.sample_without_replacement(static_cast<int64_t>(leftovers.size()), remainder);
    for (int64_t i : pick) rays.push_back(make_camera_ray(frame, rig, leftovers[static_cast<size_t>(i)]));
  }

  // Dynamic quota: rays whose ground-truth hit point lies inside a moving
  // actor's box, drawn over both sensor kinds, tagged.
  std::vector<Ray> dynamic_pool;
  bool any_dynamic = false;
  for (const auto& b : frame.boxes) any_dynamic = any_dynamic || b.is_dynamic();
  if (any_dynamic && budget.n_dynamic > 0) {
    for (int64_t p = 0; p < n_points; ++p) {
      const sim::Vec3 hit{frame.lidar_points[p * 3 + 0], frame.lidar_points[p * 3 + 1],
                          frame.lidar_points[p * 3 + 2]};
      if (in_dynamic_box(frame, hit)) dynamic_pool.push_back(make_lidar_ray(frame, wcfg, p));
    }
    for (size_t view = 0; view < frame.image_semantics.size(); ++view) {
      for (int row = 0; row < rig.height; ++row) {
        for (int col = 0; col < rig.width; ++col) {
          PixelRef px{static_cast<int>(view), row, col};
          Ray r = make_camera_ray(frame, rig, px);
          if (!r.hit) continue;
          const sim::Vec3 hit = r.origin + r.dir * r.depth_target;
          if (in_dynamic_box(frame, hit)) dynamic_pool.push_back(r);
        }
      }
    }
    const int want = std::min<int>(budget.n_dynamic, static_cast<int>(dynamic_pool.size()));
    auto pick = rng.sample_without_replacement(static_cast<int64_t>(dynamic_pool.size()), want);
    for (int64_t i : pick) {
      Ray r = dynamic_pool[static_cast<size_t>(i)];
      r.dynamic_tag = true;
      rays.push_back(r);
    }
  }
  return rays;
}

WaypointSchedule WaypointSchedule::uniform(int n, double near, double far) {
  if (n < 1 || near <= 0.0 || far <= near) {
    throw std::invalid_argument("waypoint schedule: need n >= 1 and 0 < near < far");
  }
  WaypointSchedule s;
  s.distances.resize(static_cast<size_t>(n));
  s.deltas.resize(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    s.distances[static_cast<size_t>(j)] =
        n == 1 ? near : near + (far - near) * j / (n - 1);
  }
  double prev = 0.0;
  for (int j = 0; j < n; ++j) {
    s.deltas[static_cast<size_t>(j)] = s.distances[static_cast<size_t>(j)] - prev;
    prev = s.distances[static_cast<size_t>(j)];
  }
  return s;
}

Tensor sample_waypoints(const Ray& ray, const WaypointSchedule& sched) {
  const int n = sched.count();
  Tensor out = Tensor::zeros({n, 3});
  for (int j = 0; j < n; ++j) {
    const double l = sched.distances[static_cast<size_t>(j)];
    out[j * 3 + 0] = ray.origin.x + l * ray.dir.x;
    out[j * 3 + 1] = ray.origin.y + l * ray.dir.y;
    out[j * 3 + 2] = ray.origin.z + l * ray.dir.z;
  }
  return out;
}

Tensor waypoint_index_coords(const std::vector<Ray>& rays, const WaypointSchedule& sched,
                             const ModelConfig& cfg, Tensor* inside_mask) {
  const int n = sched.count();
  const int total = static_cast<int>(rays.size()) * n;
  const GridSpec gs = cfg.grid();
  Tensor idx = Tensor::zeros({total, 3});
  if (inside_mask) *inside_mask = Tensor::zeros({total, 1});
  int64_t row = 0;
  for (const auto& ray : rays) {
    for (int j = 0; j < n; ++j, ++row) {
      const double l = sched.distances[static_cast<size_t>(j)];
      const double x = ray.origin.x + l * ray.dir.x;
      const double y = ray.origin.y + l * ray.dir.y;
      const double z = ray.origin.z + l * ray.dir.z;
      const sim::Vec2 rc = gs.to_index({x, y});
      idx[row * 3 + 0] = rc.x;                              // grid row (y)
      idx[row * 3 + 1] = rc.y;                              // grid col (x)
      idx[row * 3 + 2] = z / cfg.z_bin_size() - 0.5;        // height bin
      const bool inside = std::abs(x) <= cfg.extent / 2 && std::abs(y) <= cfg.extent / 2 &&
                          z >= 0.0 && z <= cfg.z_max;
      if (inside_mask) (*inside_mask)[row] = inside ? 1.0 : 0.0;
    }
  }
  return idx;
}

OsmField::OsmField(const ModelConfig& cfg, ParamSet& ps, Rng& rng) : cfg_(cfg) {
  const int zc = cfg.z_bins * cfg.cstar;
  const int k = cfg.c2h_kernel;
  c2h_ = Conv2d(ps, "osm.c2h", k, k, cfg.latent_c, zc, 1, k / 2, rng);
  const int pe_dim = 3 * 4 * 2;
  trunk1_ = Linear(ps, "osm.field.trunk1", cfg.cstar + pe_dim, 64, rng);
  trunk2_ = Linear(ps, "osm.field.trunk2", 64, 64, rng);
  sem_head_ = Linear(ps, "osm.field.sem", 64, sim::kNumClasses, rng);
  color_head_ = Linear(ps, "osm.field.color", 64, 3, rng);
  sigma_head_ = Linear(ps, "osm.field.sigma", 64, 1, rng);
}

Var OsmField::channel_to_height(const Var& bev) const {
  if (bev->value.rank() != 3 || bev->value.dim(2) != cfg_.latent_c) {
    throw std::invalid_argument("channel_to_height: expected [H,W," +
                                std::to_string(cfg_.latent_c) + "], got " +
                                shape_str(bev->value.shape()));
  }
  Var conv = c2h_.apply(bev);  // [H,W,Z*C*]
  return reshape(conv, {bev->value.dim(0), bev->value.dim(1), cfg_.z_bins, cfg_.cstar});
}

Tensor OsmField::position_encoding(const Tensor& positions) const {
  const int n = positions.dim(0);
  Tensor pe = Tensor::zeros({n, 24});
  const double norm[3] = {cfg_.extent / 2, cfg_.extent / 2, cfg_.z_max / 2};
  const double off[3] = {0.0, 0.0, cfg_.z_max / 2};
  for (int i = 0; i < n; ++i) {
    int k = 0;
    for (int d = 0; d < 3; ++d) {
      const double xd = (positions[static_cast<int64_t>(i) * 3 + d] - off[d]) / norm[d];
      for (int l = 0; l < 4; ++l) {
        const double arg = std::pow(2.0, l) * std::numbers::pi * xd;
        pe[static_cast<int64_t>(i) * 24 + k++] = std::cos(arg);
        pe[static_cast<int64_t>(i) * 24 + k++] = std::sin(arg);
      }
    }
  }
  return pe;
}

std::pair<Var, Var> OsmField::field(const Var& v, const Tensor& positions) const {
  Var input = concat({v, constant(position_encoding(positions))}, 1);
  Var h = num::tanh(trunk1_.apply(input));
  h = num::tanh(trunk2_.apply(h));
  Var sem = sem_head_.apply(h);
  Var color = sigmoid(color_head_.apply(h));
  Var sigma = softplus(sigma_head_.apply(h));
  return {concat({sem, color}, 1), sigma};
}

RenderOutput OsmField::render(const Var& volume, const std::vector<Ray>& rays,
                              const WaypointSchedule& sched) const {
  const int n_rays = static_cast<int>(rays.size());
  const int n = sched.count();
  const int total = n_rays * n;

  Tensor mask;
  Tensor idx = waypoint_index_coords(rays, sched, cfg_, &mask);
  Var feats = mul_colvec(trilinear_gather(volume, idx), constant(mask));  // [total, C*]

  // Positions for PE, one row per waypoint.
  Tensor pos = Tensor::zeros({total, 3});
  {
    int64_t row = 0;
    for (const auto& ray : rays) {
      for (int j = 0; j < n; ++j, ++row) {
        const double l = sched.distances[static_cast<size_t>(j)];
        pos[row * 3 + 0] = ray.origin.x + l * ray.dir.x;
        pos[row * 3 + 1] = ray.origin.y + l * ray.dir.y;
        pos[row * 3 + 2] = ray.origin.z + l * ray.dir.z;
      }
    }
  }
  auto [attrs, sigma_flat] = field(feats, pos);
  Var sigma = reshape(sigma_flat, {n_rays, n});
  Tensor delta({n}, sched.deltas);
  Var weights = render_weights(sigma, delta);  // [N, n]

  Var w_col = reshape(weights, {total, 1});
  auto accumulate = [&](const Var& per_waypoint, int channels) {
    Var weighted = mul_colvec(per_waypoint, w_col);
    return sum_axis(reshape(weighted, {n_rays, n, channels}), 1);
  };
  RenderOutput out;
  out.weights = weights;
  out.tau = transmittance(sigma->value, delta);
  // Split attrs into semantic and color parts via constant selectors.
  const int ns = sim::kNumClasses;
  Tensor sel_sem = Tensor::zeros({ns + 3, ns});
  for (int i = 0; i < ns; ++i) sel_sem[static_cast<int64_t>(i) * ns + i] = 1.0;
  Tensor sel_col = Tensor::zeros({ns + 3, 3});
  for (int i = 0; i < 3; ++i) sel_col[static_cast<int64_t>(ns + i) * 3 + i] = 1.0;
  Var sem_per_wp = matmul(attrs, constant(sel_sem));
  Var col_per_wp = matmul(attrs, constant(sel_col));
  out.sem_logits = accumulate(sem_per_wp, ns);
  out.color = accumulate(col_per_wp, 3);
  Tensor lambda_col({n, 1}, sched.distances);
  out.depth = matmul(weights, constant(lambda_col));
  return out;
}

RenderOutput OsmField::render_from_bev(const Var& bev, const std::vector<Ray>& rays,
                                       const WaypointSchedule& sched) const {
  return render(channel_to_height(bev), rays, sched);
}

SceneLoss scene_loss(const RenderOutput& render, const std::vector<Ray>& rays) {
  std::vector<int64_t> cam_idx, cam_hit_idx, lidar_idx;
  std::vector<int> sem_targets;
  for (size_t i = 0; i < rays.size(); ++i) {
    if (rays[i].source == Ray::Source::kCamera) {
      cam_idx.push_back(static_cast<int64_t>(i));
      sem_targets.push_back(rays[i].semantic_target);
      if (rays[i].hit) cam_hit_idx.push_back(static_cast<int64_t>(i));
    } else {
      lidar_idx.push_back(static_cast<int64_t>(i));
    }
  }
  SceneLoss loss;
  Var zero = constant(Tensor(0.0));
  loss.sem = zero;
  loss.rgb = zero;
  loss.depth = zero;

  if (!cam_idx.empty()) {
    loss.sem = cross_entropy_mean(gather_rows(render.sem_logits, cam_idx), sem_targets);
    loss.has_sem = true;
  }
  if (!cam_hit_idx.empty()) {
    Tensor target = Tensor::zeros({static_cast<int>(cam_hit_idx.size()), 3});
    for (size_t i = 0; i < cam_hit_idx.size(); ++i) {
      const auto& r = rays[static_cast<size_t>(cam_hit_idx[i])];
      target[static_cast<int64_t>(i) * 3 + 0] = r.color_target.r;
      target[static_cast<int64_t>(i) * 3 + 1] = r.color_target.g;
      target[static_cast<int64_t>(i) * 3 + 2] = r.color_target.b;
    }
    loss.rgb = mse(gather_rows(render.color, cam_hit_idx), constant(target));
    loss.has_rgb = true;
  }
  if (!lidar_idx.empty()) {
    Tensor target = Tensor::zeros({static_cast<int>(lidar_idx.size()), 1});
    for (size_t i = 0; i < lidar_idx.size(); ++i) {
      target[static_cast<int64_t>(i)] = rays[static_cast<size_t>(lidar_idx[i])].depth_target;
    }
    loss.depth = mse(gather_rows(render.depth, lidar_idx), constant(target));
    loss.has_depth = true;
  }
  return loss;
}

}  // namespace bevworld::model
