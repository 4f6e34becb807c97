#include "bevworld/eval/forecast.hpp"

namespace bevworld::eval {

using model::Ray;

std::vector<Ray> future_lidar_rays(const sim::WorldConfig& cfg) {
  std::vector<Ray> rays;
  const sim::Vec3 center = sim::lidar_center(cfg);
  for (const auto& d : sim::lidar_directions(cfg)) {
    Ray r;
    r.source = Ray::Source::kLidar;
    r.origin = center;
    r.dir = d;
    rays.push_back(r);
  }
  return rays;
}

num::Tensor forecast_pointcloud(const model::OsmField& field, const model::Var& latent_grid,
                                const std::vector<Ray>& rays,
                                const model::WaypointSchedule& sched) {
  const auto render = field.render_from_bev(latent_grid, rays, sched);
  const int n = static_cast<int>(rays.size());
  num::Tensor pts = num::Tensor::zeros({n, 3});
  for (int i = 0; i < n; ++i) {
    const double d = render.depth->value[i];
    pts[static_cast<int64_t>(i) * 3 + 0] = rays[static_cast<size_t>(i)].origin.x + d * rays[static_cast<size_t>(i)].dir.x;
    pts[static_cast<int64_t>(i) * 3 + 1] = rays[static_cast<size_t>(i)].origin.y + d * rays[static_cast<size_t>(i)].dir.y;
    pts[static_cast<int64_t>(i) * 3 + 2] = rays[static_cast<size_t>(i)].origin.z + d * rays[static_cast<size_t>(i)].dir.z;
  }
  return pts;
}

}  // namespace bevworld::eval
