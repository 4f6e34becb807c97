#include <benchmark/benchmark.h>

#include "bevworld/model/osm.hpp"
#include "bevworld/numerics/rng.hpp"

using namespace bevworld;
using namespace bevworld::model;

static void BM_VolumeRender(benchmark::State& state) {
  const int n_rays = static_cast<int>(state.range(0));
  ModelConfig cfg;
  num::ParamSet ps;
  num::Rng rng(1);
  OsmField field(cfg, ps, rng);
  num::Tensor bev = num::Tensor::zeros({cfg.grid_h, cfg.grid_w, cfg.latent_c});
  for (int64_t i = 0; i < bev.numel(); ++i) bev[i] = rng.uniform(-1.0, 1.0);
  const auto sched = WaypointSchedule::uniform(cfg.n_waypoints, 0.5, 40.0);
  std::vector<Ray> rays;
  for (int i = 0; i < n_rays; ++i) {
    Ray r;
    r.origin = {0.0, 0.0, 1.8};
    const double az = 6.28318 * i / n_rays;
    r.dir = sim::Vec3{std::cos(az), std::sin(az), -0.15}.normalized();
    r.source = Ray::Source::kLidar;
    r.depth_target = 10.0;
    rays.push_back(r);
  }
  ps.set_trainable(false);
  for (auto _ : state) {
    auto out = field.render_from_bev(num::constant(bev), rays, sched);
    benchmark::DoNotOptimize(out.depth->value.data());
  }
}
BENCHMARK(BM_VolumeRender)->Arg(128)->Arg(512)->Arg(1408);
