#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bevworld/eval/chamfer.hpp"
#include "bevworld/eval/forecast.hpp"
#include "bevworld/eval/metrics.hpp"
#include "bevworld/numerics/rng.hpp"

using namespace bevworld;
using num::Rng;
using num::Tensor;

namespace {

// O(|A|*|B|) oracle, independent of the hash-grid path. Distances are
// composed identically (dx*dx + dy*dy + dz*dz) so results compare bitwise.
double chamfer_bruteforce(const Tensor& a, const Tensor& b) {
  auto directional = [](const Tensor& from, const Tensor& to) {
    std::vector<double> mins;
    for (int64_t i = 0; i < from.dim(0); ++i) {
      double best = 1e300;
      for (int64_t j = 0; j < to.dim(0); ++j) {
        const double dx = to[j * 3 + 0] - from[i * 3 + 0];
        const double dy = to[j * 3 + 1] - from[i * 3 + 1];
        const double dz = to[j * 3 + 2] - from[i * 3 + 2];
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      mins.push_back(best);
    }
    return eval::pairwise_sum(mins) / static_cast<double>(mins.size());
  };
  return directional(a, b) + directional(b, a);
}

Tensor cloud(int n, uint64_t seed, double spread = 18.0) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({n, 3});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-spread, spread);
  return t;
}

}  // namespace

TEST_CASE("chamfer distance") {
  SUBCASE("identical sets give zero") {
    const Tensor a = cloud(50, 1);
    const auto r = eval::chamfer(a, a, 20.0);
    CHECK(r.cd == 0.0);
  }
  SUBCASE("two points 2 m apart give 4 + 4 = 8") {
    Tensor a({1, 3}, {0, 0, 0});
    Tensor b({1, 3}, {2, 0, 0});
    CHECK(eval::chamfer(a, b, 20.0).cd == doctest::Approx(8.0).epsilon(1e-15));
  }
  SUBCASE("a subset matches exactly: both terms' matched points contribute zero") {
    const Tensor a = cloud(40, 2);
    // B = first 10 points of A.
    std::vector<double> sub(a.vec().begin(), a.vec().begin() + 30);
    Tensor b({10, 3}, std::move(sub));
    const auto r = eval::chamfer(a, b, 20.0);
    CHECK(r.term_ba == 0.0);  // every B point sits on an A point
    CHECK(r.term_ab > 0.0);
  }
  SUBCASE("fast path equals brute force exactly, 100 random pairs") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      const int na = 1 + static_cast<int>(rng.randint(200));
      const int nb = 1 + static_cast<int>(rng.randint(200));
      const Tensor a = cloud(na, 1000 + static_cast<uint64_t>(trial));
      const Tensor b = cloud(nb, 2000 + static_cast<uint64_t>(trial));
      const auto fast = eval::chamfer(a, b, 20.0);
      const double brute = chamfer_bruteforce(eval::filter_range(a, 20.0),
                                              eval::filter_range(b, 20.0));
      CHECK(fast.cd == brute);
    }
  }
  SUBCASE("range filtering applies to x and y; empty result names the set") {
    Tensor a({2, 3}, {0, 0, 0, 50, 0, 0});
    Tensor b({1, 3}, {90, 90, 0});
    CHECK_THROWS_WITH_AS(eval::chamfer(a, b, 20.0), doctest::Contains("set B"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(eval::chamfer(b, a, 20.0), doctest::Contains("set A"),
                         std::invalid_argument);
    // z is not filtered.
    Tensor c({1, 3}, {0, 0, 100});
    CHECK_NOTHROW(eval::chamfer(a, c, 20.0));
  }
}

TEST_CASE("pairwise sum is deterministic and accurate") {
  Rng rng(4);
  std::vector<double> v(1023);
  for (auto& x : v) x = rng.uniform(-1, 1);
  const double s1 = eval::pairwise_sum(v);
  const double s2 = eval::pairwise_sum(v);
  CHECK(s1 == s2);
  long double ref = 0.0;
  for (double x : v) ref += x;
  CHECK(s1 == doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
}

TEST_CASE("occupancy metrics on hand-computed 3x3 grids") {
  using sim::kBarrier;
  using sim::kEgoIgnored;
  using sim::kRoad;
  using sim::kVehicle;
  // gt:   V V R     pred: V R R
  //       R R R           R R R
  //       R R E           B R E   (E = ego-ignored, excluded)
  const std::vector<uint8_t> gt{kVehicle, kVehicle, kRoad, kRoad, kRoad,
                                kRoad,    kRoad,    kRoad, kEgoIgnored};
  const std::vector<uint8_t> pred{kVehicle, kRoad, kRoad, kRoad, kRoad,
                                  kRoad,    kBarrier, kRoad, kVehicle};
  Tensor gt_vel = Tensor::zeros({3, 3, 2});
  gt_vel[0 * 2 + 0] = 2.0;  // cell 0 moves +x at 2
  gt_vel[1 * 2 + 0] = 2.0;
  Tensor pred_flow = Tensor::zeros({3, 3, 2});
  pred_flow[0 * 2 + 0] = 1.5;
  pred_flow[1 * 2 + 0] = 2.0;

  const auto m = eval::occupancy_metrics(pred, gt, pred_flow, gt_vel);
  // vehicle: inter 1, union 2 -> 0.5; road: inter 5, union 7 -> 5/7;
  // barrier: union 1 inter 0 -> 0. mIoU = (0.5 + 5/7 + 0)/3.
  CHECK(m.miou == doctest::Approx((0.5 + 5.0 / 7.0 + 0.0) / 3.0).epsilon(1e-12));
  // occupied: gt {0,1}, pred {0,6}; inter {0}, union {0,1,6} -> 1/3.
  CHECK(m.iou_geo == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // dynamic occupied cells: 0 and 1; errors 0.5 and 0 -> mAVE 0.25.
  CHECK(m.dynamic_cells == 2);
  CHECK(m.mave == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("class decoding takes the argmax over the last axis") {
  Tensor logits = Tensor::zeros({1, 2, 6});
  logits[3] = 5.0;                 // cell 0 -> class 3
  logits[6 + 1] = 2.0;             // cell 1 -> class 1
  const auto cls = eval::decode_classes(logits);
  CHECK(cls[0] == 3);
  CHECK(cls[1] == 1);
}

TEST_CASE("forecast point clouds") {
  model::ModelConfig mc;
  mc.grid_h = mc.grid_w = 16;
  num::ParamSet ps;
  Rng rng(5);
  model::OsmField field(mc, ps, rng);
  ps.set_trainable(false);
  sim::WorldConfig wc;
  const auto rays = eval::future_lidar_rays(wc);
  const auto sched = model::WaypointSchedule::uniform(16, 0.5, 40.0);

  SUBCASE("point count equals ray count") {
    Tensor grid = Tensor::zeros({16, 16, mc.latent_c});
    const Tensor pts = eval::forecast_pointcloud(field, num::constant(grid), rays, sched);
    CHECK(pts.dim(0) == static_cast<int>(rays.size()));
  }
  SUBCASE("zero latent with strongly negative density bias: degenerate cloud near the origin") {
    ps.get("osm.field.sigma.b")->value.fill(-30.0);  // softplus(-30) ~ 0
    Tensor grid = Tensor::zeros({16, 16, mc.latent_c});
    const Tensor pts = eval::forecast_pointcloud(field, num::constant(grid), rays, sched);
    for (int64_t i = 0; i < pts.dim(0); ++i) {
      const double r = std::hypot(pts[i * 3 + 0], pts[i * 3 + 1]);
      CHECK(r < 1.0);  // essentially zero rendered depth
    }
  }
}
