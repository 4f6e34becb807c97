#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "bevworld/numerics/rng.hpp"
#include "bevworld/sim/io.hpp"
#include "bevworld/sim/world.hpp"

using namespace bevworld;
using namespace bevworld::sim;

namespace {

WorldConfig tiny_config() {
  WorldConfig cfg;
  cfg.n_frames = 6;
  cfg.n_actors_min = 2;
  cfg.n_actors_max = 4;
  return cfg;
}

// Independent slab-test oracle for axis-aligned boxes (box frame == world).
std::optional<double> aabb_oracle(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi) {
  double tmin = -1e300, tmax = 1e300;
  const double os[3] = {o.x, o.y, o.z}, ds[3] = {d.x, d.y, d.z};
  const double los[3] = {lo.x, lo.y, lo.z}, his[3] = {hi.x, hi.y, hi.z};
  for (int i = 0; i < 3; ++i) {
    if (std::abs(ds[i]) < 1e-14) {
      if (os[i] < los[i] || os[i] > his[i]) return std::nullopt;
      continue;
    }
    double t1 = (los[i] - os[i]) / ds[i], t2 = (his[i] - os[i]) / ds[i];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return std::nullopt;
  }
  if (tmax < 1e-9) return std::nullopt;
  return tmin > 1e-9 ? tmin : tmax;
}

}  // namespace

TEST_CASE("planar pose algebra") {
  SUBCASE("compose with inverse is identity within 1e-9") {
    num::Rng rng(1);
    for (int i = 0; i < 100; ++i) {
      PlanarPose p{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-3.14, 3.14)};
      const PlanarPose id = compose(p, p.inverse());
      CHECK(std::abs(id.x) < 1e-9);
      CHECK(std::abs(id.y) < 1e-9);
      CHECK(std::abs(id.yaw) < 1e-9);
    }
  }
  SUBCASE("yaw normalization lands in (-pi, pi]") {
    CHECK(normalize_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(normalize_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(normalize_angle(3 * std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(normalize_angle(7.0) == doctest::Approx(7.0 - 2 * std::numbers::pi));
  }
  SUBCASE("frame_transform convention: ego advance maps ahead-point closer") {
    const PlanarPose at_t{0, 0, 0};
    const PlanarPose at_tk{1.25, 0, 0};
    const PlanarPose t = frame_transform(at_t, at_tk);
    const Vec2 p = t.apply(Vec2{5.0, 0.0});
    CHECK(p.x == doctest::Approx(3.75).epsilon(1e-12));
    CHECK(p.y == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("frame_transform convention: pure yaw pi/2 sends (1,0) to (0,-1)") {
    const PlanarPose t = frame_transform(PlanarPose{0, 0, 0}, PlanarPose{0, 0, std::numbers::pi / 2});
    const Vec2 p = t.apply(Vec2{1.0, 0.0});
    CHECK(p.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.y == doctest::Approx(-1.0).epsilon(1e-12));
  }
}

TEST_CASE("raycast") {
  SUBCASE("straight down hits the road at the right depth") {
    const auto r = raycast({}, 0.0, {0, 0, 2}, {0, 0, -1});
    CHECK(r.hit);
    CHECK(r.depth == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.semantic_class == kRoad);
  }
  SUBCASE("parallel to the ground with no actors misses") {
    const auto r = raycast({}, 0.0, {0, 0, 2}, {1, 0, 0});
    CHECK_FALSE(r.hit);
    CHECK(r.semantic_class == kBackground);
    CHECK(r.depth == doctest::Approx(45.0));
  }
  SUBCASE("unit cube ahead: depth 4.5") {
    BoxActor cube;
    cube.pose0 = {5.0, 0.0, 0.0};
    cube.length = cube.width = cube.height = 1.0;
    const auto r = raycast({cube}, 0.0, {0, 0, 0.5}, {1, 0, 0});
    CHECK(r.hit);
    CHECK(r.depth == doctest::Approx(4.5).epsilon(1e-12));
    CHECK(r.semantic_class == kVehicle);
  }
  SUBCASE("oriented-box intersection matches the axis-aligned oracle") {
    num::Rng rng(7);
    for (int i = 0; i < 200; ++i) {
      BoxActor b;
      b.pose0 = {rng.uniform(-5, 5), rng.uniform(-5, 5), 0.0};  // axis-aligned
      b.length = rng.uniform(0.5, 3.0);
      b.width = rng.uniform(0.5, 3.0);
      b.height = rng.uniform(0.5, 2.0);
      const Vec3 o{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(0.2, 3.0)};
      Vec3 d{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      if (d.norm() < 1e-6) continue;
      d = d.normalized();
      const auto got = ray_box_intersect(o, d, b.box_at(0.0));
      const Vec3 lo{b.pose0.x - b.length / 2, b.pose0.y - b.width / 2, 0.0};
      const Vec3 hi{b.pose0.x + b.length / 2, b.pose0.y + b.width / 2, b.height};
      const auto want = aabb_oracle(o, d, lo, hi);
      CHECK(got.has_value() == want.has_value());
      if (got && want) CHECK(*got == doctest::Approx(*want).epsilon(1e-9));
    }
  }
}

TEST_CASE("episode generation") {
  const WorldConfig cfg = tiny_config();
  SUBCASE("same config and seed give bit-identical episodes") {
    const Episode a = generate_episode(cfg, 42);
    const Episode b = generate_episode(cfg, 42);
    CHECK(a == b);
  }
  SUBCASE("different seeds differ") {
    const Episode a = generate_episode(cfg, 42);
    const Episode b = generate_episode(cfg, 43);
    CHECK_FALSE(a == b);
  }
  SUBCASE("dynamics disabled: every actor static") {
    WorldConfig c2 = cfg;
    c2.dynamics = false;
    const Episode ep = generate_episode(c2, 9);
    for (const auto& a : ep.actors) CHECK_FALSE(a.is_dynamic());
  }
  SUBCASE("dynamics requested: at least one moving actor") {
    for (uint64_t seed = 0; seed < 8; ++seed) {
      const Episode ep = generate_episode(cfg, seed);
      bool any = false;
      for (const auto& a : ep.actors) any = any || a.is_dynamic();
      CHECK(any);
    }
  }
  SUBCASE("timestamps strictly increasing on the 0.5 s grid") {
    const Episode ep = generate_episode(cfg, 4);
    for (size_t i = 0; i < ep.frames.size(); ++i) {
      CHECK(ep.frames[i].timestamp == doctest::Approx(0.5 * i).epsilon(1e-12));
    }
  }
  SUBCASE("degenerate configs are rejected") {
    WorldConfig bad = cfg;
    bad.n_frames = 0;
    CHECK_THROWS_AS(generate_episode(bad, 1), std::invalid_argument);
    bad = cfg;
    bad.n_cameras = 0;
    CHECK_THROWS_AS(generate_episode(bad, 1), std::invalid_argument);
  }
  SUBCASE("actor pose is exactly linear in t") {
    BoxActor a;
    a.pose0 = {1.0, 2.0, 0.3};
    a.vx = 0.5;
    a.vy = -0.25;
    const PlanarPose p = a.pose_at(3.0);
    CHECK(p.x == 1.0 + 0.5 * 3.0);
    CHECK(p.y == 2.0 - 0.25 * 3.0);
    CHECK(p.yaw == 0.3);
  }
}

TEST_CASE("sensor consistency") {
  const WorldConfig cfg = tiny_config();
  const Episode ep = generate_episode(cfg, 11);

  SUBCASE("lidar points lie on surfaces: re-intersection reproduces range") {
    for (const auto& frame : ep.frames) {
      const Vec3 lc = lidar_center(cfg);
      const double t = frame.timestamp;
      for (int64_t i = 0; i < frame.lidar_points.dim(0); ++i) {
        const Vec3 p{frame.lidar_points[i * 3 + 0], frame.lidar_points[i * 3 + 1],
                     frame.lidar_points[i * 3 + 2]};
        const Vec3 rel = p - lc;
        const double range = rel.norm();
        const Vec3 o_w = frame.ego.apply(lc);
        const Vec3 d_w = frame.ego.rotate(rel * (1.0 / range));
        const auto r = raycast(frame.boxes, 0.0, o_w, d_w, cfg.max_range);
        (void)t;
        REQUIRE(r.hit);
        CHECK(r.depth == doctest::Approx(range).epsilon(1e-9));
      }
    }
  }

  SUBCASE("unprojected pixels land on surfaces of the labeled class") {
    num::Rng rng(3);
    const auto& frame = ep.frames[2];
    for (int trial = 0; trial < 50; ++trial) {
      const int view = static_cast<int>(rng.randint(cfg.n_cameras));
      const int u = static_cast<int>(rng.randint(cfg.img_w));
      const int v = static_cast<int>(rng.randint(cfg.img_h));
      const int64_t px = static_cast<int64_t>(v) * cfg.img_w + u;
      const uint8_t cls = frame.image_semantics[static_cast<size_t>(view)][static_cast<size_t>(px)];
      const double depth = frame.image_depth[static_cast<size_t>(view)][px];
      CHECK(depth > 0.0);
      if (cls == kBackground) continue;
      const Vec3 dir = ep.rig.pixel_dir(view, u + 0.5, v + 0.5);
      const Vec3 o_w = frame.ego.apply(ep.rig.center(view));
      const Vec3 d_w = frame.ego.rotate(dir);
      const auto r = raycast(frame.boxes, 0.0, o_w, d_w, cfg.max_range);
      REQUIRE(r.hit);
      CHECK(r.semantic_class == cls);
      CHECK(r.depth == doctest::Approx(depth).epsilon(1e-9));
    }
  }

  SUBCASE("static world: lidar world points are time-invariant surfaces") {
    WorldConfig c2 = cfg;
    c2.dynamics = false;
    const Episode st = generate_episode(c2, 5);
    const auto& f0 = st.frames[1];
    const auto& f1 = st.frames[4];
    const Vec3 lc = lidar_center(c2);
    for (int64_t i = 0; i < f0.lidar_points.dim(0); i += 7) {
      const Vec3 p{f0.lidar_points[i * 3 + 0], f0.lidar_points[i * 3 + 1],
                   f0.lidar_points[i * 3 + 2]};
      const Vec3 o_w = f0.ego.apply(lc);
      const Vec3 p_w = f0.ego.apply(p);
      const Vec3 rel = p_w - o_w;
      const double range = rel.norm();
      // The same world ray at the later time must reproduce the same hit.
      const auto r = raycast(f1.boxes, 0.0, o_w, rel * (1.0 / range), c2.max_range);
      REQUIRE(r.hit);
      CHECK(r.depth == doctest::Approx(range).epsilon(1e-9));
    }
  }

  SUBCASE("static-world coherence: ego-motion transform maps frame-t hits to frame-t+k hits") {
    WorldConfig c2 = cfg;
    c2.dynamics = false;
    const Episode st = generate_episode(c2, 6);
    const auto& fa = st.frames[0];
    const auto& fb = st.frames[3];
    const PlanarPose t_ab = frame_transform(fa.ego, fb.ego);
    for (int64_t i = 0; i < fa.lidar_points.dim(0); i += 5) {
      const Vec3 p_a{fa.lidar_points[i * 3 + 0], fa.lidar_points[i * 3 + 1],
                     fa.lidar_points[i * 3 + 2]};
      const Vec3 p_b = t_ab.apply(p_a);
      const Vec3 direct = fb.ego.inverse().apply(fa.ego.apply(p_a));
      CHECK(p_b.x == doctest::Approx(direct.x).epsilon(1e-9));
      CHECK(p_b.y == doctest::Approx(direct.y).epsilon(1e-9));
      CHECK(std::abs(p_b.x - direct.x) < 1e-6);
      CHECK(std::abs(p_b.y - direct.y) < 1e-6);
    }
  }
}

TEST_CASE("episode persistence") {
  namespace fs = std::filesystem;
  const WorldConfig cfg = tiny_config();
  const Episode ep = generate_episode(cfg, 42);
  const std::string path = (fs::temp_directory_path() / "bw_ep_test.bwep").string();

  SUBCASE("round-trip equality, bit-exact") {
    save_episode(ep, path);
    const Episode back = load_episode(path);
    CHECK(ep == back);
  }
  SUBCASE("truncated file errors with a byte offset, no crash") {
    save_episode(ep, path);
    const auto size = fs::file_size(path);
    fs::resize_file(path, size / 2);
    CHECK_THROWS_WITH_AS(load_episode(path), doctest::Contains("byte offset"),
                         std::runtime_error);
  }
  SUBCASE("bad magic is rejected") {
    std::ofstream out(path, std::ios::binary);
    out << "NOPEnothing";
    out.close();
    CHECK_THROWS_AS(load_episode(path), std::runtime_error);
  }
  SUBCASE("trailing bytes are rejected") {
    save_episode(ep, path);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << "x";
    out.close();
    CHECK_THROWS_WITH_AS(load_episode(path), doctest::Contains("trailing"), std::runtime_error);
  }
  fs::remove(path);
}

TEST_CASE("bev occupancy ground truth") {
  BoxActor car;
  car.id = 0;
  car.semantic_class = kVehicle;
  car.length = 4.0;
  car.width = 2.0;
  car.height = 1.5;
  car.pose0 = {6.0, 0.0, 0.0};
  car.vx = 2.0;
  const PlanarPose ego{0, 0, 0};
  const auto gt = bev_occupancy({car}, ego, ego, 0.0, 32, 32, 1.25, 40.0);
  // Cell covering (6, 0): j = 6/1.25 + 16 - 0.5 -> cell center (6.25 - 20 + ...)
  int vehicle_cells = 0, ego_cells = 0;
  double vmax = 0.0;
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 32; ++j) {
      const auto c = gt.classes[static_cast<size_t>(i * 32 + j)];
      if (c == kVehicle) {
        ++vehicle_cells;
        vmax = std::max(vmax, gt.velocity[(i * 32 + j) * 2 + 0]);
      }
      if (c == kEgoIgnored) ++ego_cells;
    }
  }
  CHECK(vehicle_cells > 0);
  CHECK(ego_cells > 0);
  CHECK(vmax == doctest::Approx(2.0));

  SUBCASE("velocity rotates into the reference frame") {
    const PlanarPose ego_rot{0, 0, std::numbers::pi / 2};
    const auto gt2 = bev_occupancy({car}, ego_rot, ego_rot, 0.0, 32, 32, 1.25, 40.0);
    bool found = false;
    for (int64_t i = 0; i < 32 * 32; ++i) {
      if (gt2.classes[static_cast<size_t>(i)] == kVehicle) {
        CHECK(gt2.velocity[i * 2 + 0] == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(gt2.velocity[i * 2 + 1] == doctest::Approx(-2.0).epsilon(1e-9));
        found = true;
        break;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("clearance and primitives") {
  SUBCASE("rect distance basics") {
    OrientedBox a{{0, 0, 0}, 2, 2, 1};
    OrientedBox b{{5, 0, 0}, 2, 2, 1};
    CHECK(rect_distance(a, b) == doctest::Approx(3.0).epsilon(1e-9));
    OrientedBox c{{1.5, 0, 0}, 2, 2, 1};
    CHECK(rect_distance(a, c) == 0.0);
  }
  SUBCASE("clearance cap applies in an empty scene") {
    const auto poses = roll_constant_curvature({0, 0, 0}, 2.0, 0.0, 0.5, 6);
    std::vector<double> times{0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    CHECK(min_clearance({}, poses, times, 5.0) == 5.0);
  }
  SUBCASE("constant-curvature rollout returns to heading after full circle") {
    const double kappa = 0.5;
    const double v = 1.0;
    const int n = 100;
    const double dt = 2 * std::numbers::pi / (kappa * v) / n;
    const auto poses = roll_constant_curvature({0, 0, 0}, v, kappa, dt, n);
    CHECK(std::abs(poses.back().x) < 1e-6);
    CHECK(std::abs(poses.back().y) < 1e-6);
  }
}

TEST_CASE("planner scenarios") {
  WorldConfig cfg = tiny_config();
  cfg.n_frames = 10;
  SUBCASE("deterministic per seed") {
    const Episode a = generate_planner_scenario(cfg, 3, true);
    const Episode b = generate_planner_scenario(cfg, 3, true);
    CHECK(a == b);
  }
  SUBCASE("crossing scenario has a moving obstacle, static has none") {
    const Episode cross = generate_planner_scenario(cfg, 5, true);
    bool any_dyn = false;
    for (const auto& a : cross.actors) any_dyn = any_dyn || a.is_dynamic();
    CHECK(any_dyn);
    const Episode stat = generate_planner_scenario(cfg, 5, false);
    for (const auto& a : stat.actors) CHECK_FALSE(a.is_dynamic());
  }
}
