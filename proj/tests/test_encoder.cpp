#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bevworld/model/encoder.hpp"
#include "bevworld/numerics/fdcheck.hpp"

using namespace bevworld;
using namespace bevworld::model;
using num::ParamSet;
using num::Rng;
using num::Tensor;
using num::Var;

namespace {

sim::WorldConfig tiny_world() {
  sim::WorldConfig cfg;
  cfg.n_frames = 6;
  cfg.n_actors_min = 2;
  cfg.n_actors_max = 3;
  return cfg;
}

Tensor random_grid(const ModelConfig& mc, uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({mc.grid_h, mc.grid_w, mc.latent_c});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("grid spec axis convention, both directions") {
  GridSpec gs{32, 32, 40.0};
  CHECK(gs.cell() == doctest::Approx(1.25));
  // (i,j) = (0,0) is the (-20,-20) corner cell.
  const auto c00 = gs.cell_center(0, 0);
  CHECK(c00.x == doctest::Approx(0.5 * 1.25 - 20.0));
  CHECK(c00.y == doctest::Approx(0.5 * 1.25 - 20.0));
  const auto c_mid = gs.cell_center(16, 20);
  CHECK(c_mid.x == doctest::Approx((20 + 0.5) * 1.25 - 20.0));
  CHECK(c_mid.y == doctest::Approx((16 + 0.5) * 1.25 - 20.0));
  // Inverse direction: centers land exactly on integer indices.
  for (int i : {0, 7, 31}) {
    for (int j : {0, 15, 31}) {
      const auto idx = gs.to_index(gs.cell_center(i, j));
      CHECK(idx.x == doctest::Approx(i).epsilon(1e-12));
      CHECK(idx.y == doctest::Approx(j).epsilon(1e-12));
    }
  }
}

TEST_CASE("image feature extraction") {
  ModelConfig mc;
  ParamSet ps;
  Rng rng(1);
  WorldEncoder enc(mc, ps, rng);

  SUBCASE("output shape for 24x32 input is 6x8x16") {
    std::vector<Tensor> images(4, Tensor::zeros({24, 32, 3}));
    const auto feats = enc.extract_image_features(images);
    REQUIRE(feats.size() == 4);
    CHECK(feats[0]->value.shape() == num::Shape{6, 8, 16});
  }
  SUBCASE("all-zero images give deterministic bias-only features") {
    std::vector<Tensor> images(2, Tensor::zeros({24, 32, 3}));
    const auto a = enc.extract_image_features(images);
    const auto b = enc.extract_image_features(images);
    for (int64_t i = 0; i < a[0]->value.numel(); ++i) {
      CHECK(a[0]->value[i] == b[0]->value[i]);
    }
    // Interior cells see only zeros + bias, so they are spatially constant.
    const auto& v = a[0]->value;
    for (int c = 0; c < 16; ++c) {
      const double ref = v[(1 * 8 + 1) * 16 + c];
      for (int i = 1; i < 5; ++i) {
        for (int j = 1; j < 7; ++j) CHECK(v[(i * 8 + j) * 16 + c] == doctest::Approx(ref));
      }
    }
  }
  SUBCASE("permuting views permutes features identically") {
    Rng r2(5);
    Tensor img_a = Tensor::zeros({24, 32, 3});
    Tensor img_b = Tensor::zeros({24, 32, 3});
    for (int64_t i = 0; i < img_a.numel(); ++i) {
      img_a[i] = r2.uniform(0, 1);
      img_b[i] = r2.uniform(0, 1);
    }
    const auto fwd = enc.extract_image_features({img_a, img_b});
    const auto rev = enc.extract_image_features({img_b, img_a});
    for (int64_t i = 0; i < fwd[0]->value.numel(); ++i) {
      CHECK(fwd[0]->value[i] == rev[1]->value[i]);
      CHECK(fwd[1]->value[i] == rev[0]->value[i]);
    }
  }
  SUBCASE("wrong view count is rejected") {
    CHECK_THROWS_AS(enc.extract_image_features({}), std::invalid_argument);
  }
}

TEST_CASE("lift to bev") {
  ModelConfig mc;
  ParamSet ps;
  Rng rng(2);
  WorldEncoder enc(mc, ps, rng);

  SUBCASE("invisible cells all receive MLP(0), a shared constant") {
    // Single forward camera: everything behind it is invisible.
    sim::WorldConfig wc = tiny_world();
    wc.n_cameras = 1;
    const auto rig = sim::CameraRig::from_config(wc);
    const auto geo = LiftGeometry::build(rig, mc);
    std::vector<Tensor> images(1, Tensor::zeros({24, 32, 3}));
    {
      Rng r3(9);
      for (int64_t i = 0; i < images[0].numel(); ++i) images[0][i] = r3.uniform(0, 1);
    }
    const auto feats = enc.extract_image_features(images);
    Var bev = enc.lift_to_bev(feats, geo);

    std::vector<int> invisible;
    for (int cell = 0; cell < mc.grid_h * mc.grid_w; ++cell) {
      bool any = false;
      for (const auto& valid : geo.valid) any = any || valid[cell] != 0.0;
      if (!any) invisible.push_back(cell);
    }
    REQUIRE(invisible.size() > 10);
    const int ref = invisible[0];
    for (int cell : invisible) {
      for (int c = 0; c < mc.latent_c; ++c) {
        CHECK(bev->value[static_cast<int64_t>(cell) * mc.latent_c + c] ==
              doctest::Approx(bev->value[static_cast<int64_t>(ref) * mc.latent_c + c]));
      }
    }
  }

  SUBCASE("a cell visible through exactly one (view,height) equals MLP of that sample") {
    // Hand-built geometry: one view, exactly one valid pair at one cell.
    const int hw = mc.grid_h * mc.grid_w;
    LiftGeometry geo;
    geo.pairs = mc.z_bins;
    for (int p = 0; p < mc.z_bins; ++p) {
      geo.points.push_back(Tensor::zeros({hw, 2}));
      geo.valid.push_back(Tensor::zeros({hw, 1}));
    }
    geo.inv_valid_count = Tensor::full({hw, 1}, 1.0);
    const int cell = 5 * mc.grid_w + 9;
    geo.points[2][static_cast<int64_t>(cell) * 2 + 0] = 2.3;
    geo.points[2][static_cast<int64_t>(cell) * 2 + 1] = 4.1;
    geo.valid[2][cell] = 1.0;

    std::vector<Tensor> images(1, Tensor::zeros({24, 32, 3}));
    Rng r3(10);
    for (int64_t i = 0; i < images[0].numel(); ++i) images[0][i] = r3.uniform(0, 1);
    const auto feats = enc.extract_image_features(images);
    Var bev = enc.lift_to_bev(feats, geo);

    Tensor pt({1, 2}, {2.3, 4.1});
    Var sample = num::bilinear_gather(feats[0], pt);
    Var expected = num::tanh(num::linear(sample, ps.get("encoder.lift.mlp.l0.w"),
                                         ps.get("encoder.lift.mlp.l0.b")));
    expected = num::linear(expected, ps.get("encoder.lift.mlp.l1.w"),
                           ps.get("encoder.lift.mlp.l1.b"));
    for (int c = 0; c < mc.latent_c; ++c) {
      CHECK(bev->value[static_cast<int64_t>(cell) * mc.latent_c + c] ==
            doctest::Approx(expected->value[c]).epsilon(1e-12));
    }
  }

  SUBCASE("a red-cube cell's pre-MLP feature differs from a road cell's") {
    sim::WorldConfig wc = tiny_world();
    const auto rig = sim::CameraRig::from_config(wc);
    sim::BoxActor cube;
    cube.id = 0;
    cube.semantic_class = sim::kVehicle;
    cube.length = cube.width = 1.25;
    cube.height = 1.5;
    cube.albedo = {0.95, 0.05, 0.05};
    cube.pose0 = {6.0, 0.0, 0.0};
    const auto frame = sim::render_scene_frame(wc, rig, {cube}, {0, 0, 0}, 0.0);

    const auto geo = LiftGeometry::build(rig, mc);
    const auto feats = enc.extract_image_features(frame.images);
    const GridSpec gs = mc.grid();
    auto pre_mlp = [&](double x, double y) {
      const auto idx = gs.to_index({x, y});
      const int cell = static_cast<int>(std::round(idx.x)) * mc.grid_w +
                       static_cast<int>(std::round(idx.y));
      std::vector<double> mean(static_cast<size_t>(mc.img_feat_c), 0.0);
      double count = 0.0;
      for (size_t pair = 0; pair < geo.points.size(); ++pair) {
        if (geo.valid[pair][cell] == 0.0) continue;
        Tensor pt({1, 2}, {geo.points[pair][static_cast<int64_t>(cell) * 2 + 0],
                           geo.points[pair][static_cast<int64_t>(cell) * 2 + 1]});
        const int view = static_cast<int>(pair) / mc.z_bins;
        Var s = num::bilinear_gather(feats[static_cast<size_t>(view)], pt);
        for (int c = 0; c < mc.img_feat_c; ++c) mean[static_cast<size_t>(c)] += s->value[c];
        count += 1.0;
      }
      REQUIRE(count > 0.0);
      for (auto& v : mean) v /= count;
      return mean;
    };
    const auto cube_feat = pre_mlp(6.0, 0.0);
    const auto road_feat = pre_mlp(6.0, 3.0);
    double diff = 0.0;
    for (size_t c = 0; c < cube_feat.size(); ++c) diff += std::abs(cube_feat[c] - road_feat[c]);
    CHECK(diff > 1e-4);
  }
}

TEST_CASE("temporal cross attention") {
  ModelConfig mc;
  ParamSet ps;
  Rng rng(3);
  WorldEncoder enc(mc, ps, rng);
  const GridSpec gs = mc.grid();

  SUBCASE("empty memory returns the input unchanged") {
    StreamingMemory mem(mc.memory_depth);
    Var cur = num::constant(random_grid(mc, 4));
    Var out = enc.temporal_cross_attention(cur, {}, mem);
    CHECK(out.get() == cur.get());
  }
  SUBCASE("zero ego motion with identical latents: deterministic, finite") {
    Tensor g = random_grid(mc, 5);
    StreamingMemory mem(mc.memory_depth);
    mem.push(BevLatent{num::constant(g), {}, 0.0});
    Var cur = num::constant(g);
    Var a = enc.temporal_cross_attention(cur, {}, mem);
    Var b = enc.temporal_cross_attention(cur, {}, mem);
    CHECK(a->value.all_finite());
    for (int64_t i = 0; i < a->value.numel(); ++i) CHECK(a->value[i] == b->value[i]);
  }
  SUBCASE("one-cell ego translation: warped memory equals the shift oracle") {
    Tensor prev = random_grid(mc, 6);
    const sim::PlanarPose prev_pose{0, 0, 0};
    const sim::PlanarPose cur_pose{gs.cell(), 0, 0};
    Var warped = warp_grid(num::constant(prev), prev_pose, cur_pose, gs);
    for (int i = 0; i < gs.h; ++i) {
      for (int j = 0; j + 1 < gs.w; ++j) {
        for (int c = 0; c < mc.latent_c; ++c) {
          const double got = warped->value[(static_cast<int64_t>(i) * gs.w + j) * mc.latent_c + c];
          const double want = prev[(static_cast<int64_t>(i) * gs.w + j + 1) * mc.latent_c + c];
          CHECK(std::abs(got - want) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("streaming memory and episode equivalence") {
  ModelConfig mc;
  ParamSet ps;
  Rng rng(7);
  WorldEncoder enc(mc, ps, rng);
  sim::WorldConfig wc = tiny_world();
  const sim::Episode ep = sim::generate_episode(wc, 21);

  SUBCASE("ring buffer: capacity bound, time order, clear") {
    StreamingMemory mem(3);
    for (int i = 0; i < 5; ++i) {
      mem.push(BevLatent{num::constant(Tensor::zeros({1, 1, 1})), {}, 0.5 * i});
    }
    CHECK(mem.size() == 3);
    double prev = -1;
    for (const auto& e : mem.entries()) {
      CHECK(e.timestamp > prev);
      prev = e.timestamp;
    }
    CHECK(mem.newest().timestamp == doctest::Approx(2.0));
    mem.clear();
    CHECK(mem.empty());
  }

  SUBCASE("re-running an episode after memory reset reproduces latents bit-exactly") {
    ps.set_trainable(false);
    auto run = [&] {
      StreamingMemory mem(mc.memory_depth);
      std::vector<Tensor> grids;
      for (const auto& f : ep.frames) {
        grids.push_back(enc.encode_frame(f, ep.rig, mem).grid->value);
      }
      return grids;
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      for (int64_t j = 0; j < a[i].numel(); ++j) CHECK(a[i][j] == b[i][j]);
    }
  }

  SUBCASE("latents stay finite over an episode") {
    ps.set_trainable(false);
    StreamingMemory mem(mc.memory_depth);
    for (const auto& f : ep.frames) {
      CHECK(enc.encode_frame(f, ep.rig, mem).grid->value.all_finite());
    }
  }
}

TEST_CASE("adapter") {
  ModelConfig mc;
  ParamSet enc_ps;
  Rng rng(8);
  WorldEncoder enc(mc, enc_ps, rng);
  sim::WorldConfig wc = tiny_world();
  const sim::Episode ep = sim::generate_episode(wc, 33);
  const auto& frame = ep.frames[1];
  enc_ps.set_trainable(false);

  ParamSet ad_ps;
  Rng rng2(9);
  Adapter adapter(mc, ad_ps, rng2);
  const auto feats = enc.extract_image_features(frame.images);
  const auto& geo = enc.geometry(ep.rig);
  Tensor bev = random_grid(mc, 10);

  SUBCASE("zero-initialized output projection makes the adapter an identity") {
    Var out = adapter.apply(num::constant(bev), feats, geo);
    REQUIRE(out->value.shape() == bev.shape());
    for (int64_t i = 0; i < bev.numel(); ++i) {
      CHECK(out->value[i] == doctest::Approx(bev[i]).epsilon(1e-12));
    }
  }
  SUBCASE("gradients reach adapter weights but not the frozen encoder") {
    ad_ps.zero_grad();
    enc_ps.zero_grad();
    Var out = adapter.apply(num::leaf(bev, false), feats, geo);
    num::backward(num::mean_all(num::square(out)));
    CHECK(ad_ps.grad_norm_sq() > 0.0);
    CHECK(enc_ps.grad_norm_sq() == 0.0);
  }
}
