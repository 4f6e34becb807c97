#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bevworld/run/ablation.hpp"
#include "bevworld/run/report.hpp"
#include "bevworld/run/stages.hpp"

using namespace bevworld;
using namespace bevworld::run;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("bw_" + tag + "_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig tiny_config(const std::string& manifest) {
  RunConfig cfg;
  cfg.manifest = manifest;
  cfg.train_count = 2;
  cfg.world.n_frames = 8;
  cfg.world.n_actors_min = 2;
  cfg.world.n_actors_max = 3;
  cfg.model.grid_h = cfg.model.grid_w = 8;
  cfg.model.latent_c = 8;
  cfg.model.z_bins = 2;
  cfg.model.cstar = 4;
  cfg.model.n_waypoints = 8;
  cfg.model.horizons = 3;
  cfg.rays = {48, 64, 16};
  cfg.future_rays = {24, 24, 8};
  cfg.steps = 3;
  cfg.log_every = 1;
  cfg.eval_horizons = 3;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("echo round-trips to the same config") {
    RunConfig cfg;
    cfg.manifest = "/data/manifest.txt";
    cfg.steps = 123;
    cfg.lr = 0.00125;
    cfg.world.n_frames = 9;
    cfg.model.grid_h = 16;
    cfg.sup_color = false;
    cfg.seed = 777;
    const std::string text = echo_config(cfg);
    const RunConfig back = parse_config_text(text);
    CHECK(back.manifest == cfg.manifest);
    CHECK(back.steps == cfg.steps);
    CHECK(back.lr == cfg.lr);
    CHECK(back.world.n_frames == cfg.world.n_frames);
    CHECK(back.model.grid_h == cfg.model.grid_h);
    CHECK(back.sup_color == cfg.sup_color);
    CHECK(back.seed == cfg.seed);
    CHECK(echo_config(back) == text);
  }
  SUBCASE("unknown keys are rejected with location") {
    CHECK_THROWS_WITH_AS(parse_config_text("[train]\nstepz = 5\n", "conf"),
                         doctest::Contains("unknown config key"), std::invalid_argument);
  }
  SUBCASE("bad values are rejected") {
    CHECK_THROWS_AS(parse_config_text("[train]\nsteps = banana\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("[train]\njoint = maybe\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("[train]\nsteps\n"), std::invalid_argument);
  }
  SUBCASE("comments and blank lines are skipped; hash differs per field") {
    const RunConfig a = parse_config_text("# a comment\n\n[train]\nsteps = 5\n");
    CHECK(a.steps == 5);
    RunConfig b = a;
    b.steps = 6;
    CHECK(config_hash(a) != config_hash(b));
    CHECK(config_hash(a) == config_hash(parse_config_text(echo_config(a))));
  }
}

TEST_CASE("dataset generation and loading") {
  TempDir tmp("data");
  sim::WorldConfig wc;
  wc.n_frames = 4;
  wc.n_actors_min = 2;
  wc.n_actors_max = 3;
  const std::string manifest = generate_dataset(wc, 1, 3, tmp.path.string());
  CHECK(fs::exists(manifest));
  const auto entries = read_manifest(manifest);
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].second == 1);
  CHECK(entries[2].second == 3);

  RunConfig cfg = tiny_config(manifest);
  cfg.world = wc;
  const Dataset ds = load_dataset(cfg);
  CHECK(ds.train.size() == 2);
  CHECK(ds.heldout.size() == 1);
  CHECK(ds.train[0].seed == 1);
  CHECK(ds.heldout[0].seed == 3);
}

TEST_CASE("stage orchestration") {
  TempDir tmp("stage");
  sim::WorldConfig wc;
  wc.n_frames = 8;
  wc.n_actors_min = 2;
  wc.n_actors_max = 3;
  RunConfig cfg = tiny_config("");
  cfg.world = wc;
  cfg.manifest = generate_dataset(wc, 1, 3, (tmp.path / "data").string());
  const Dataset ds = load_dataset(cfg);

  SUBCASE("decoder stage without an encoder checkpoint fails before training") {
    cfg.encoder_checkpoint = "";
    CHECK_THROWS_WITH_AS(train_decoder_stage(cfg, ds, (tmp.path / "dec").string()),
                         doctest::Contains("missing checkpoint"), std::runtime_error);
    cfg.encoder_checkpoint = (tmp.path / "nope.bwck").string();
    CHECK_THROWS_AS(train_decoder_stage(cfg, ds, (tmp.path / "dec").string()),
                    std::runtime_error);
  }
  SUBCASE("downstream stage demands both checkpoints") {
    cfg.encoder_checkpoint = "";
    cfg.decoder_checkpoint = "";
    CHECK_THROWS_WITH_AS(train_downstream_stage(cfg, ds, (tmp.path / "ds").string()),
                         doctest::Contains("missing checkpoint"), std::runtime_error);
  }
  SUBCASE("encoder stage: identical config+seed reproduce the final loss bit-exactly") {
    const auto r1 = train_encoder_stage(cfg, ds, (tmp.path / "e1").string());
    const auto r2 = train_encoder_stage(cfg, ds, (tmp.path / "e2").string());
    CHECK(r1.final_loss == r2.final_loss);
    CHECK(fs::exists(r1.checkpoint));
    CHECK(fs::exists(tmp.path / "e1" / "loss.csv"));
    CHECK(fs::exists(tmp.path / "e1" / "manifest.txt"));

    SUBCASE("manifest re-parses to the same config hash") {
      std::ifstream in(tmp.path / "e1" / "manifest.txt");
      std::stringstream buf;
      buf << in.rdbuf();
      const RunConfig from_manifest = parse_config_text(buf.str(), "manifest");
      CHECK(config_hash(from_manifest) == config_hash(cfg));
    }

    SUBCASE("full mini pipeline: decoder, downstream, and evals run") {
      cfg.encoder_checkpoint = r1.checkpoint;
      const auto rd = train_decoder_stage(cfg, ds, (tmp.path / "d1").string());
      CHECK(fs::exists(rd.checkpoint));

      cfg.decoder_checkpoint = rd.checkpoint;
      WorldModel wm(cfg.model, num::derive_seed(cfg.seed, "init"));
      wm.load_encoder(cfg.encoder_checkpoint);
      wm.load_decoder(cfg.decoder_checkpoint);
      const auto fe = eval_forecast(cfg, wm, ds.heldout, model::PredictMode::kDirect);
      CHECK(fe.samples > 0);
      REQUIRE(fe.cd_per_horizon.size() == 3);
      for (double cd : fe.cd_per_horizon) CHECK(cd >= 0.0);

      // The encoder floor must not exceed the decoder's chamfer.
      const auto floor =
          eval_forecast(cfg, wm, ds.heldout, model::PredictMode::kDirect, true);
      CHECK(floor.avg_cd <= fe.avg_cd + 1e-9);

      cfg.task = "occupancy";
      cfg.fsa_k = 2;
      const auto ro = train_downstream_stage(cfg, ds, (tmp.path / "occ").string());
      CHECK(fs::exists(ro.checkpoint));
      OccupancyModel om(cfg.model, num::derive_seed(cfg.seed, "ds_init"), cfg.fsa_k,
                        cfg.model.horizons, cfg.world.dt);
      num::load_checkpoint(om.params, ro.checkpoint);
      const auto oe = eval_occupancy(cfg, wm, om, ds.heldout);
      CHECK(oe.samples > 0);
      CHECK(oe.miou >= 0.0);
      CHECK(oe.miou <= 1.0);
    }
  }
  SUBCASE("decoder training determinism with a fixed encoder") {
    const auto enc = train_encoder_stage(cfg, ds, (tmp.path / "e3").string());
    cfg.encoder_checkpoint = enc.checkpoint;
    const auto d1 = train_decoder_stage(cfg, ds, (tmp.path / "d2").string());
    const auto d2 = train_decoder_stage(cfg, ds, (tmp.path / "d3").string());
    CHECK(d1.final_loss == d2.final_loss);
  }
}

TEST_CASE("reports") {
  TempDir tmp("report");
  SUBCASE("csv and svg writers emit well-formed files") {
    const std::string csv = (tmp.path / "m.csv").string();
    write_csv(csv, {"a", "b"}, {{"1", "2"}, {"3", "4"}});
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "a,b");

    const std::string svg = (tmp.path / "m.svg").string();
    write_svg_barchart(svg, "title", {"x", "y"}, {{"s1", {1.0, 2.0}}, {"s2", {0.5, 0.1}}});
    std::ifstream sin(svg);
    std::stringstream buf;
    buf << sin.rdbuf();
    CHECK(buf.str().find("<svg") != std::string::npos);
    CHECK(buf.str().find("</svg>") != std::string::npos);
  }
  SUBCASE("render_report indexes csv and svg artifacts") {
    fs::create_directories(tmp.path / "sub");
    write_csv((tmp.path / "sub" / "loss.csv").string(), {"step"}, {{"1"}});
    write_svg_barchart((tmp.path / "chart.svg").string(), "t", {"a"}, {{"s", {1.0}}});
    const std::string report = render_report(tmp.path.string());
    std::ifstream in(report);
    std::stringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str().find("loss.csv") != std::string::npos);
    CHECK(buf.str().find("chart.svg") != std::string::npos);
  }
  SUBCASE("unknown ablation names list the valid set") {
    RunConfig cfg;
    CHECK_THROWS_WITH_AS(run_ablation("nope", cfg, tmp.path.string()),
                         doctest::Contains("direct-vs-ar"), std::invalid_argument);
  }
}

TEST_CASE("memory_before assembles the trailing window") {
  model::ModelConfig mc;
  mc.memory_depth = 3;
  std::vector<model::BevLatent> latents;
  for (int t = 0; t < 6; ++t) {
    latents.push_back({num::constant(num::Tensor::zeros({1, 1, 1})), {}, 0.5 * t});
  }
  const auto m0 = memory_before(latents, 0, 3);
  CHECK(m0.empty());
  const auto m2 = memory_before(latents, 2, 3);
  CHECK(m2.size() == 2);
  const auto m5 = memory_before(latents, 5, 3);
  CHECK(m5.size() == 3);
  CHECK(m5.entries().front().timestamp == doctest::Approx(1.0));
  CHECK(m5.newest().timestamp == doctest::Approx(2.0));
}
