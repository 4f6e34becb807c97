// Command-line entry point: dataset generation, two-stage world-model
// training, downstream heads, evaluation, ablations, and report rendering.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "bevworld/numerics/checkpoint.hpp"
#include "bevworld/run/ablation.hpp"
#include "bevworld/run/report.hpp"
#include "bevworld/run/stages.hpp"

namespace fs = std::filesystem;
using namespace bevworld;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "run";
  uint64_t seed = 0;
  bool seed_set = false;
};

run::RunConfig load_effective_config(const CommonArgs& args) {
  run::RunConfig cfg = run::load_config(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* c = cmd->add_option("--config", args.config_path, "run config file");
  if (config_required) c->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "seed override")->each([&args](const std::string&) {
    args.seed_set = true;
  });
}

std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int run_eval_forecast(const CommonArgs& args, const std::string& mode_name) {
  run::RunConfig cfg = load_effective_config(args);
  if (cfg.encoder_checkpoint.empty() || !fs::exists(cfg.encoder_checkpoint) ||
      cfg.decoder_checkpoint.empty() || !fs::exists(cfg.decoder_checkpoint)) {
    throw std::runtime_error("missing checkpoint: eval-forecast needs data.encoder_checkpoint "
                             "and data.decoder_checkpoint");
  }
  run::Dataset ds = run::load_dataset(cfg);
  run::WorldModel wm(cfg.model, num::derive_seed(cfg.seed, "init"));
  wm.load_encoder(cfg.encoder_checkpoint);
  wm.load_decoder(cfg.decoder_checkpoint);
  const auto mode = mode_name == "autoregressive" ? model::PredictMode::kAutoregressive
                                                  : model::PredictMode::kDirect;
  const run::ForecastEval ev = run::eval_forecast(cfg, wm, ds.heldout, mode);
  fs::create_directories(args.out_dir);
  run::write_run_manifest(args.out_dir, "eval-forecast-" + mode_name, cfg);
  std::vector<std::vector<std::string>> rows;
  for (size_t k = 0; k < ev.cd_per_horizon.size(); ++k) {
    rows.push_back({std::to_string((k + 1) * 0.5), full(ev.cd_per_horizon[k]),
                    full(ev.cd_dynamic_per_horizon[k])});
  }
  rows.push_back({"avg", full(ev.avg_cd), full(ev.avg_dynamic_cd)});
  run::write_csv((fs::path(args.out_dir) / "metrics.csv").string(),
                 {"horizon_s", "chamfer_m2", "chamfer_dynamic_m2"}, rows);
  std::printf("forecast (%s): avg CD %.4f m^2 over %d samples\n", mode_name.c_str(), ev.avg_cd,
              ev.samples);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bevworld: latent BEV world model on a synthetic driving world"};
  app.require_subcommand(1);

  CommonArgs gen_args;
  uint64_t seed_a = 1, seed_b = 8;
  std::string seeds_spec = "1..8";
  auto* gen = app.add_subcommand("gen-data", "generate episode dataset + manifest");
  add_common(gen, gen_args);
  gen->add_option("--seeds", seeds_spec, "seed range a..b (inclusive)");

  CommonArgs enc_args;
  auto* enc = app.add_subcommand("train-encoder", "stage 1: world encoder");
  add_common(enc, enc_args);

  CommonArgs dec_args;
  auto* dec = app.add_subcommand("train-decoder", "stage 2: future decoder");
  add_common(dec, dec_args);

  CommonArgs ds_args;
  auto* dst = app.add_subcommand("train-downstream", "stage 3: adapter + task heads");
  add_common(dst, ds_args);

  CommonArgs ef_args;
  std::string ef_mode = "direct";
  auto* ef = app.add_subcommand("eval-forecast", "held-out point cloud forecasting");
  add_common(ef, ef_args);
  ef->add_option("--mode", ef_mode, "direct|autoregressive")
      ->check(CLI::IsMember({"direct", "autoregressive"}));

  CommonArgs eo_args;
  std::string eo_ckpt;
  auto* eo = app.add_subcommand("eval-occupancy", "held-out future occupancy");
  add_common(eo, eo_args);
  eo->add_option("--checkpoint", eo_ckpt, "downstream checkpoint")->required();

  CommonArgs epl_args;
  std::string epl_ckpt;
  int epl_n = 100;
  auto* epl = app.add_subcommand("eval-planner", "scenario-suite planner evaluation");
  add_common(epl, epl_args);
  epl->add_option("--checkpoint", epl_ckpt, "downstream checkpoint")->required();
  epl->add_option("--scenarios", epl_n, "number of held-out scenarios");

  CommonArgs ab_args;
  std::string ab_name;
  auto* ab = app.add_subcommand("ablate", "train/evaluate a named variant pair");
  add_common(ab, ab_args);
  ab->add_option("--name", ab_name, "ablation name")->required();

  std::string report_dir;
  auto* rep = app.add_subcommand("render-report", "index artifacts of a finished run dir");
  rep->add_option("dir", report_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*gen) {
      const auto pos = seeds_spec.find("..");
      if (pos == std::string::npos) {
        std::cerr << "--seeds must be a..b\n";
        return 1;
      }
      seed_a = std::stoull(seeds_spec.substr(0, pos));
      seed_b = std::stoull(seeds_spec.substr(pos + 2));
      run::RunConfig cfg = load_effective_config(gen_args);
      const std::string manifest =
          run::generate_dataset(cfg.world, seed_a, seed_b, gen_args.out_dir);
      std::printf("wrote %s\n", manifest.c_str());
      return 0;
    }
    if (*enc) {
      run::RunConfig cfg = load_effective_config(enc_args);
      run::Dataset data = run::load_dataset(cfg);
      const auto r = run::train_encoder_stage(cfg, data, enc_args.out_dir);
      std::printf("encoder stage done: loss %.4f -> %.4f, checkpoint %s\n", r.initial_loss,
                  r.final_loss, r.checkpoint.c_str());
      return 0;
    }
    if (*dec) {
      run::RunConfig cfg = load_effective_config(dec_args);
      run::Dataset data = run::load_dataset(cfg);
      const auto r = run::train_decoder_stage(cfg, data, dec_args.out_dir);
      std::printf("decoder stage done: loss %.4f -> %.4f, checkpoint %s\n", r.initial_loss,
                  r.final_loss, r.checkpoint.c_str());
      return 0;
    }
    if (*dst) {
      run::RunConfig cfg = load_effective_config(ds_args);
      run::Dataset data = run::load_dataset(cfg);
      const auto r = run::train_downstream_stage(cfg, data, ds_args.out_dir);
      std::printf("downstream stage (%s) done: loss %.4f -> %.4f, checkpoint %s\n",
                  cfg.task.c_str(), r.initial_loss, r.final_loss, r.checkpoint.c_str());
      return 0;
    }
    if (*ef) return run_eval_forecast(ef_args, ef_mode);
    if (*eo) {
      run::RunConfig cfg = load_effective_config(eo_args);
      if (!fs::exists(eo_ckpt)) throw std::runtime_error("missing checkpoint: " + eo_ckpt);
      run::Dataset data = run::load_dataset(cfg);
      run::WorldModel wm(cfg.model, num::derive_seed(cfg.seed, "init"));
      wm.load_encoder(cfg.encoder_checkpoint);
      wm.load_decoder(cfg.decoder_checkpoint);
      run::OccupancyModel om(cfg.model, num::derive_seed(cfg.seed, "ds_init"), cfg.fsa_k,
                             cfg.model.horizons, cfg.world.dt);
      num::load_checkpoint(om.params, eo_ckpt);
      const auto ev = run::eval_occupancy(cfg, wm, om, data.heldout);
      fs::create_directories(eo_args.out_dir);
      run::write_run_manifest(eo_args.out_dir, "eval-occupancy", cfg);
      run::write_csv((fs::path(eo_args.out_dir) / "metrics.csv").string(),
                     {"miou", "iou_geo", "mave", "samples"},
                     {{full(ev.miou), full(ev.iou_geo), full(ev.mave),
                       std::to_string(ev.samples)}});
      std::printf("occupancy: mIoU %.4f, IoU_geo %.4f, mAVE %.4f (%d samples)\n", ev.miou,
                  ev.iou_geo, ev.mave, ev.samples);
      return 0;
    }
    if (*epl) {
      run::RunConfig cfg = load_effective_config(epl_args);
      if (!fs::exists(epl_ckpt)) throw std::runtime_error("missing checkpoint: " + epl_ckpt);
      run::WorldModel wm(cfg.model, num::derive_seed(cfg.seed, "init"));
      wm.load_encoder(cfg.encoder_checkpoint);
      wm.load_decoder(cfg.decoder_checkpoint);
      run::PlannerModel pm(cfg.model, num::derive_seed(cfg.seed, "ds_init"), cfg.fsa_k);
      num::load_checkpoint(pm.params, epl_ckpt);
      const auto ev =
          run::eval_planner(cfg, wm, pm, epl_n, num::derive_seed(cfg.seed, "eval_scenarios"));
      fs::create_directories(epl_args.out_dir);
      run::write_run_manifest(epl_args.out_dir, "eval-planner", cfg);
      run::write_csv((fs::path(epl_args.out_dir) / "metrics.csv").string(),
                     {"success_rate", "baseline_success", "scenarios"},
                     {{full(ev.success_rate), full(ev.baseline_success),
                       std::to_string(ev.scenarios)}});
      std::printf("planner: success %.3f vs baseline %.3f over %d scenarios\n", ev.success_rate,
                  ev.baseline_success, ev.scenarios);
      return 0;
    }
    if (*ab) {
      run::RunConfig cfg = load_effective_config(ab_args);
      const auto res = run::run_ablation(ab_name, cfg, ab_args.out_dir);
      std::printf("ablation %s: %s, %s\n", ab_name.c_str(), res.csv_path.c_str(),
                  res.svg_path.c_str());
      return 0;
    }
    if (*rep) {
      const std::string path = run::render_report(report_dir);
      std::printf("wrote %s\n", path.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
