#include "bevworld/run/ablation.hpp"

#include <filesystem>
#include <stdexcept>

#include "bevworld/run/report.hpp"
#include "bevworld/run/stages.hpp"

namespace bevworld::run {

namespace fs = std::filesystem;
using num::derive_seed;

namespace {

WorldModel load_world(const RunConfig& cfg) {
  WorldModel wm(cfg.model, derive_seed(cfg.seed, "init"));
  wm.load_encoder(cfg.encoder_checkpoint);
  wm.load_decoder(cfg.decoder_checkpoint);
  wm.freeze_world();
  return wm;
}

AblationResult emit(const std::string& out_dir, const std::string& name,
                    const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows,
                    const std::vector<std::string>& labels, const std::vector<BarSeries>& chart) {
  fs::create_directories(out_dir);
  AblationResult res;
  res.csv_path = (fs::path(out_dir) / "ablation.csv").string();
  res.svg_path = (fs::path(out_dir) / "ablation.svg").string();
  write_csv(res.csv_path, header, rows);
  write_svg_barchart(res.svg_path, name, labels, chart);
  for (const auto& row : rows) res.variants.push_back(row.front());
  return res;
}

std::string variant_dir(const std::string& out_dir, const std::string& variant) {
  return (fs::path(out_dir) / variant).string();
}

}  // namespace

AblationResult run_ablation(const std::string& name, const RunConfig& base,
                            const std::string& out_dir) {
  const auto fd = format_double;

  if (name == "osm-components") {
    // Depth-only vs +semantics vs +color on held-out rendering quality.
    struct Variant {
      const char* label;
      bool sem, color;
    } variants[] = {{"depth", false, false}, {"depth+sem", true, false},
                    {"depth+sem+color", true, true}};
    std::vector<std::vector<std::string>> rows;
    std::vector<double> maes;
    std::vector<std::string> labels;
    for (const auto& v : variants) {
      RunConfig cfg = base;
      cfg.sup_depth = true;
      cfg.sup_semantic = v.sem;
      cfg.sup_color = v.color;
      const std::string dir = variant_dir(out_dir, v.label);
      Dataset ds = load_dataset(cfg);
      const StageResult r = train_encoder_stage(cfg, ds, dir);
      WorldModel wm(cfg.model, derive_seed(cfg.seed, "init"));
      wm.load_encoder(r.checkpoint);
      const double mae = heldout_depth_mae(cfg, wm, ds.heldout);
      rows.push_back({v.label, config_hash(cfg), fd(mae), fd(r.final_loss)});
      maes.push_back(mae);
      labels.push_back(v.label);
    }
    return emit(out_dir, "osm components: held-out depth MAE (m)",
                {"variant", "config_hash", "depth_mae_m", "final_train_loss"}, rows, labels,
                {{"depth MAE", maes}});
  }

  if (name == "horizon") {
    // FSA future frames: K=0 vs K=2 on the future-occupancy task.
    std::vector<std::vector<std::string>> rows;
    std::vector<double> mious, maves;
    std::vector<std::string> labels;
    for (int k : {0, 2}) {
      RunConfig cfg = base;
      cfg.task = "occupancy";
      cfg.fsa_k = k;
      const std::string dir = variant_dir(out_dir, "k" + std::to_string(k));
      Dataset ds = load_dataset(cfg);
      train_downstream_stage(cfg, ds, dir);
      WorldModel wm = load_world(cfg);
      OccupancyModel om(cfg.model, derive_seed(cfg.seed, "ds_init"), cfg.fsa_k,
                        cfg.model.horizons, cfg.world.dt);
      num::load_checkpoint(om.params, (fs::path(dir) / "downstream.bwck").string());
      const OccupancyEval ev = eval_occupancy(cfg, wm, om, ds.heldout);
      rows.push_back({"K=" + std::to_string(k), config_hash(cfg), fd(ev.miou), fd(ev.iou_geo),
                      fd(ev.mave)});
      mious.push_back(ev.miou);
      maves.push_back(ev.mave);
      labels.push_back("K=" + std::to_string(k));
    }
    return emit(out_dir, "FSA future frames",
                {"variant", "config_hash", "miou", "iou_geo", "mave"}, rows, labels,
                {{"mIoU", mious}, {"mAVE", maves}});
  }

  if (name == "decoupled") {
    // Joint co-training vs decoupled two-stage at matched total steps.
    std::vector<std::vector<std::string>> rows;
    std::vector<double> avg_cd;
    std::vector<std::string> labels;
    for (const bool joint : {true, false}) {
      RunConfig cfg = base;
      cfg.joint = joint;
      const std::string label = joint ? "joint" : "decoupled";
      const std::string dir = variant_dir(out_dir, label);
      Dataset ds = load_dataset(cfg);
      if (joint) {
        // Matched total budget, assuming the encoder stage used the same
        // step count as the decoder stage.
        cfg.steps = 2 * base.steps;
      }
      const StageResult r = train_decoder_stage(cfg, ds, dir);
      WorldModel wm(cfg.model, derive_seed(cfg.seed, "init"));
      wm.load_encoder(joint ? (fs::path(dir) / "encoder.bwck").string()
                            : cfg.encoder_checkpoint);
      wm.load_decoder(r.checkpoint);
      const ForecastEval ev = eval_forecast(cfg, wm, ds.heldout, model::PredictMode::kDirect);
      std::vector<std::string> row{label, config_hash(cfg), fd(ev.avg_cd)};
      for (double cd : ev.cd_per_horizon) row.push_back(fd(cd));
      rows.push_back(row);
      avg_cd.push_back(ev.avg_cd);
      labels.push_back(label);
    }
    std::vector<std::string> header{"variant", "config_hash", "avg_cd_m2"};
    for (int k = 1; k <= base.model.horizons; ++k) {
      header.push_back("cd_" + std::to_string(k * 5) + "00ms");
    }
    return emit(out_dir, "decoupled vs joint: held-out Chamfer (m^2)", header, rows, labels,
                {{"avg CD", avg_cd}});
  }

  if (name == "direct-vs-ar") {
    RunConfig cfg = base;
    Dataset ds = load_dataset(cfg);
    WorldModel wm = load_world(cfg);
    std::vector<std::vector<std::string>> rows;
    std::vector<double> avg_cd;
    std::vector<std::string> labels;
    for (const auto mode : {model::PredictMode::kDirect, model::PredictMode::kAutoregressive}) {
      const std::string label = mode == model::PredictMode::kDirect ? "direct" : "autoregressive";
      const ForecastEval ev = eval_forecast(cfg, wm, ds.heldout, mode);
      std::vector<std::string> row{label, config_hash(cfg), fd(ev.avg_cd)};
      for (double cd : ev.cd_per_horizon) row.push_back(fd(cd));
      rows.push_back(row);
      avg_cd.push_back(ev.avg_cd);
      labels.push_back(label);
    }
    std::vector<std::string> header{"variant", "config_hash", "avg_cd_m2"};
    for (int k = 1; k <= base.model.horizons; ++k) {
      header.push_back("cd_" + std::to_string(k * 5) + "00ms");
    }
    return emit(out_dir, "direct vs autoregressive: held-out Chamfer (m^2)", header, rows, labels,
                {{"avg CD", avg_cd}});
  }

  if (name == "dynamic-sampling") {
    std::vector<std::vector<std::string>> rows;
    std::vector<double> overall, dynamic_region;
    std::vector<std::string> labels;
    for (const bool dyn : {false, true}) {
      RunConfig cfg = base;
      cfg.dynamic_rays = dyn;
      const std::string label = dyn ? "dynamic-aware" : "uniform";
      const std::string dir = variant_dir(out_dir, dyn ? "dynamic" : "uniform");
      Dataset ds = load_dataset(cfg);
      const StageResult r = train_decoder_stage(cfg, ds, dir);
      WorldModel wm(cfg.model, derive_seed(cfg.seed, "init"));
      wm.load_encoder(cfg.encoder_checkpoint);
      wm.load_decoder(r.checkpoint);
      const ForecastEval ev = eval_forecast(cfg, wm, ds.heldout, model::PredictMode::kDirect);
      rows.push_back({label, config_hash(cfg), fd(ev.avg_cd), fd(ev.avg_dynamic_cd)});
      overall.push_back(ev.avg_cd);
      dynamic_region.push_back(ev.avg_dynamic_cd);
      labels.push_back(label);
    }
    return emit(out_dir, "dynamic-aware sampling: Chamfer (m^2)",
                {"variant", "config_hash", "avg_cd_m2", "dynamic_region_cd_m2"}, rows, labels,
                {{"overall", overall}, {"dynamic region", dynamic_region}});
  }

  std::string valid;
  for (const auto& n : kAblationNames) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown ablation '" + name + "' (valid: " + valid + ")");
}

}  // namespace bevworld::run
