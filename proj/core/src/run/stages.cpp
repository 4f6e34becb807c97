#include "bevworld/run/stages.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "bevworld/eval/chamfer.hpp"
#include "bevworld/eval/forecast.hpp"
#include "bevworld/eval/metrics.hpp"

namespace bevworld::run {

namespace fs = std::filesystem;
using namespace model;
using num::AdamW;
using num::AdamWConfig;
using num::derive_seed;
using num::Rng;
using num::Tensor;

WorldModel::WorldModel(const model::ModelConfig& cfg_in, uint64_t init_seed) : cfg(cfg_in) {
  Rng enc_rng(derive_seed(init_seed, "encoder"));
  encoder = std::make_unique<WorldEncoder>(cfg, enc_params, enc_rng);
  osm = std::make_unique<OsmField>(cfg, enc_params, enc_rng);
  Rng dec_rng(derive_seed(init_seed, "decoder"));
  decoder = std::make_unique<FutureDecoder>(cfg, dec_params, dec_rng);
}

std::vector<BevLatent> encode_episode(const WorldModel& wm, const sim::Episode& ep) {
  std::vector<BevLatent> latents;
  latents.reserve(ep.frames.size());
  StreamingMemory mem(wm.cfg.memory_depth);
  for (const auto& frame : ep.frames) {
    latents.push_back(wm.encoder->encode_frame(frame, ep.rig, mem));
  }
  return latents;
}

StreamingMemory memory_before(const std::vector<BevLatent>& latents, int t, int capacity) {
  StreamingMemory mem(capacity);
  for (int u = std::max(0, t - capacity); u < t; ++u) {
    mem.push(latents[static_cast<size_t>(u)]);
  }
  return mem;
}

namespace {

std::string git_describe() {
  FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[128] = {0};
  std::string out;
  while (fgets(buf, sizeof buf, pipe)) out += buf;
  pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

Var weighted_scene_total(const SceneLoss& loss, const RunConfig& cfg) {
  Var total = num::constant(Tensor(0.0));
  if (cfg.sup_semantic && loss.has_sem) total = num::add(total, loss.sem);
  if (cfg.sup_color && loss.has_rgb) total = num::add(total, loss.rgb);
  if (cfg.sup_depth && loss.has_depth) total = num::add(total, loss.depth);
  return total;
}

class LossCsv {
 public:
  LossCsv(const std::string& out_dir, const std::string& header) {
    fs::create_directories(out_dir);
    path_ = (fs::path(out_dir) / "loss.csv").string();
    out_.open(path_);
    out_ << header << "\n";
  }
  template <class... T>
  void row(T... cells) {
    bool first = true;
    ((out_ << (first ? "" : ","), out_ << cells, first = false), ...);
    out_ << "\n";
  }
  std::string path_;
  std::ofstream out_;
};

void require_file(const std::string& path, const std::string& what) {
  if (path.empty() || !fs::exists(path)) {
    throw std::runtime_error("missing checkpoint: " + what +
                             (path.empty() ? " (not configured)" : " at " + path));
  }
}

WaypointSchedule schedule_of(const RunConfig& cfg) {
  return WaypointSchedule::uniform(cfg.model.n_waypoints, cfg.model.waypoint_near,
                                   cfg.model.waypoint_far);
}

}  // namespace

void write_run_manifest(const std::string& out_dir, const std::string& stage,
                        const RunConfig& cfg) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "manifest.txt");
  out << "# bevworld run manifest\n";
  out << "# stage " << stage << "\n";
  out << "# git " << git_describe() << "\n";
  out << "# config_hash " << config_hash(cfg) << "\n";
  out << "# seed " << cfg.seed << "\n";
  out << echo_config(cfg);
}

StageResult train_encoder_stage(const RunConfig& cfg, const Dataset& ds,
                                const std::string& out_dir) {
  WorldModel wm(cfg.model, derive_seed(cfg.seed, "init"));
  AdamW opt(AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const WaypointSchedule sched = schedule_of(cfg);
  LossCsv log(out_dir, "step,loss,sem,rgb,depth");
  write_run_manifest(out_dir, "encoder", cfg);

  StageResult result;
  result.steps = cfg.steps;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, 0x100000u + static_cast<uint64_t>(step)));
    const auto& ep = ds.train[static_cast<size_t>(rng.randint(static_cast<int64_t>(ds.train.size())))];
    const int t = static_cast<int>(rng.randint(static_cast<int64_t>(ep.frames.size())));
    const int hist = static_cast<int>(rng.randint(std::min(cfg.model.memory_depth, t) + 1));

    StreamingMemory mem(cfg.model.memory_depth);
    BevLatent latent;
    for (int u = t - hist; u <= t; ++u) {
      latent = wm.encoder->encode_frame(ep.frames[static_cast<size_t>(u)], ep.rig, mem);
    }
    const auto rays = sample_rays(ep.frames[static_cast<size_t>(t)], ep.rig, ep.config, cfg.rays,
                                  derive_seed(cfg.seed, 0x200000u + static_cast<uint64_t>(step)));
    const auto render = wm.osm->render_from_bev(latent.grid, rays, sched);
    const SceneLoss sl = scene_loss(render, rays);
    Var loss = weighted_scene_total(sl, cfg);

    const double loss_v = loss->value.scalar();
    if (step == 0) result.initial_loss = loss_v;
    result.final_loss = loss_v;
    if (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
      log.row(step, loss_v, sl.sem->value.scalar(), sl.rgb->value.scalar(),
              sl.depth->value.scalar());
    }
    wm.enc_params.zero_grad();
    num::backward(loss);
    opt.step(wm.enc_params);
  }
  result.checkpoint = (fs::path(out_dir) / "encoder.bwck").string();
  num::save_checkpoint(wm.enc_params, result.checkpoint);
  return result;
}

StageResult train_decoder_stage(const RunConfig& cfg, const Dataset& ds,
                                const std::string& out_dir) {
  if (!cfg.joint) require_file(cfg.encoder_checkpoint, "encoder (decoder stage dependency)");

  WorldModel wm(cfg.model, derive_seed(cfg.seed, "init"));
  if (!cfg.joint) {
    wm.load_encoder(cfg.encoder_checkpoint);
    wm.enc_params.set_trainable(false);
  }
  AdamW opt_dec(AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  AdamW opt_enc(AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const WaypointSchedule sched = schedule_of(cfg);
  RayBudget future_budget = cfg.future_rays;
  if (!cfg.dynamic_rays) future_budget.n_dynamic = 0;

  // Decoupled path: the frozen encoder's latents are fixed, cache them.
  std::vector<std::vector<BevLatent>> cache;
  if (!cfg.joint) {
    cache.reserve(ds.train.size());
    for (const auto& ep : ds.train) cache.push_back(encode_episode(wm, ep));
  }

  LossCsv log(out_dir, "step,loss,latent,scene");
  write_run_manifest(out_dir, cfg.joint ? "decoder-joint" : "decoder", cfg);
  bool warned_truncation = false;

  StageResult result;
  result.steps = cfg.steps;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, 0x110000u + static_cast<uint64_t>(step)));
    const size_t ei = static_cast<size_t>(rng.randint(static_cast<int64_t>(ds.train.size())));
    const auto& ep = ds.train[ei];
    const int n_frames = static_cast<int>(ep.frames.size());
    const int t = static_cast<int>(rng.randint(static_cast<int64_t>(n_frames - 1)));
    const int kh = std::min(cfg.model.horizons, n_frames - 1 - t);
    if (kh < cfg.model.horizons && !warned_truncation) {
      std::fprintf(stderr, "decoder stage: horizon truncated to %d at frame %d\n", kh, t);
      warned_truncation = true;
    }

    BevLatent anchor;
    StreamingMemory mem(cfg.model.memory_depth);
    std::vector<BevLatent> targets;  // index k-1 -> latent at t+k
    Var current_scene = num::constant(Tensor(0.0));
    if (!cfg.joint) {
      anchor = cache[ei][static_cast<size_t>(t)];
      mem = memory_before(cache[ei], t, cfg.model.memory_depth);
      for (int k = 1; k <= kh; ++k) targets.push_back(cache[ei][static_cast<size_t>(t + k)]);
    } else {
      const int hist = std::min(cfg.model.memory_depth, t);
      StreamingMemory stream(cfg.model.memory_depth);
      for (int u = t - hist; u <= t; ++u) {
        if (u == t) {
          // Decoder memory: entries strictly before the anchor.
          for (const auto& e : stream.entries()) mem.push(e);
        }
        anchor = wm.encoder->encode_frame(ep.frames[static_cast<size_t>(u)], ep.rig, stream);
      }
      for (int k = 1; k <= kh; ++k) {
        targets.push_back(
            wm.encoder->encode_frame(ep.frames[static_cast<size_t>(t + k)], ep.rig, stream));
      }
      const auto rays = sample_rays(ep.frames[static_cast<size_t>(t)], ep.rig, ep.config, cfg.rays,
                                    derive_seed(cfg.seed, 0x210000u + static_cast<uint64_t>(step)));
      current_scene =
          weighted_scene_total(scene_loss(wm.osm->render_from_bev(anchor.grid, rays, sched), rays),
                               cfg);
    }

    Var loss = current_scene;
    Var lat_sum = num::constant(Tensor(0.0));
    Var scene_sum = num::constant(Tensor(0.0));
    for (int k = 1; k <= kh; ++k) {
      const auto& target_frame = ep.frames[static_cast<size_t>(t + k)];
      const EgoAction action =
          EgoAction::from_poses(anchor.ego, target_frame.ego, k, cfg.model.horizons);
      FuturePrediction pred = wm.decoder->predict_horizon(anchor, mem, action, target_frame.ego,
                                                          target_frame.timestamp);
      Var l_lat = latent_loss(pred.refined.grid, targets[static_cast<size_t>(k - 1)].grid);
      const auto rays = sample_rays(target_frame, ep.rig, ep.config, future_budget,
                                    derive_seed(cfg.seed, (0x220000u + static_cast<uint64_t>(step)) *
                                                              64u +
                                                          static_cast<uint64_t>(k)));
      Var l_scene = weighted_scene_total(
          scene_loss(wm.osm->render_from_bev(pred.refined.grid, rays, sched), rays), cfg);
      lat_sum = num::add(lat_sum, l_lat);
      scene_sum = num::add(scene_sum, l_scene);
      loss = num::add(loss, num::add(num::mul_scalar(l_lat, cfg.w_latent),
                                     num::mul_scalar(l_scene, cfg.w_scene)));
    }

    const double loss_v = loss->value.scalar();
    if (step == 0) result.initial_loss = loss_v;
    result.final_loss = loss_v;
    if (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
      log.row(step, loss_v, lat_sum->value.scalar(), scene_sum->value.scalar());
    }

    wm.dec_params.zero_grad();
    if (cfg.joint) wm.enc_params.zero_grad();
    num::backward(loss);
    opt_dec.step(wm.dec_params);
    if (cfg.joint) opt_enc.step(wm.enc_params);
  }

  result.checkpoint = (fs::path(out_dir) / "decoder.bwck").string();
  num::save_checkpoint(wm.dec_params, result.checkpoint);
  if (cfg.joint) {
    num::save_checkpoint(wm.enc_params, (fs::path(out_dir) / "encoder.bwck").string());
  }
  return result;
}

OccupancyModel::OccupancyModel(const model::ModelConfig& cfg, uint64_t init_seed, int fsa_k_in,
                               int horizons, double dt)
    : fsa_k(fsa_k_in) {
  Rng rng(derive_seed(init_seed, "occupancy"));
  adapter = std::make_unique<Adapter>(cfg, params, rng);
  head = std::make_unique<OccupancyHead>(cfg, params, rng, fsa_k);
  actions = std::make_unique<ActionPredictor>(params, rng, horizons, dt);
}

PlannerModel::PlannerModel(const model::ModelConfig& cfg, uint64_t init_seed, int fsa_k_in)
    : fsa_k(fsa_k_in) {
  Rng rng(derive_seed(init_seed, "planner"));
  adapter = std::make_unique<Adapter>(cfg, params, rng);
  world_head = std::make_unique<PlannerHead>(cfg, params, "planner", rng, fsa_k);
  baseline_head = std::make_unique<PlannerHead>(cfg, params, "baseline", rng, fsa_k);
}

CandidateRoll roll_candidate(const sim::PlanarPose& start, double start_time, double speed,
                             double curvature, double dt, int horizon) {
  CandidateRoll roll;
  roll.poses = sim::roll_constant_curvature(start, speed, curvature, dt, horizon);
  for (int k = 1; k <= horizon; ++k) roll.times.push_back(start_time + k * dt);
  return roll;
}

namespace {

constexpr double kClearanceCap = 5.0;

/// Occupancy ground truth for anchor frame t targeting t + target_k steps.
sim::BevGroundTruth occ_target(const sim::Episode& ep, int t, int target_k,
                               const model::ModelConfig& mc) {
  const auto& anchor = ep.frames[static_cast<size_t>(t)];
  const auto& future = ep.frames[static_cast<size_t>(t + target_k)];
  return sim::bev_occupancy(ep.actors, anchor.ego, future.ego, future.timestamp, mc.grid_h,
                            mc.grid_w, mc.grid().cell(), mc.extent);
}

/// History window for the action predictor (4 poses ending at t).
std::vector<sim::PlanarPose> pose_history(const sim::Episode& ep, int t) {
  std::vector<sim::PlanarPose> hist;
  for (int u = std::max(0, t - 3); u <= t; ++u) hist.push_back(ep.frames[static_cast<size_t>(u)].ego);
  return hist;
}

/// Rolls the frozen decoder for k = 1..K with the given actions; target
/// poses derive from the anchor pose and the action deltas.
std::vector<BevLatent> rollout_with_actions(const WorldModel& wm, const BevLatent& anchor,
                                            const StreamingMemory& mem,
                                            const std::vector<sim::PlanarPose>& deltas, int k_max,
                                            double dt) {
  std::vector<BevLatent> preds;
  for (int k = 1; k <= k_max; ++k) {
    const auto& d = deltas[static_cast<size_t>(k - 1)];
    const EgoAction action{d.x, d.y, d.yaw, k, wm.cfg.horizons};
    const sim::PlanarPose target = sim::compose(anchor.ego, d);
    preds.push_back(
        wm.decoder->predict_horizon(anchor, mem, action, target, anchor.timestamp + k * dt)
            .refined);
  }
  return preds;
}

Var occupancy_losses(const RunConfig& cfg, const OccupancyModel& om, const WorldModel& wm,
                     const sim::Episode& ep, const std::vector<BevLatent>& latents, int t,
                     int target_k) {
  const auto& mc = wm.cfg;
  const auto& frame = ep.frames[static_cast<size_t>(t)];
  const auto feats = wm.encoder->extract_image_features(frame.images);
  Var adapted = om.adapter->apply(latents[static_cast<size_t>(t)].grid, feats,
                                  wm.encoder->geometry(ep.rig));

  // Action prediction, trained against ground-truth ego motion.
  const auto hist = pose_history(ep, t);
  Var act_pred = om.actions->forward(hist);  // [F,3]
  const int f = mc.horizons;
  Tensor act_gt = Tensor::zeros({f, 3});
  std::vector<sim::PlanarPose> gt_deltas;
  for (int k = 1; k <= f; ++k) {
    const int tk = std::min(t + k, static_cast<int>(ep.frames.size()) - 1);
    const sim::PlanarPose rel =
        sim::compose(frame.ego.inverse(), ep.frames[static_cast<size_t>(tk)].ego);
    act_gt[(k - 1) * 3 + 0] = rel.x;
    act_gt[(k - 1) * 3 + 1] = rel.y;
    act_gt[(k - 1) * 3 + 2] = rel.yaw;
    gt_deltas.push_back(rel);
  }
  Var action_loss = num::mse(act_pred, num::constant(act_gt));

  OccupancyHead::Output out;
  if (om.fsa_k > 0) {
    // Condition the rollout on the (detached) predicted actions.
    std::vector<sim::PlanarPose> deltas;
    for (int k = 1; k <= om.fsa_k; ++k) {
      deltas.push_back({act_pred->value[(k - 1) * 3 + 0], act_pred->value[(k - 1) * 3 + 1],
                        act_pred->value[(k - 1) * 3 + 2]});
    }
    const auto mem = memory_before(latents, t, mc.memory_depth);
    const auto preds = rollout_with_actions(wm, latents[static_cast<size_t>(t)], mem, deltas,
                                            om.fsa_k, ep.config.dt);
    out = om.head->apply(adapted, preds, frame.ego);
  } else {
    out = om.head->apply(adapted, {}, frame.ego);
  }

  const auto gt = occ_target(ep, t, target_k, mc);
  const int hw = mc.grid_h * mc.grid_w;
  std::vector<int64_t> keep;
  std::vector<int> cls_targets;
  for (int64_t i = 0; i < hw; ++i) {
    if (gt.classes[static_cast<size_t>(i)] == sim::kEgoIgnored) continue;
    keep.push_back(i);
    cls_targets.push_back(gt.classes[static_cast<size_t>(i)]);
  }
  Tensor vel_rows = Tensor::zeros({static_cast<int>(keep.size()), 2});
  for (size_t i = 0; i < keep.size(); ++i) {
    vel_rows[static_cast<int64_t>(i) * 2 + 0] = gt.velocity[keep[i] * 2 + 0];
    vel_rows[static_cast<int64_t>(i) * 2 + 1] = gt.velocity[keep[i] * 2 + 1];
  }
  Var logits_flat = num::reshape(out.logits, {hw, sim::kNumClasses});
  Var flow_flat = num::reshape(out.flow, {hw, 2});
  Var ce = num::cross_entropy_mean(num::gather_rows(logits_flat, keep), cls_targets);
  Var flow_mse = num::mse(num::gather_rows(flow_flat, keep), num::constant(vel_rows));
  (void)cfg;
  return num::add(num::add(ce, flow_mse), action_loss);
}

struct PlannerStepLoss {
  Var loss;
  double world_clearance_of_choice = 0.0;
};

PlannerStepLoss planner_losses(const RunConfig& cfg, const PlannerModel& pm, const WorldModel& wm,
                               const sim::Episode& ep, int t_act) {
  const auto& mc = wm.cfg;
  StreamingMemory mem(mc.memory_depth);
  BevLatent anchor;
  for (int u = 0; u <= t_act; ++u) {
    anchor = wm.encoder->encode_frame(ep.frames[static_cast<size_t>(u)], ep.rig, mem);
  }
  // encode_frame pushed the anchor into mem; entries before it are what the
  // decoder may attend to.
  StreamingMemory dec_mem(mc.memory_depth);
  for (const auto& e : mem.entries()) {
    if (e.timestamp < anchor.timestamp) dec_mem.push(e);
  }

  const auto& frame = ep.frames[static_cast<size_t>(t_act)];
  const auto feats = wm.encoder->extract_image_features(frame.images);
  Var adapted = pm.adapter->apply(anchor.grid, feats, wm.encoder->geometry(ep.rig));
  BevLatent adapted_latent{adapted, anchor.ego, anchor.timestamp};

  const sim::PlanarPose prev = ep.frames[static_cast<size_t>(t_act - 1)].ego;
  const sim::PlanarPose step = sim::compose(prev.inverse(), frame.ego);
  const double speed = std::hypot(step.x, step.y) / ep.config.dt;

  Var loss = num::constant(Tensor(0.0));
  double best_score = -1e300;
  int best_idx = 0;
  std::vector<double> clearances;
  for (int c = 0; c < 5; ++c) {
    const double curv = kPlannerPrimitives[c].curvature;
    const CandidateRoll roll =
        roll_candidate(frame.ego, frame.timestamp, speed, curv, ep.config.dt, mc.horizons);
    const double clearance =
        sim::min_clearance(ep.actors, roll.poses, roll.times, kClearanceCap);
    clearances.push_back(clearance);

    std::vector<BevLatent> preds;
    for (int k = 1; k <= pm.fsa_k; ++k) {
      const EgoAction action = EgoAction::from_poses(frame.ego, roll.poses[static_cast<size_t>(k - 1)],
                                                     k, mc.horizons);
      preds.push_back(wm.decoder
                          ->predict_horizon(anchor, dec_mem, action,
                                            roll.poses[static_cast<size_t>(k - 1)],
                                            roll.times[static_cast<size_t>(k - 1)])
                          .refined);
    }
    const sim::PlanarPose mid_rel =
        sim::compose(frame.ego.inverse(), roll.poses[static_cast<size_t>(pm.fsa_k - 1)]);
    const sim::PlanarPose end_rel =
        sim::compose(frame.ego.inverse(), roll.poses.back());
    Tensor ref = Tensor::zeros({1, 3});
    ref[0] = mid_rel.x;
    ref[1] = mid_rel.y;
    ref[2] = 1.0;

    Var sw = pm.world_head->score(curv, speed, {end_rel.x, end_rel.y}, ref, preds, frame.ego);
    std::vector<BevLatent> current_only(static_cast<size_t>(pm.fsa_k), adapted_latent);
    Var sb = pm.baseline_head->score(curv, speed, {end_rel.x, end_rel.y}, ref, current_only,
                                     frame.ego);
    const double target = clearance / kClearanceCap;
    Var target_v = num::constant(Tensor({1, 1}, {target}));
    loss = num::add(loss, num::add(num::mse(sw, target_v), num::mse(sb, target_v)));
    if (sw->value[0] > best_score) {
      best_score = sw->value[0];
      best_idx = c;
    }
  }
  (void)cfg;
  return {loss, clearances[static_cast<size_t>(best_idx)]};
}

}  // namespace

StageResult train_downstream_stage(const RunConfig& cfg, const Dataset& ds,
                                   const std::string& out_dir) {
  require_file(cfg.encoder_checkpoint, "encoder (downstream dependency)");
  require_file(cfg.decoder_checkpoint, "decoder (downstream dependency)");
  WorldModel wm(cfg.model, derive_seed(cfg.seed, "init"));
  wm.load_encoder(cfg.encoder_checkpoint);
  wm.load_decoder(cfg.decoder_checkpoint);
  wm.freeze_world();

  AdamW opt(AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  StageResult result;
  result.steps = cfg.steps;

  if (cfg.task == "occupancy") {
    OccupancyModel om(cfg.model, derive_seed(cfg.seed, "ds_init"), cfg.fsa_k, cfg.model.horizons,
                      cfg.world.dt);
    std::vector<std::vector<BevLatent>> cache;
    for (const auto& ep : ds.train) cache.push_back(encode_episode(wm, ep));
    LossCsv log(out_dir, "step,loss");
    write_run_manifest(out_dir, "downstream-occupancy", cfg);
    const int target_k = 2;  // t + 1.0 s at 0.5 s frames
    for (int step = 0; step < cfg.steps; ++step) {
      Rng rng(derive_seed(cfg.seed, 0x120000u + static_cast<uint64_t>(step)));
      const size_t ei = static_cast<size_t>(rng.randint(static_cast<int64_t>(ds.train.size())));
      const auto& ep = ds.train[ei];
      const int lo = 3;
      const int hi = static_cast<int>(ep.frames.size()) - 1 - target_k;
      const int t = lo + static_cast<int>(rng.randint(std::max(1, hi - lo + 1)));
      Var loss = occupancy_losses(cfg, om, wm, ep, cache[ei], t, target_k);
      const double lv = loss->value.scalar();
      if (step == 0) result.initial_loss = lv;
      result.final_loss = lv;
      if (step % cfg.log_every == 0 || step + 1 == cfg.steps) log.row(step, lv);
      om.params.zero_grad();
      num::backward(loss);
      opt.step(om.params);
    }
    result.checkpoint = (fs::path(out_dir) / "downstream.bwck").string();
    num::save_checkpoint(om.params, result.checkpoint);
    return result;
  }
  if (cfg.task == "planner") {
    PlannerModel pm(cfg.model, derive_seed(cfg.seed, "ds_init"), cfg.fsa_k);
    LossCsv log(out_dir, "step,loss");
    write_run_manifest(out_dir, "downstream-planner", cfg);
    for (int step = 0; step < cfg.steps; ++step) {
      const bool crossing = step % 2 == 0;
      const sim::Episode ep = sim::generate_planner_scenario(
          cfg.world, derive_seed(cfg.seed, 0x130000u + static_cast<uint64_t>(step)), crossing);
      auto [loss, chosen_clearance] = planner_losses(cfg, pm, wm, ep, 3);
      (void)chosen_clearance;
      const double lv = loss->value.scalar();
      if (step == 0) result.initial_loss = lv;
      result.final_loss = lv;
      if (step % cfg.log_every == 0 || step + 1 == cfg.steps) log.row(step, lv);
      pm.params.zero_grad();
      num::backward(loss);
      opt.step(pm.params);
    }
    result.checkpoint = (fs::path(out_dir) / "downstream.bwck").string();
    num::save_checkpoint(pm.params, result.checkpoint);
    return result;
  }
  throw std::invalid_argument("unknown downstream task '" + cfg.task +
                              "' (expected occupancy or planner)");
}

ForecastEval eval_forecast(const RunConfig& cfg, WorldModel& wm,
                           const std::vector<sim::Episode>& episodes, model::PredictMode mode,
                           bool encoder_floor) {
  wm.freeze_world();
  const WaypointSchedule sched = schedule_of(cfg);
  const int f = cfg.model.horizons;
  std::vector<std::vector<double>> cds(static_cast<size_t>(f));
  std::vector<std::vector<double>> dyn_cds(static_cast<size_t>(f));

  ForecastEval out;
  for (const auto& ep : episodes) {
    const auto latents = encode_episode(wm, ep);
    const int n_frames = static_cast<int>(ep.frames.size());
    const auto rays = eval::future_lidar_rays(ep.config);
    for (int t = cfg.model.memory_depth; t + f < n_frames; t += 3) {
      std::vector<sim::PlanarPose> poses;
      std::vector<double> times;
      for (int k = 1; k <= f; ++k) {
        poses.push_back(ep.frames[static_cast<size_t>(t + k)].ego);
        times.push_back(ep.frames[static_cast<size_t>(t + k)].timestamp);
      }
      const auto mem = memory_before(latents, t, cfg.model.memory_depth);
      std::vector<FuturePrediction> preds;
      if (!encoder_floor) {
        preds = wm.decoder->predict(mode, latents[static_cast<size_t>(t)], mem, poses, times);
      }
      ++out.samples;
      for (int k = 1; k <= f; ++k) {
        const Var latent = encoder_floor ? latents[static_cast<size_t>(t + k)].grid
                                         : preds[static_cast<size_t>(k - 1)].refined.grid;
        const Tensor pred_pts = eval::forecast_pointcloud(*wm.osm, latent, rays, sched);
        const Tensor& gt_pts = ep.frames[static_cast<size_t>(t + k)].lidar_points;
        if (eval::filter_range(pred_pts, cfg.eval_range).dim(0) == 0 ||
            eval::filter_range(gt_pts, cfg.eval_range).dim(0) == 0) {
          continue;  // nothing in range this frame
        }
        const auto cd = eval::chamfer(pred_pts, gt_pts, cfg.eval_range);
        cds[static_cast<size_t>(k - 1)].push_back(cd.cd);

        // Dynamic-region chamfer: both clouds restricted to moving boxes.
        const auto& frame_tk = ep.frames[static_cast<size_t>(t + k)];
        auto dynamic_filter = [&](const Tensor& pts) {
          std::vector<double> kept;
          for (int64_t i = 0; i < pts.dim(0); ++i) {
            const sim::Vec3 p_ego{pts[i * 3 + 0], pts[i * 3 + 1], pts[i * 3 + 2]};
            const sim::Vec3 p_world = frame_tk.ego.apply(p_ego);
            for (const auto& b : frame_tk.boxes) {
              if (b.is_dynamic() && b.box_at(0.0).contains(p_world, 0.3)) {
                kept.push_back(p_ego.x);
                kept.push_back(p_ego.y);
                kept.push_back(p_ego.z);
                break;
              }
            }
          }
          const int n_kept = static_cast<int>(kept.size() / 3);
  return Tensor({n_kept, 3}, std::move(kept));
        };
        const Tensor pred_dyn = eval::filter_range(dynamic_filter(pred_pts), cfg.eval_range);
        const Tensor gt_dyn = eval::filter_range(dynamic_filter(gt_pts), cfg.eval_range);
        if (pred_dyn.dim(0) > 0 && gt_dyn.dim(0) > 0) {
          dyn_cds[static_cast<size_t>(k - 1)].push_back(
              eval::chamfer(pred_dyn, gt_dyn, cfg.eval_range).cd);
        }
      }
    }
  }
  std::vector<double> horizon_means;
  std::vector<double> dyn_means;
  for (int k = 0; k < f; ++k) {
    const auto& v = cds[static_cast<size_t>(k)];
    out.cd_per_horizon.push_back(v.empty() ? -1.0
                                           : eval::pairwise_sum(v) / static_cast<double>(v.size()));
    if (!v.empty()) horizon_means.push_back(out.cd_per_horizon.back());
    const auto& d = dyn_cds[static_cast<size_t>(k)];
    out.cd_dynamic_per_horizon.push_back(
        d.empty() ? -1.0 : eval::pairwise_sum(d) / static_cast<double>(d.size()));
    if (!d.empty()) dyn_means.push_back(out.cd_dynamic_per_horizon.back());
  }
  out.avg_cd = horizon_means.empty()
                   ? -1.0
                   : eval::pairwise_sum(horizon_means) / static_cast<double>(horizon_means.size());
  out.avg_dynamic_cd =
      dyn_means.empty() ? -1.0
                        : eval::pairwise_sum(dyn_means) / static_cast<double>(dyn_means.size());
  return out;
}

OccupancyEval eval_occupancy(const RunConfig& cfg, WorldModel& wm, OccupancyModel& om,
                             const std::vector<sim::Episode>& episodes) {
  wm.freeze_world();
  om.params.set_trainable(false);
  const int target_k = 2;
  std::vector<double> mious, geos, maves;
  OccupancyEval out;
  for (const auto& ep : episodes) {
    const auto latents = encode_episode(wm, ep);
    for (int t = 3; t + target_k < static_cast<int>(ep.frames.size()); t += 2) {
      const auto& frame = ep.frames[static_cast<size_t>(t)];
      const auto feats = wm.encoder->extract_image_features(frame.images);
      Var adapted = om.adapter->apply(latents[static_cast<size_t>(t)].grid, feats,
                                      wm.encoder->geometry(ep.rig));
      OccupancyHead::Output pred;
      if (om.fsa_k > 0) {
        const auto acts = om.actions->predict(pose_history(ep, t));
        const auto mem = memory_before(latents, t, cfg.model.memory_depth);
        const auto preds = rollout_with_actions(wm, latents[static_cast<size_t>(t)], mem,
                                                acts.deltas, om.fsa_k, ep.config.dt);
        pred = om.head->apply(adapted, preds, frame.ego);
      } else {
        pred = om.head->apply(adapted, {}, frame.ego);
      }
      const auto gt = occ_target(ep, t, target_k, cfg.model);
      const auto metrics = eval::occupancy_metrics(eval::decode_classes(pred.logits->value),
                                                   gt.classes, pred.flow->value, gt.velocity);
      mious.push_back(metrics.miou);
      geos.push_back(metrics.iou_geo);
      if (metrics.dynamic_cells > 0) maves.push_back(metrics.mave);
      ++out.samples;
    }
  }
  om.params.set_trainable(true);
  out.miou = mious.empty() ? 0.0 : eval::pairwise_sum(mious) / static_cast<double>(mious.size());
  out.iou_geo = geos.empty() ? 0.0 : eval::pairwise_sum(geos) / static_cast<double>(geos.size());
  out.mave = maves.empty() ? 0.0 : eval::pairwise_sum(maves) / static_cast<double>(maves.size());
  return out;
}

PlannerEval eval_planner(const RunConfig& cfg, WorldModel& wm, PlannerModel& pm, int n_scenarios,
                         uint64_t scenario_seed) {
  wm.freeze_world();
  pm.params.set_trainable(false);
  const int t_act = 3;
  int world_ok = 0, base_ok = 0;
  for (int i = 0; i < n_scenarios; ++i) {
    const bool crossing = i % 2 == 0;
    const sim::Episode ep =
        sim::generate_planner_scenario(cfg.world, derive_seed(scenario_seed, static_cast<uint64_t>(i)),
                                       crossing);
    StreamingMemory mem(cfg.model.memory_depth);
    BevLatent anchor;
    for (int u = 0; u <= t_act; ++u) {
      anchor = wm.encoder->encode_frame(ep.frames[static_cast<size_t>(u)], ep.rig, mem);
    }
    StreamingMemory dec_mem(cfg.model.memory_depth);
    for (const auto& e : mem.entries()) {
      if (e.timestamp < anchor.timestamp) dec_mem.push(e);
    }
    const auto& frame = ep.frames[static_cast<size_t>(t_act)];
    const auto feats = wm.encoder->extract_image_features(frame.images);
    Var adapted = pm.adapter->apply(anchor.grid, feats, wm.encoder->geometry(ep.rig));
    BevLatent adapted_latent{adapted, anchor.ego, anchor.timestamp};
    const sim::PlanarPose prev = ep.frames[static_cast<size_t>(t_act - 1)].ego;
    const sim::PlanarPose step = sim::compose(prev.inverse(), frame.ego);
    const double speed = std::hypot(step.x, step.y) / ep.config.dt;

    std::vector<double> clearances, w_scores, b_scores;
    for (int c = 0; c < 5; ++c) {
      const double curv = kPlannerPrimitives[c].curvature;
      const CandidateRoll roll =
          roll_candidate(frame.ego, frame.timestamp, speed, curv, ep.config.dt, cfg.model.horizons);
      clearances.push_back(sim::min_clearance(ep.actors, roll.poses, roll.times, kClearanceCap));
      std::vector<BevLatent> preds;
      for (int k = 1; k <= pm.fsa_k; ++k) {
        const EgoAction action = EgoAction::from_poses(
            frame.ego, roll.poses[static_cast<size_t>(k - 1)], k, cfg.model.horizons);
        preds.push_back(wm.decoder
                            ->predict_horizon(anchor, dec_mem, action,
                                              roll.poses[static_cast<size_t>(k - 1)],
                                              roll.times[static_cast<size_t>(k - 1)])
                            .refined);
      }
      const sim::PlanarPose mid_rel =
          sim::compose(frame.ego.inverse(), roll.poses[static_cast<size_t>(pm.fsa_k - 1)]);
      const sim::PlanarPose end_rel = sim::compose(frame.ego.inverse(), roll.poses.back());
      Tensor ref = Tensor::zeros({1, 3});
      ref[0] = mid_rel.x;
      ref[1] = mid_rel.y;
      ref[2] = 1.0;
      w_scores.push_back(pm.world_head
                             ->score(curv, speed, {end_rel.x, end_rel.y}, ref, preds, frame.ego)
                             ->value[0]);
      std::vector<BevLatent> current_only(static_cast<size_t>(pm.fsa_k), adapted_latent);
      b_scores.push_back(pm.baseline_head
                             ->score(curv, speed, {end_rel.x, end_rel.y}, ref, current_only,
                                     frame.ego)
                             ->value[0]);
    }
    auto argmax = [](const std::vector<double>& v) {
      int best = 0;
      for (int i2 = 1; i2 < static_cast<int>(v.size()); ++i2) {
        if (v[static_cast<size_t>(i2)] > v[static_cast<size_t>(best)]) best = i2;
      }
      return best;
    };
    const double straight = clearances[2];
    if (clearances[static_cast<size_t>(argmax(w_scores))] > straight) ++world_ok;
    if (clearances[static_cast<size_t>(argmax(b_scores))] > straight) ++base_ok;
  }
  pm.params.set_trainable(true);
  PlannerEval out;
  out.scenarios = n_scenarios;
  out.success_rate = n_scenarios ? static_cast<double>(world_ok) / n_scenarios : 0.0;
  out.baseline_success = n_scenarios ? static_cast<double>(base_ok) / n_scenarios : 0.0;
  return out;
}

double heldout_depth_mae(const RunConfig& cfg, WorldModel& wm,
                         const std::vector<sim::Episode>& episodes) {
  wm.freeze_world();
  const WaypointSchedule sched = schedule_of(cfg);
  const RayBudget lidar_only{cfg.rays.n_lidar, 0, 0};
  std::vector<double> errors;
  for (const auto& ep : episodes) {
    const auto latents = encode_episode(wm, ep);
    for (int t = 0; t < static_cast<int>(ep.frames.size()); t += 2) {
      const auto rays = sample_rays(ep.frames[static_cast<size_t>(t)], ep.rig, ep.config,
                                    lidar_only, derive_seed(ep.seed, static_cast<uint64_t>(t)));
      const auto render =
          wm.osm->render_from_bev(latents[static_cast<size_t>(t)].grid, rays, sched);
      for (size_t i = 0; i < rays.size(); ++i) {
        if (rays[i].source != Ray::Source::kLidar) continue;
        errors.push_back(std::abs(render.depth->value[static_cast<int64_t>(i)] -
                                  rays[i].depth_target));
      }
    }
  }
  return errors.empty() ? -1.0
                        : eval::pairwise_sum(errors) / static_cast<double>(errors.size());
}

}  // namespace bevworld::run
