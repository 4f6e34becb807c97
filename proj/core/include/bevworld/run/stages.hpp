#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bevworld/model/downstream.hpp"
#include "bevworld/numerics/checkpoint.hpp"
#include "bevworld/numerics/optim.hpp"
#include "bevworld/run/dataset.hpp"

namespace bevworld::run {

/// World-model bundle: stage-1 parameters (encoder + scene field) and
/// stage-2 parameters (future decoder) in separate sets so stages freeze
/// and checkpoint independently.
struct WorldModel {
  model::ModelConfig cfg;
  num::ParamSet enc_params;
  num::ParamSet dec_params;
  std::unique_ptr<model::WorldEncoder> encoder;
  std::unique_ptr<model::OsmField> osm;
  std::unique_ptr<model::FutureDecoder> decoder;

  WorldModel(const model::ModelConfig& cfg, uint64_t init_seed);
  void load_encoder(const std::string& path) { num::load_checkpoint(enc_params, path); }
  void load_decoder(const std::string& path) { num::load_checkpoint(dec_params, path); }
  void freeze_world() {
    enc_params.set_trainable(false);
    dec_params.set_trainable(false);
  }
};

/// Frozen-encoder streaming pass over an episode; one latent per frame.
std::vector<model::BevLatent> encode_episode(const WorldModel& wm, const sim::Episode& ep);

/// Memory state just before encoding frame t (latents of t-M..t-1).
model::StreamingMemory memory_before(const std::vector<model::BevLatent>& latents, int t,
                                     int capacity);

struct StageResult {
  std::string checkpoint;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int steps = 0;
};

/// Stage 1: world-encoder training against the multimodal scene loss.
StageResult train_encoder_stage(const RunConfig& cfg, const Dataset& ds,
                                const std::string& out_dir);

/// Stage 2: future-decoder training (decoupled by default; cfg.joint trains
/// a fresh encoder simultaneously at the same step budget).
StageResult train_decoder_stage(const RunConfig& cfg, const Dataset& ds,
                                const std::string& out_dir);

/// Downstream bundles (adapter + task heads), trained with a frozen world
/// model.
struct OccupancyModel {
  num::ParamSet params;
  std::unique_ptr<model::Adapter> adapter;
  std::unique_ptr<model::OccupancyHead> head;
  std::unique_ptr<model::ActionPredictor> actions;
  int fsa_k = 2;

  OccupancyModel(const model::ModelConfig& cfg, uint64_t init_seed, int fsa_k, int horizons,
                 double dt);
};

struct PlannerModel {
  num::ParamSet params;
  std::unique_ptr<model::Adapter> adapter;
  std::unique_ptr<model::PlannerHead> world_head;
  std::unique_ptr<model::PlannerHead> baseline_head;
  int fsa_k = 3;

  PlannerModel(const model::ModelConfig& cfg, uint64_t init_seed, int fsa_k);
};

StageResult train_downstream_stage(const RunConfig& cfg, const Dataset& ds,
                                   const std::string& out_dir);

// ---- evaluation ----

struct ForecastEval {
  std::vector<double> cd_per_horizon;
  std::vector<double> cd_dynamic_per_horizon;  // -1 where no dynamic content
  double avg_cd = 0.0;
  double avg_dynamic_cd = -1.0;
  int samples = 0;
};

/// Held-out point-cloud forecasting. `encoder_floor` replaces predictions
/// with the encoder's own latents at t+k (reconstruction bound).
ForecastEval eval_forecast(const RunConfig& cfg, WorldModel& wm,
                           const std::vector<sim::Episode>& episodes, model::PredictMode mode,
                           bool encoder_floor = false);

struct OccupancyEval {
  double miou = 0.0;
  double iou_geo = 0.0;
  double mave = 0.0;
  int samples = 0;
};

OccupancyEval eval_occupancy(const RunConfig& cfg, WorldModel& wm, OccupancyModel& occ,
                             const std::vector<sim::Episode>& episodes);

struct PlannerEval {
  double success_rate = 0.0;      // chosen primitive beats straight's clearance
  double baseline_success = 0.0;  // same metric for the matched baseline head
  int scenarios = 0;
};

PlannerEval eval_planner(const RunConfig& cfg, WorldModel& wm, PlannerModel& pm, int n_scenarios,
                         uint64_t scenario_seed);

/// Candidate rollout used by the planner everywhere: poses and times of a
/// constant-curvature primitive at the given speed.
struct CandidateRoll {
  std::vector<sim::PlanarPose> poses;  // k = 1..F
  std::vector<double> times;
};
CandidateRoll roll_candidate(const sim::PlanarPose& start, double start_time, double speed,
                             double curvature, double dt, int horizon);

/// Run manifest: comment header (stage, git describe, config hash, seed)
/// plus the canonical config echo. Re-parseable by load_config.
void write_run_manifest(const std::string& out_dir, const std::string& stage,
                        const RunConfig& cfg);

/// Rendered-depth mean absolute error over held-out lidar rays.
double heldout_depth_mae(const RunConfig& cfg, WorldModel& wm,
                         const std::vector<sim::Episode>& episodes);

}  // namespace bevworld::run
