#pragma once

#include <vector>

#include "bevworld/model/future.hpp"

namespace bevworld::model {

/// Planar relative motions for k = 1..F at fixed dt, consumable as
/// EgoAction inputs.
struct PredictedActions {
  std::vector<sim::PlanarPose> deltas;  // (dx, dy, dyaw) per horizon
  bool used_fallback = false;
};

/// AD-MLP style short-horizon motion regressor over recent ego states. With
/// fewer than 4 history poses it falls back to constant-velocity
/// extrapolation (zero motion when velocity is not estimable).
class ActionPredictor {
 public:
  ActionPredictor() = default;
  ActionPredictor(ParamSet& ps, Rng& rng, int horizons, double dt);

  /// history: time-ordered poses ending at the current one.
  PredictedActions predict(const std::vector<sim::PlanarPose>& history) const;

  /// Training path: feature row + graph output [F,3] (requires >= 4 poses).
  Var forward(const std::vector<sim::PlanarPose>& history) const;

  int horizons() const { return horizons_; }

 private:
  Tensor features(const std::vector<sim::PlanarPose>& history) const;
  Mlp mlp_;
  int horizons_ = 6;
  double dt_ = 0.5;
};

/// Future Spatial Attention: task queries pull features from predicted
/// future latents at transformed sample points. Offsets come from the
/// query (values only — sampling coordinates carry no gradient); attention
/// logits and the projection are differentiable.
class Fsa {
 public:
  Fsa() = default;
  Fsa(const ModelConfig& cfg, ParamSet& ps, const std::string& name, Rng& rng, int k_frames,
      int layers = 3);

  /// q: [Nq, Cq]; ref_points: [Nq, 3] ego-frame meters at the anchor time;
  /// preds: K future latents (with poses); anchor_pose: ego pose at t.
  Var apply(const Var& q, const Tensor& ref_points, const std::vector<BevLatent>& preds,
            const sim::PlanarPose& anchor_pose) const;

  int k_frames() const { return k_; }

 private:
  struct Layer {
    Linear offsets;   // Cq -> K*J*3
    Linear logits;    // Cq -> K*J
    Linear project;   // C -> Cq
  };
  ModelConfig cfg_;
  std::vector<Layer> layers_;
  int k_ = 2;
};

/// Future occupancy head: per-cell class logits and per-cell velocity at a
/// future timestamp, from the adapted latent plus FSA-updated queries.
class OccupancyHead {
 public:
  OccupancyHead() = default;
  OccupancyHead(const ModelConfig& cfg, ParamSet& ps, Rng& rng, int k_frames);

  struct Output {
    Var logits;  // [H,W,Ns]
    Var flow;    // [H,W,2]
  };
  Output apply(const Var& adapted_bev, const std::vector<BevLatent>& preds,
               const sim::PlanarPose& anchor_pose) const;

  int k_frames() const { return k_; }

 private:
  ModelConfig cfg_;
  Linear q_init_;
  Fsa fsa_;
  Linear trunk_;
  Linear cls_head_, flow_head_;
  int k_ = 2;
};

/// Candidate constant-curvature primitive for the planner.
struct MotionPrimitive {
  const char* name;
  double curvature;
};
inline constexpr MotionPrimitive kPlannerPrimitives[5] = {
    {"hard_left", 0.16}, {"soft_left", 0.08}, {"straight", 0.0},
    {"soft_right", -0.08}, {"hard_right", -0.16}};

/// Scores candidate rollouts by FSA-pooling the (candidate-conditioned)
/// predicted futures; outputs predicted clearance per candidate.
class PlannerHead {
 public:
  PlannerHead() = default;
  PlannerHead(const ModelConfig& cfg, ParamSet& ps, const std::string& name, Rng& rng,
              int k_frames);

  /// One candidate: query from its kinematics, FSA over its predicted
  /// futures, scalar clearance score [1,1].
  Var score(double curvature, double speed, const sim::Vec2& path_end,
            const Tensor& ref_point /*[1,3]*/, const std::vector<BevLatent>& preds,
            const sim::PlanarPose& anchor_pose) const;

  int k_frames() const { return k_; }

 private:
  ModelConfig cfg_;
  Linear q_init_;  // 4 kinematic features -> Cq
  Fsa fsa_;
  Mlp score_mlp_;
  int k_ = 3;
};

}  // namespace bevworld::model
