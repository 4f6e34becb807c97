#pragma once

#include <vector>

#include "bevworld/model/osm.hpp"

namespace bevworld::model {

/// Relative ego motion from the anchor frame t to t+k, plus the horizon
/// index (k in 1..F at fixed dt).
struct EgoAction {
  double dx = 0.0, dy = 0.0, dyaw = 0.0;
  int k = 1;
  int horizon_total = 6;  // F

  static EgoAction from_poses(const sim::PlanarPose& at_t, const sim::PlanarPose& at_tk, int k,
                              int horizon_total);
};

struct FuturePrediction {
  Var propagated;     // B'_{t+k}, frame t, [H,W,C]
  Var flow;           // [H,W,2] meters in frame-t coordinates
  BevLatent refined;  // B-hat_{t+k}, stamped with the target pose/time
};

enum class PredictMode { kDirect, kAutoregressive };

/// Flow-based future decoder: action embedding, attention propagation over
/// the conditioned grid and warped memory, motion head, inverse-distance
/// warp into the target frame, and convolutional refinement.
class FutureDecoder {
 public:
  FutureDecoder(const ModelConfig& cfg, ParamSet& ps, Rng& rng);

  /// Action embedding a_{t+k} in R^C.
  Var encode_action(const EgoAction& a) const;

  /// Stacked self/cross attention over the action-conditioned grid and the
  /// ego-aligned memory entries. Empty memory: self-interaction only.
  Var future_propagation(const Var& conditioned, const sim::PlanarPose& anchor_pose,
                         const StreamingMemory& memory) const;

  /// Per-cell flow from B', bounded to +-5k meters at horizon k.
  Var motion_head(const Var& propagated, int k) const;

  /// One full horizon step from the anchor latent.
  FuturePrediction predict_horizon(const BevLatent& anchor, const StreamingMemory& memory,
                                   const EgoAction& action, const sim::PlanarPose& target_pose,
                                   double target_time) const;

  /// Direct mode: every horizon from the anchor. Autoregressive mode:
  /// chained one-step predictions feeding refined latents back.
  /// target_poses[k-1] is the ego pose at t+k; actions are anchored at t.
  std::vector<FuturePrediction> predict(PredictMode mode, const BevLatent& anchor,
                                        const StreamingMemory& memory,
                                        const std::vector<sim::PlanarPose>& target_poses,
                                        const std::vector<double>& target_times) const;

  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  Mlp action_mlp_;
  struct Block {
    NeighborhoodAttention self_attn;
    NeighborhoodAttention cross_attn;
  };
  std::vector<Block> blocks_;
  Mlp motion_mlp_;
  Conv2d refine_a1_, refine_a2_, refine_b1_, refine_b2_;
};

/// Applies the rigid frame change T (frame t -> frame t+k) to flowed grid
/// positions g + f. `flow` is [H,W,2]; returns [H*W,2] positions in the
/// target frame, differentiable through the flow.
Var transform_future_positions(const Var& flow, const sim::PlanarPose& t_transform,
                               const GridSpec& gs);

/// Inverse-distance warp of source features onto the target lattice.
/// positions: [H*W,2] source positions in the target frame (Var). Neighbor
/// selection uses current values; weights 1/(d+1e-4) over the N nearest
/// (ties by source index), normalized. Targets whose nearest source is
/// farther than cutoff_cells cells get zeros.
Var warp_to_grid(const Var& features_grid, const Var& positions, const GridSpec& gs,
                 int neighbors, double cutoff_cells);

/// Mean squared latent alignment error; the target is taken as constant.
Var latent_loss(const Var& predicted, const Var& target);

}  // namespace bevworld::model
