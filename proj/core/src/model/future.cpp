#include "bevworld/model/future.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bevworld::model {

using namespace num;

EgoAction EgoAction::from_poses(const sim::PlanarPose& at_t, const sim::PlanarPose& at_tk, int k,
                                int horizon_total) {
  const sim::PlanarPose rel = sim::compose(at_t.inverse(), at_tk);
  return {rel.x, rel.y, rel.yaw, k, horizon_total};
}

FutureDecoder::FutureDecoder(const ModelConfig& cfg, ParamSet& ps, Rng& rng) : cfg_(cfg) {
  action_mlp_ = Mlp(ps, "decoder.action", {5, 32, cfg.latent_c}, rng);
  for (int b = 0; b < 3; ++b) {
    const std::string base = "decoder.prop" + std::to_string(b);
    Block blk{NeighborhoodAttention(ps, base + ".self", cfg.latent_c, rng),
              NeighborhoodAttention(ps, base + ".cross", cfg.latent_c, rng)};
    blocks_.push_back(std::move(blk));
  }
  motion_mlp_ = Mlp(ps, "decoder.motion", {cfg.latent_c, 32, 2}, rng);
  refine_a1_ = Conv2d(ps, "decoder.refine0.conv1", 3, 3, cfg.latent_c, cfg.latent_c, 1, 1, rng);
  refine_a2_ = Conv2d(ps, "decoder.refine0.conv2", 3, 3, cfg.latent_c, cfg.latent_c, 1, 1, rng,
                      0.01);
  refine_b1_ = Conv2d(ps, "decoder.refine1.conv1", 3, 3, cfg.latent_c, cfg.latent_c, 1, 1, rng);
  refine_b2_ = Conv2d(ps, "decoder.refine1.conv2", 3, 3, cfg.latent_c, cfg.latent_c, 1, 1, rng,
                      0.01);
}

Var FutureDecoder::encode_action(const EgoAction& a) const {
  Tensor in = Tensor::zeros({1, 5});
  in[0] = a.dx / 20.0;
  in[1] = a.dy / 20.0;
  in[2] = std::sin(a.dyaw);
  in[3] = std::cos(a.dyaw);
  in[4] = static_cast<double>(a.k) / std::max(1, a.horizon_total);
  return action_mlp_.apply(constant(in));  // [1, C]
}

Var FutureDecoder::future_propagation(const Var& conditioned, const sim::PlanarPose& anchor_pose,
                                      const StreamingMemory& memory) const {
  const GridSpec gs = cfg_.grid();
  std::vector<Var> warped;
  for (const auto& m : memory.entries()) {
    warped.push_back(warp_grid(m.grid, m.ego, anchor_pose, gs));
  }
  Var x = conditioned;
  for (const auto& blk : blocks_) {
    x = add(x, blk.self_attn.apply(x, x));
    for (const auto& w : warped) {
      x = add(x, blk.cross_attn.apply(x, w));
    }
  }
  return x;
}

Var FutureDecoder::motion_head(const Var& propagated, int k) const {
  const GridSpec gs = cfg_.grid();
  Var flat = reshape(propagated, {gs.h * gs.w, cfg_.latent_c});
  Var raw = motion_mlp_.apply(flat);  // [HW, 2]
  Var bounded = mul_scalar(num::tanh(raw), 5.0 * k);
  return reshape(bounded, {gs.h, gs.w, 2});
}

Var transform_future_positions(const Var& flow, const sim::PlanarPose& t_transform,
                               const GridSpec& gs) {
  const int hw = gs.h * gs.w;
  Var g_f = add(reshape(flow, {hw, 2}), constant(gs.centers()));
  // p' = R p + t as row vectors: p' = p R^T + t.
  const double c = std::cos(t_transform.yaw), s = std::sin(t_transform.yaw);
  Tensor rot_t({2, 2}, {c, s, -s, c});
  Tensor trans({2}, {t_transform.x, t_transform.y});
  return add_rowvec(matmul(g_f, constant(rot_t)), constant(trans));
}

Var warp_to_grid(const Var& features_grid, const Var& positions, const GridSpec& gs,
                 int neighbors, double cutoff_cells) {
  if (neighbors < 1) throw std::invalid_argument("warp_to_grid: neighbors must be >= 1");
  const int hw = gs.h * gs.w;
  const int c = features_grid->value.dim(2);
  const int nn = std::min(neighbors, hw);
  const double cutoff = cutoff_cells * gs.cell();
  const Tensor centers = gs.centers();
  const Tensor& pos = positions->value;

  // Nearest sources per target cell, ties broken by source index.
  std::vector<int64_t> idx(static_cast<size_t>(hw) * nn);
  Tensor keep_mask = Tensor::zeros({hw, 1});
  std::vector<std::pair<double, int64_t>> best;
  for (int m = 0; m < hw; ++m) {
    const double tx = centers[static_cast<int64_t>(m) * 2 + 0];
    const double ty = centers[static_cast<int64_t>(m) * 2 + 1];
    best.clear();
    for (int64_t s = 0; s < hw; ++s) {
      const double dx = pos[s * 2 + 0] - tx;
      const double dy = pos[s * 2 + 1] - ty;
      best.emplace_back(dx * dx + dy * dy, s);
    }
    std::partial_sort(best.begin(), best.begin() + nn, best.end());
    for (int t = 0; t < nn; ++t) idx[static_cast<size_t>(m) * nn + t] = best[static_cast<size_t>(t)].second;
    keep_mask[m] = std::sqrt(best[0].first) <= cutoff ? 1.0 : 0.0;
  }

  // Differentiable part, neighbor indices fixed.
  Var flat_feats = reshape(features_grid, {hw, c});
  Var g_pos = gather_rows(positions, idx);  // [hw*nn, 2]
  Tensor rep_centers = Tensor::zeros({hw * nn, 2});
  for (int m = 0; m < hw; ++m) {
    for (int t = 0; t < nn; ++t) {
      rep_centers[(static_cast<int64_t>(m) * nn + t) * 2 + 0] = centers[static_cast<int64_t>(m) * 2 + 0];
      rep_centers[(static_cast<int64_t>(m) * nn + t) * 2 + 1] = centers[static_cast<int64_t>(m) * 2 + 1];
    }
  }
  Var diff = sub(g_pos, constant(rep_centers));
  // The 1e-12 under the root keeps the derivative finite at exact hits.
  Var dist = num::sqrt(add_scalar(sum_lastdim(square(diff)), 1e-12));  // [hw*nn, 1]
  Var wtilde = reciprocal(add_scalar(dist, 1e-4));
  Var w_rows = reshape(wtilde, {hw, nn});
  Var w_norm = mul_colvec(w_rows, reciprocal(sum_lastdim(w_rows)));  // rows sum to 1
  Var gathered = gather_rows(flat_feats, idx);                       // [hw*nn, c]
  Var weighted = mul_colvec(gathered, reshape(w_norm, {hw * nn, 1}));
  Var out = sum_axis(reshape(weighted, {hw, nn, c}), 1);             // [hw, c]
  out = mul_colvec(out, constant(keep_mask));
  return reshape(out, {gs.h, gs.w, c});
}

FuturePrediction FutureDecoder::predict_horizon(const BevLatent& anchor,
                                                const StreamingMemory& memory,
                                                const EgoAction& action,
                                                const sim::PlanarPose& target_pose,
                                                double target_time) const {
  const GridSpec gs = cfg_.grid();
  const int hw = gs.h * gs.w;

  Var embed = encode_action(action);  // [1, C]
  Var flat = reshape(anchor.grid, {hw, cfg_.latent_c});
  Var conditioned = reshape(add_rowvec(flat, reshape(embed, {cfg_.latent_c})),
                            {gs.h, gs.w, cfg_.latent_c});

  FuturePrediction pred;
  pred.propagated = future_propagation(conditioned, anchor.ego, memory);
  pred.flow = motion_head(pred.propagated, action.k);

  const sim::PlanarPose t_change = sim::frame_transform(anchor.ego, target_pose);
  Var positions = transform_future_positions(pred.flow, t_change, gs);
  Var warped = warp_to_grid(pred.propagated, positions, gs, cfg_.warp_neighbors,
                            cfg_.warp_cutoff_cells);

  Var x = add(warped, refine_a2_.apply(num::tanh(refine_a1_.apply(warped))));
  x = add(x, refine_b2_.apply(num::tanh(refine_b1_.apply(x))));
  pred.refined = BevLatent{x, target_pose, target_time};
  return pred;
}

std::vector<FuturePrediction> FutureDecoder::predict(
    PredictMode mode, const BevLatent& anchor, const StreamingMemory& memory,
    const std::vector<sim::PlanarPose>& target_poses,
    const std::vector<double>& target_times) const {
  if (target_poses.size() != target_times.size()) {
    throw std::invalid_argument("predict: poses/times size mismatch");
  }
  const int f = static_cast<int>(target_poses.size());
  if (f > cfg_.horizons) {
    throw std::invalid_argument("predict: " + std::to_string(f) +
                                " horizons exceed the trained embedding range of " +
                                std::to_string(cfg_.horizons));
  }
  std::vector<FuturePrediction> out;
  out.reserve(static_cast<size_t>(f));
  if (mode == PredictMode::kDirect) {
    for (int k = 1; k <= f; ++k) {
      const EgoAction a = EgoAction::from_poses(anchor.ego, target_poses[static_cast<size_t>(k - 1)],
                                                k, cfg_.horizons);
      out.push_back(predict_horizon(anchor, memory, a, target_poses[static_cast<size_t>(k - 1)],
                                    target_times[static_cast<size_t>(k - 1)]));
    }
  } else {
    BevLatent cur = anchor;
    StreamingMemory rolled(memory.capacity());
    for (const auto& e : memory.entries()) rolled.push(e);
    for (int k = 1; k <= f; ++k) {
      const EgoAction a = EgoAction::from_poses(cur.ego, target_poses[static_cast<size_t>(k - 1)],
                                                1, cfg_.horizons);
      FuturePrediction p = predict_horizon(cur, rolled, a, target_poses[static_cast<size_t>(k - 1)],
                                           target_times[static_cast<size_t>(k - 1)]);
      rolled.push(cur);
      cur = p.refined;
      out.push_back(std::move(p));
    }
  }
  return out;
}

Var latent_loss(const Var& predicted, const Var& target) {
  if (!predicted->value.same_shape(target->value)) {
    throw std::invalid_argument("latent_loss: shape mismatch " +
                                shape_str(predicted->value.shape()) + " vs " +
                                shape_str(target->value.shape()));
  }
  return mse(predicted, stopgrad(target));
}

}  // namespace bevworld::model
