#include "bevworld/model/downstream.hpp"

#include <cmath>
#include <stdexcept>

namespace bevworld::model {

using namespace num;

ActionPredictor::ActionPredictor(ParamSet& ps, Rng& rng, int horizons, double dt)
    : horizons_(horizons), dt_(dt) {
  mlp_ = Mlp(ps, "action_pred.mlp", {11, 64, 64, horizons * 3}, rng);
}

Tensor ActionPredictor::features(const std::vector<sim::PlanarPose>& history) const {
  const size_t n = history.size();
  const sim::PlanarPose& cur = history[n - 1];
  Tensor f = Tensor::zeros({1, 11});
  int k = 0;
  for (size_t i = n - 4; i + 1 < n; ++i) {
    const sim::PlanarPose rel = sim::compose(cur.inverse(), history[i]);
    f[k++] = rel.x / 10.0;
    f[k++] = rel.y / 10.0;
    f[k++] = rel.yaw;
  }
  const sim::PlanarPose step = sim::compose(history[n - 2].inverse(), cur);
  f[9] = std::hypot(step.x, step.y) / dt_ / 10.0;  // speed
  f[10] = step.yaw / dt_;                          // yaw rate
  return f;
}

Var ActionPredictor::forward(const std::vector<sim::PlanarPose>& history) const {
  if (history.size() < 4) {
    throw std::invalid_argument("ActionPredictor::forward needs >= 4 history poses");
  }
  return reshape(mlp_.apply(constant(features(history))), {horizons_, 3});
}

PredictedActions ActionPredictor::predict(const std::vector<sim::PlanarPose>& history) const {
  PredictedActions out;
  out.deltas.resize(static_cast<size_t>(horizons_));
  if (history.size() >= 4) {
    const Var y = forward(history);
    for (int k = 0; k < horizons_; ++k) {
      out.deltas[static_cast<size_t>(k)] = {y->value[k * 3 + 0], y->value[k * 3 + 1],
                                            y->value[k * 3 + 2]};
    }
    return out;
  }
  out.used_fallback = true;
  if (history.size() >= 2) {
    // Constant-velocity extrapolation in the current frame.
    const sim::PlanarPose step =
        sim::compose(history[history.size() - 2].inverse(), history.back());
    for (int k = 1; k <= horizons_; ++k) {
      out.deltas[static_cast<size_t>(k - 1)] = {step.x * k, step.y * k,
                                                sim::normalize_angle(step.yaw * k)};
    }
  }
  // A single pose leaves velocity unknown: zero displacements.
  return out;
}

Fsa::Fsa(const ModelConfig& cfg, ParamSet& ps, const std::string& name, Rng& rng, int k_frames,
         int layers)
    : cfg_(cfg), k_(k_frames) {
  const int kj = k_frames * cfg.fsa_j;
  for (int l = 0; l < layers; ++l) {
    const std::string base = name + ".layer" + std::to_string(l);
    Layer lay;
    lay.offsets = Linear(ps, base + ".off", cfg.query_c, kj * 3, rng);
    lay.logits = Linear(ps, base + ".att", cfg.query_c, kj, rng);
    // Pure projection matrix: a zero sample must contribute exactly zero.
    lay.project = Linear(ps, base + ".w", cfg.latent_c, cfg.query_c, rng, -1.0, false);
    layers_.push_back(std::move(lay));
  }
}

Var Fsa::apply(const Var& q_in, const Tensor& ref_points, const std::vector<BevLatent>& preds,
               const sim::PlanarPose& anchor_pose) const {
  if (static_cast<int>(preds.size()) < k_) {
    throw std::invalid_argument("fsa: need " + std::to_string(k_) + " future latents, got " +
                                std::to_string(preds.size()));
  }
  const GridSpec gs = cfg_.grid();
  const int nq = q_in->value.dim(0);
  const int j = cfg_.fsa_j;
  Var q = q_in;
  for (const auto& lay : layers_) {
    const Tensor offs = lay.offsets.apply(q)->value;          // sampling coords: values only
    Var attn = softmax_lastdim(lay.logits.apply(q));          // [Nq, K*J]
    Var update;
    for (int k = 0; k < k_; ++k) {
      const auto& pred = preds[static_cast<size_t>(k)];
      const sim::PlanarPose t_change = sim::frame_transform(anchor_pose, pred.ego);
      for (int s = 0; s < j; ++s) {
        Tensor pts = Tensor::zeros({nq, 2});
        for (int r = 0; r < nq; ++r) {
          const int64_t o = (static_cast<int64_t>(r) * k_ * j + k * j + s) * 3;
          const sim::Vec2 p{ref_points[static_cast<int64_t>(r) * 3 + 0] + offs[o + 0],
                            ref_points[static_cast<int64_t>(r) * 3 + 1] + offs[o + 1]};
          // z offset is produced but ignored at BEV sampling.
          const sim::Vec2 in_target = t_change.apply(p);
          const sim::Vec2 idx = gs.to_index(in_target);
          pts[static_cast<int64_t>(r) * 2 + 0] = idx.x;
          pts[static_cast<int64_t>(r) * 2 + 1] = idx.y;
        }
        Var sample = bilinear_gather(pred.grid, pts);                  // [Nq, C]
        Var proj = lay.project.apply(sample);                          // [Nq, Cq]
        Var term = mul_colvec(proj, select_column(attn, k * j + s));
        update = update ? add(update, term) : term;
      }
    }
    q = add(q, update);
  }
  return q;
}

OccupancyHead::OccupancyHead(const ModelConfig& cfg, ParamSet& ps, Rng& rng, int k_frames)
    : cfg_(cfg), k_(k_frames) {
  q_init_ = Linear(ps, "occ.q_init", cfg.latent_c, cfg.query_c, rng);
  if (k_frames > 0) fsa_ = Fsa(cfg, ps, "occ.fsa", rng, k_frames);
  trunk_ = Linear(ps, "occ.trunk", cfg.latent_c + cfg.query_c, 64, rng);
  cls_head_ = Linear(ps, "occ.cls", 64, sim::kNumClasses, rng);
  flow_head_ = Linear(ps, "occ.flow", 64, 2, rng);
}

OccupancyHead::Output OccupancyHead::apply(const Var& adapted_bev,
                                           const std::vector<BevLatent>& preds,
                                           const sim::PlanarPose& anchor_pose) const {
  const GridSpec gs = cfg_.grid();
  const int hw = gs.h * gs.w;
  Var flat = reshape(adapted_bev, {hw, cfg_.latent_c});
  Var q = q_init_.apply(flat);
  if (k_ > 0) {
    // One query per cell, reference point at the cell center, 1 m height.
    Tensor ref = Tensor::zeros({hw, 3});
    for (int i = 0; i < gs.h; ++i) {
      for (int jj = 0; jj < gs.w; ++jj) {
        const auto c = gs.cell_center(i, jj);
        ref[(static_cast<int64_t>(i) * gs.w + jj) * 3 + 0] = c.x;
        ref[(static_cast<int64_t>(i) * gs.w + jj) * 3 + 1] = c.y;
        ref[(static_cast<int64_t>(i) * gs.w + jj) * 3 + 2] = 1.0;
      }
    }
    q = fsa_.apply(q, ref, preds, anchor_pose);
  }
  Var h = num::tanh(trunk_.apply(concat({flat, q}, 1)));
  Output out;
  out.logits = reshape(cls_head_.apply(h), {gs.h, gs.w, sim::kNumClasses});
  out.flow = reshape(flow_head_.apply(h), {gs.h, gs.w, 2});
  return out;
}

PlannerHead::PlannerHead(const ModelConfig& cfg, ParamSet& ps, const std::string& name, Rng& rng,
                         int k_frames)
    : cfg_(cfg), k_(k_frames) {
  q_init_ = Linear(ps, name + ".q_init", 4, cfg.query_c, rng);
  fsa_ = Fsa(cfg, ps, name + ".fsa", rng, k_frames);
  score_mlp_ = Mlp(ps, name + ".score", {cfg.query_c, 32, 1}, rng);
}

Var PlannerHead::score(double curvature, double speed, const sim::Vec2& path_end,
                       const Tensor& ref_point, const std::vector<BevLatent>& preds,
                       const sim::PlanarPose& anchor_pose) const {
  Tensor kin = Tensor::zeros({1, 4});
  kin[0] = curvature * 5.0;
  kin[1] = speed / 5.0;
  kin[2] = path_end.x / 20.0;
  kin[3] = path_end.y / 20.0;
  Var q = q_init_.apply(constant(kin));
  q = fsa_.apply(q, ref_point, preds, anchor_pose);
  return score_mlp_.apply(q);  // [1,1]
}

}  // namespace bevworld::model
