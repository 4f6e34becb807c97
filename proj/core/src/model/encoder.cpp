#include "bevworld/model/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace bevworld::model {

using namespace num;

void StreamingMemory::push(const BevLatent& latent) {
  entries_.push_back(latent);
  while (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
}

LiftGeometry LiftGeometry::build(const sim::CameraRig& rig, const ModelConfig& cfg) {
  LiftGeometry geo;
  const GridSpec gs = cfg.grid();
  const int hw = gs.h * gs.w;
  const int n_views = static_cast<int>(rig.mount_yaws.size());
  geo.pairs = n_views * cfg.z_bins;
  Tensor count = Tensor::zeros({hw, 1});
  // Feature maps run at 1/4 resolution; feature cell (a,b) aggregates the
  // 4x4 pixel block anchored at (4a, 4b), center pixel coordinate 4a+2.
  const double fs = 4.0;
  for (int view = 0; view < n_views; ++view) {
    for (int zi = 0; zi < cfg.z_bins; ++zi) {
      Tensor pts = Tensor::zeros({hw, 2});
      Tensor valid = Tensor::zeros({hw, 1});
      const double z = cfg.height_of_bin(zi);
      for (int i = 0; i < gs.h; ++i) {
        for (int j = 0; j < gs.w; ++j) {
          const auto c = gs.cell_center(i, j);
          double u, v, depth;
          const int64_t cell = static_cast<int64_t>(i) * gs.w + j;
          if (!rig.project(view, sim::Vec3{c.x, c.y, z}, &u, &v, &depth)) continue;
          if (u < 0.0 || u >= rig.width || v < 0.0 || v >= rig.height) continue;
          const double fr = (v - fs / 2) / fs;
          const double fc = (u - fs / 2) / fs;
          const int fh = rig.height / 4, fw = rig.width / 4;
          if (fr < 0.0 || fr > fh - 1.0 || fc < 0.0 || fc > fw - 1.0) continue;
          pts[cell * 2 + 0] = fr;
          pts[cell * 2 + 1] = fc;
          valid[cell] = 1.0;
          count[cell] += 1.0;
        }
      }
      geo.points.push_back(std::move(pts));
      geo.valid.push_back(std::move(valid));
    }
  }
  geo.inv_valid_count = Tensor::zeros({hw, 1});
  for (int64_t i = 0; i < hw; ++i) geo.inv_valid_count[i] = 1.0 / std::max(1.0, count[i]);
  return geo;
}

WorldEncoder::WorldEncoder(const ModelConfig& cfg, ParamSet& ps, Rng& rng) : cfg_(cfg) {
  conv1_ = Conv2d(ps, "encoder.backbone.conv1", 3, 3, 3, 8, 2, 1, rng);
  conv2_ = Conv2d(ps, "encoder.backbone.conv2", 3, 3, 8, cfg.img_feat_c, 2, 1, rng);
  conv3_ = Conv2d(ps, "encoder.backbone.conv3", 3, 3, cfg.img_feat_c, cfg.img_feat_c, 1, 1, rng);
  lift_mlp_ = Mlp(ps, "encoder.lift.mlp", {cfg.img_feat_c, 32, cfg.latent_c}, rng);
  tca_ = NeighborhoodAttention(ps, "encoder.tca", cfg.latent_c, rng);
}

std::vector<Var> WorldEncoder::extract_image_features(const std::vector<Tensor>& images) const {
  if (images.empty()) throw std::invalid_argument("extract_image_features: no views");
  std::vector<Var> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    Var x = constant(img);
    x = num::tanh(conv1_.apply(x));
    x = num::tanh(conv2_.apply(x));
    x = num::tanh(conv3_.apply(x));
    out.push_back(x);
  }
  return out;
}

Var WorldEncoder::lift_to_bev(const std::vector<Var>& feats, const LiftGeometry& geo) const {
  const GridSpec gs = cfg_.grid();
  const int expected_pairs = static_cast<int>(feats.size()) * cfg_.z_bins;
  if (expected_pairs != geo.pairs) {
    throw std::invalid_argument("lift_to_bev: geometry built for " + std::to_string(geo.pairs) +
                                " (view,height) pairs, got " + std::to_string(expected_pairs));
  }
  Var sum;
  for (size_t view = 0; view < feats.size(); ++view) {
    Var fm = feats[view];
    for (int zi = 0; zi < cfg_.z_bins; ++zi) {
      const size_t pair = view * static_cast<size_t>(cfg_.z_bins) + static_cast<size_t>(zi);
      Var sample = bilinear_gather(fm, geo.points[pair]);          // [HW, Cimg]
      sample = mul_colvec(sample, constant(geo.valid[pair]));      // zero invalid cells
      sum = sum ? add(sum, sample) : sample;
    }
  }
  Var mean = mul_colvec(sum, constant(geo.inv_valid_count));
  Var lifted = lift_mlp_.apply(mean);  // [HW, C]
  return reshape(lifted, {gs.h, gs.w, cfg_.latent_c});
}

Var WorldEncoder::temporal_cross_attention(const Var& current, const sim::PlanarPose& current_pose,
                                           const StreamingMemory& memory) const {
  if (memory.empty()) return current;
  const BevLatent& prev = memory.newest();
  Var warped = warp_grid(prev.grid, prev.ego, current_pose, cfg_.grid());
  return add(current, tca_.apply(current, warped));
}

BevLatent WorldEncoder::encode_frame(const sim::SceneFrame& frame, const sim::CameraRig& rig,
                                     StreamingMemory& memory) const {
  const auto feats = extract_image_features(frame.images);
  Var lifted = lift_to_bev(feats, geometry(rig));
  Var fused = temporal_cross_attention(lifted, frame.ego, memory);
  BevLatent latent{fused, frame.ego, frame.timestamp};
  memory.push(latent);
  return latent;
}

const LiftGeometry& WorldEncoder::geometry(const sim::CameraRig& rig) const {
  if (!geo_rig_ || !(*geo_rig_ == rig)) {
    geo_ = LiftGeometry::build(rig, cfg_);
    geo_rig_ = rig;
  }
  return geo_;
}

Adapter::Adapter(const ModelConfig& cfg, ParamSet& ps, Rng& rng, int layers) : cfg_(cfg) {
  for (int l = 0; l < layers; ++l) {
    const std::string base = "adapter.layer" + std::to_string(l);
    Layer lay;
    lay.q = Linear(ps, base + ".q", cfg.latent_c, cfg.latent_c, rng);
    lay.k = Linear(ps, base + ".k", cfg.img_feat_c, cfg.latent_c, rng);
    lay.v = Linear(ps, base + ".v", cfg.img_feat_c, cfg.latent_c, rng);
    lay.o = Linear(ps, base + ".o", cfg.latent_c, cfg.latent_c, rng, 0.0);
    layers_.push_back(lay);
  }
}

Var Adapter::apply(const Var& bev, const std::vector<Var>& img_feats,
                   const LiftGeometry& geo) const {
  const GridSpec gs = cfg_.grid();
  const int hw = gs.h * gs.w;
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(cfg_.latent_c));

  // Samples and masks are shared across layers (image features are fixed).
  // Invalid pairs are masked twice: zeroed values and a large negative
  // attention logit, so cells with no valid projection pool exactly zero.
  std::vector<Var> samples;
  std::vector<Var> mask_bias;
  samples.reserve(static_cast<size_t>(geo.pairs));
  for (size_t view = 0; view < img_feats.size(); ++view) {
    for (int zi = 0; zi < cfg_.z_bins; ++zi) {
      const size_t pair = view * static_cast<size_t>(cfg_.z_bins) + static_cast<size_t>(zi);
      samples.push_back(mul_colvec(bilinear_gather(img_feats[view], geo.points[pair]),
                                   constant(geo.valid[pair])));
      Tensor bias = Tensor::zeros({hw, 1});
      for (int64_t i = 0; i < hw; ++i) bias[i] = (geo.valid[pair][i] - 1.0) * 30.0;
      mask_bias.push_back(constant(bias));
    }
  }

  Var x = reshape(bev, {hw, cfg_.latent_c});
  for (const auto& lay : layers_) {
    Var q = lay.q.apply(x);
    std::vector<Var> logits;
    std::vector<Var> values;
    logits.reserve(samples.size());
    for (size_t p = 0; p < samples.size(); ++p) {
      Var k = lay.k.apply(samples[p]);
      values.push_back(lay.v.apply(samples[p]));
      logits.push_back(add(mul_scalar(sum_lastdim(mul(q, k)), inv_sqrt_c), mask_bias[p]));
    }
    Var attn = softmax_lastdim(concat(logits, 1));
    Var pooled;
    for (size_t p = 0; p < samples.size(); ++p) {
      Var term = mul_colvec(values[p], select_column(attn, static_cast<int>(p)));
      pooled = pooled ? add(pooled, term) : term;
    }
    x = add(x, lay.o.apply(pooled));
  }
  return reshape(x, {gs.h, gs.w, cfg_.latent_c});
}

}  // namespace bevworld::model
