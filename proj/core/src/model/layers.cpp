#include "bevworld/model/layers.hpp"

#include <cmath>

namespace bevworld::model {

using namespace num;

Linear::Linear(ParamSet& ps, const std::string& name, int in, int out, Rng& rng, double scale,
               bool with_bias)
    : in_(in), out_(out) {
  const double s = scale < 0.0 ? std::sqrt(1.0 / in) : scale;
  if (s == 0.0) {
    w = ps.create(name + ".w", {in, out});
  } else {
    w = ps.create_normal(name + ".w", {in, out}, rng, s);
  }
  if (with_bias) b = ps.create(name + ".b", {out});
}

Var Linear::apply(const Var& x) const { return linear(x, w, b); }

Mlp::Mlp(ParamSet& ps, const std::string& name, const std::vector<int>& widths, Rng& rng,
         double out_scale) {
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    layers_.emplace_back(ps, name + ".l" + std::to_string(i), widths[i], widths[i + 1], rng,
                         last ? out_scale : -1.0);
  }
}

Var Mlp::apply(const Var& x) const {
  Var h = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].apply(h);
    if (i + 1 < layers_.size()) h = num::tanh(h);
  }
  return h;
}

Conv2d::Conv2d(ParamSet& ps, const std::string& name, int kh, int kw, int cin, int cout,
               int stride, int pad, Rng& rng, double scale)
    : stride_(stride), pad_(pad) {
  const double s = scale < 0.0 ? std::sqrt(1.0 / (kh * kw * cin)) : scale;
  if (s == 0.0) {
    w = ps.create(name + ".w", {kh, kw, cin, cout});
  } else {
    w = ps.create_normal(name + ".w", {kh, kw, cin, cout}, rng, s);
  }
  b = ps.create(name + ".b", {cout});
}

Var Conv2d::apply(const Var& x) const { return conv2d(x, w, b, stride_, pad_); }

NeighborhoodAttention::NeighborhoodAttention(ParamSet& ps, const std::string& name, int channels,
                                             Rng& rng, double out_scale)
    : c_(channels) {
  wq_ = Linear(ps, name + ".q", channels, channels, rng);
  wk_ = Linear(ps, name + ".k", channels, channels, rng);
  wv_ = Linear(ps, name + ".v", channels, channels, rng);
  wo_ = Linear(ps, name + ".o", channels, channels, rng, out_scale);
}

Var NeighborhoodAttention::apply(const Var& query_grid, const Var& kv_grid) const {
  const int h = query_grid->value.dim(0), w = query_grid->value.dim(1);
  const int hw = h * w;
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c_));
  Var q = wq_.apply(reshape(query_grid, {hw, c_}));

  std::vector<Var> scores;
  std::vector<Var> values;
  scores.reserve(9);
  values.reserve(9);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      Var nb = reshape(shift2d(kv_grid, dy, dx), {hw, c_});
      Var k = wk_.apply(nb);
      values.push_back(wv_.apply(nb));
      scores.push_back(mul_scalar(sum_lastdim(mul(q, k)), inv_sqrt_c));
    }
  }
  Var attn = softmax_lastdim(concat(scores, 1));  // [HW, 9]
  Var out;
  for (int o = 0; o < 9; ++o) {
    Var term = mul_colvec(values[static_cast<size_t>(o)], select_column(attn, o));
    out = out ? add(out, term) : term;
  }
  return reshape(wo_.apply(out), {h, w, c_});
}

Tensor GridSpec::centers() const {
  Tensor c = Tensor::zeros({h * w, 2});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const auto p = cell_center(i, j);
      c[(static_cast<int64_t>(i) * w + j) * 2 + 0] = p.x;
      c[(static_cast<int64_t>(i) * w + j) * 2 + 1] = p.y;
    }
  }
  return c;
}

Var warp_grid(const Var& src_grid, const sim::PlanarPose& src_pose,
              const sim::PlanarPose& dst_pose, const GridSpec& gs) {
  // Where each dst cell center lives in the src frame, as src grid indices.
  const sim::PlanarPose to_src = sim::frame_transform(dst_pose, src_pose);
  Tensor pts = Tensor::zeros({gs.h * gs.w, 2});
  for (int i = 0; i < gs.h; ++i) {
    for (int j = 0; j < gs.w; ++j) {
      const sim::Vec2 in_src = to_src.apply(gs.cell_center(i, j));
      const sim::Vec2 idx = gs.to_index(in_src);
      pts[(static_cast<int64_t>(i) * gs.w + j) * 2 + 0] = idx.x;
      pts[(static_cast<int64_t>(i) * gs.w + j) * 2 + 1] = idx.y;
    }
  }
  const int c = src_grid->value.dim(2);
  return reshape(bilinear_gather(src_grid, pts), {gs.h, gs.w, c});
}

Var select_column(const Var& x, int k) {
  const int cols = x->value.dim(1);
  Tensor sel = Tensor::zeros({cols, 1});
  sel[k] = 1.0;
  return matmul(x, constant(sel));
}

}  // namespace bevworld::model
