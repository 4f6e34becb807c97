#include "bevworld/eval/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "bevworld/eval/chamfer.hpp"

namespace bevworld::eval {

using num::Tensor;

std::vector<uint8_t> decode_classes(const Tensor& logits) {
  const int ns = logits.dim(logits.rank() - 1);
  const int64_t cells = logits.numel() / ns;
  std::vector<uint8_t> out(static_cast<size_t>(cells));
  for (int64_t i = 0; i < cells; ++i) {
    int best = 0;
    double best_v = logits[i * ns];
    for (int c = 1; c < ns; ++c) {
      if (logits[i * ns + c] > best_v) {
        best_v = logits[i * ns + c];
        best = c;
      }
    }
    out[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
  }
  return out;
}

namespace {
bool occupied(uint8_t cls) {
  return cls == sim::kVehicle || cls == sim::kPedestrian || cls == sim::kBarrier;
}
}  // namespace

OccupancyMetrics occupancy_metrics(const std::vector<uint8_t>& pred_classes,
                                   const std::vector<uint8_t>& gt_classes,
                                   const Tensor& pred_flow, const Tensor& gt_velocity) {
  if (pred_classes.size() != gt_classes.size()) {
    throw std::invalid_argument("occupancy_metrics: class map size mismatch");
  }
  const int64_t n = static_cast<int64_t>(gt_classes.size());
  OccupancyMetrics m;
  std::vector<int64_t> inter(sim::kNumClasses, 0), uni(sim::kNumClasses, 0);
  int64_t geo_inter = 0, geo_union = 0;
  std::vector<double> vel_errors;
  for (int64_t i = 0; i < n; ++i) {
    const uint8_t g = gt_classes[static_cast<size_t>(i)];
    if (g == sim::kEgoIgnored) continue;
    const uint8_t p = pred_classes[static_cast<size_t>(i)];
    for (int c = 0; c < sim::kNumClasses; ++c) {
      const bool ing = g == c, inp = p == c;
      if (ing && inp) ++inter[static_cast<size_t>(c)];
      if (ing || inp) ++uni[static_cast<size_t>(c)];
    }
    const bool og = occupied(g), op = occupied(p);
    if (og && op) ++geo_inter;
    if (og || op) ++geo_union;
    const double gvx = gt_velocity[i * 2 + 0], gvy = gt_velocity[i * 2 + 1];
    if (og && std::hypot(gvx, gvy) > 0.1) {
      const double dx = pred_flow[i * 2 + 0] - gvx;
      const double dy = pred_flow[i * 2 + 1] - gvy;
      vel_errors.push_back(std::hypot(dx, dy));
    }
  }
  m.per_class_iou.assign(sim::kNumClasses, -1.0);
  std::vector<double> ious;
  for (int c = 0; c < sim::kNumClasses; ++c) {
    if (c == sim::kEgoIgnored || uni[static_cast<size_t>(c)] == 0) continue;
    const double iou = static_cast<double>(inter[static_cast<size_t>(c)]) /
                       static_cast<double>(uni[static_cast<size_t>(c)]);
    m.per_class_iou[static_cast<size_t>(c)] = iou;
    ious.push_back(iou);
  }
  m.miou = ious.empty() ? 0.0 : pairwise_sum(ious) / static_cast<double>(ious.size());
  m.iou_geo = geo_union == 0 ? 1.0 : static_cast<double>(geo_inter) / static_cast<double>(geo_union);
  m.dynamic_cells = static_cast<int>(vel_errors.size());
  m.mave = vel_errors.empty()
               ? 0.0
               : pairwise_sum(vel_errors) / static_cast<double>(vel_errors.size());
  return m;
}

}  // namespace bevworld::eval
