#pragma once

#include <vector>

#include "bevworld/numerics/tensor.hpp"
#include "bevworld/sim/world.hpp"

namespace bevworld::eval {

struct OccupancyMetrics {
  double miou = 0.0;      // mean IoU over classes with nonzero union
  double iou_geo = 0.0;   // binary occupied-vs-free IoU
  double mave = 0.0;      // mean L2 velocity error over dynamic occupied cells
  int dynamic_cells = 0;
  std::vector<double> per_class_iou;  // -1 where the class never occurs
};

/// Cell-level occupancy scoring. Ego-ignored cells are excluded everywhere.
/// "Occupied" means vehicle/pedestrian/barrier; dynamic cells are occupied
/// cells whose ground-truth speed exceeds 0.1 m/s.
OccupancyMetrics occupancy_metrics(const std::vector<uint8_t>& pred_classes,
                                   const std::vector<uint8_t>& gt_classes,
                                   const num::Tensor& pred_flow, const num::Tensor& gt_velocity);

/// Argmax decode of [H,W,Ns] logits into class ids.
std::vector<uint8_t> decode_classes(const num::Tensor& logits);

}  // namespace bevworld::eval
