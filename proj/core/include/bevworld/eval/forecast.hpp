#pragma once

#include "bevworld/model/osm.hpp"

namespace bevworld::eval {

/// Future lidar ray geometry of a ground-truth frame: the full spinning
/// pattern in that frame's ego coordinates, no targets attached.
std::vector<model::Ray> future_lidar_rays(const sim::WorldConfig& cfg);

/// Renders expected depth along the given rays from a latent and unprojects
/// to points: p_i = o_i + d_i * dir_i. One point per ray.
num::Tensor forecast_pointcloud(const model::OsmField& field, const model::Var& latent_grid,
                                const std::vector<model::Ray>& rays,
                                const model::WaypointSchedule& sched);

}  // namespace bevworld::eval
