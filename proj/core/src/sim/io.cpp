#include "bevworld/sim/io.hpp"

#include <stdexcept>

#include "bevworld/numerics/binio.hpp"

namespace bevworld::sim {

using num::BinReader;
using num::BinWriter;

namespace {

constexpr char kMagic[4] = {'B', 'W', 'E', 'P'};

void write_pose(BinWriter& w, const PlanarPose& p) {
  w.f64(p.x);
  w.f64(p.y);
  w.f64(p.yaw);
}

PlanarPose read_pose(BinReader& r) {
  PlanarPose p;
  p.x = r.f64();
  p.y = r.f64();
  p.yaw = r.f64();
  return p;
}

void write_config(BinWriter& w, const WorldConfig& c) {
  w.f64(c.bound);
  w.u32(static_cast<uint32_t>(c.n_frames));
  w.f64(c.dt);
  w.u32(static_cast<uint32_t>(c.n_actors_min));
  w.u32(static_cast<uint32_t>(c.n_actors_max));
  w.u8(c.dynamics ? 1 : 0);
  w.u32(static_cast<uint32_t>(c.n_cameras));
  w.u32(static_cast<uint32_t>(c.img_h));
  w.u32(static_cast<uint32_t>(c.img_w));
  w.f64(c.hfov_deg);
  w.f64(c.cam_height);
  w.u32(static_cast<uint32_t>(c.lidar_azimuths));
  w.u32(static_cast<uint32_t>(c.lidar_elevations));
  w.f64(c.lidar_height);
  w.f64(c.max_range);
  w.f64(c.ego_speed_min);
  w.f64(c.ego_speed_max);
}

WorldConfig read_config(BinReader& r) {
  WorldConfig c;
  c.bound = r.f64();
  c.n_frames = static_cast<int>(r.u32());
  c.dt = r.f64();
  c.n_actors_min = static_cast<int>(r.u32());
  c.n_actors_max = static_cast<int>(r.u32());
  c.dynamics = r.u8() != 0;
  c.n_cameras = static_cast<int>(r.u32());
  c.img_h = static_cast<int>(r.u32());
  c.img_w = static_cast<int>(r.u32());
  c.hfov_deg = r.f64();
  c.cam_height = r.f64();
  c.lidar_azimuths = static_cast<int>(r.u32());
  c.lidar_elevations = static_cast<int>(r.u32());
  c.lidar_height = r.f64();
  c.max_range = r.f64();
  c.ego_speed_min = r.f64();
  c.ego_speed_max = r.f64();
  return c;
}

void write_actor(BinWriter& w, const BoxActor& a) {
  w.u32(static_cast<uint32_t>(a.id));
  w.f64(a.length);
  w.f64(a.width);
  w.f64(a.height);
  write_pose(w, a.pose0);
  w.f64(a.vx);
  w.f64(a.vy);
  w.u8(a.semantic_class);
  w.f64(a.albedo.r);
  w.f64(a.albedo.g);
  w.f64(a.albedo.b);
}

BoxActor read_actor(BinReader& r) {
  BoxActor a;
  a.id = static_cast<int>(r.u32());
  a.length = r.f64();
  a.width = r.f64();
  a.height = r.f64();
  a.pose0 = read_pose(r);
  a.vx = r.f64();
  a.vy = r.f64();
  a.semantic_class = r.u8();
  a.albedo.r = r.f64();
  a.albedo.g = r.f64();
  a.albedo.b = r.f64();
  return a;
}

void write_tensor(BinWriter& w, const num::Tensor& t) {
  w.u8(static_cast<uint8_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) w.u32(static_cast<uint32_t>(t.dim(i)));
  w.f64_array(t.vec());
}

num::Tensor read_tensor(BinReader& r) {
  const uint8_t rank = r.u8();
  num::Shape shape(rank);
  for (uint8_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(r.u32());
  auto data = r.f64_array(static_cast<size_t>(num::shape_numel(shape)));
  return num::Tensor(shape, std::move(data));
}

}  // namespace

void save_episode(const Episode& ep, const std::string& path) {
  BinWriter w(path);
  w.bytes(kMagic, 4);
  w.u32(kEpisodeVersion);
  w.u64(ep.seed);
  write_config(w, ep.config);
  w.f64(ep.rig.fx);
  w.f64(ep.rig.fy);
  w.f64(ep.rig.cx);
  w.f64(ep.rig.cy);
  w.u32(static_cast<uint32_t>(ep.rig.width));
  w.u32(static_cast<uint32_t>(ep.rig.height));
  w.f64(ep.rig.mount_height);
  w.u32(static_cast<uint32_t>(ep.rig.mount_yaws.size()));
  for (double y : ep.rig.mount_yaws) w.f64(y);
  w.u32(static_cast<uint32_t>(ep.actors.size()));
  for (const auto& a : ep.actors) write_actor(w, a);
  w.u32(static_cast<uint32_t>(ep.frames.size()));
  for (const auto& f : ep.frames) {
    w.f64(f.timestamp);
    write_pose(w, f.ego);
    w.u32(static_cast<uint32_t>(f.images.size()));
    for (size_t v = 0; v < f.images.size(); ++v) {
      write_tensor(w, f.images[v]);
      write_tensor(w, f.image_depth[v]);
      w.u32(static_cast<uint32_t>(f.image_semantics[v].size()));
      w.bytes(f.image_semantics[v].data(), f.image_semantics[v].size());
    }
    write_tensor(w, f.lidar_points);
    w.u32(static_cast<uint32_t>(f.boxes.size()));
    for (const auto& b : f.boxes) write_actor(w, b);
  }
  w.close();
}

Episode load_episode(const std::string& path) {
  BinReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != std::string(kMagic, 4)) {
    throw std::runtime_error("not an episode archive (bad magic at byte offset 0): " + path);
  }
  const uint32_t version = r.u32();
  if (version != kEpisodeVersion) {
    throw std::runtime_error("episode version mismatch at byte offset 4: have " +
                             std::to_string(version) + ", expected " +
                             std::to_string(kEpisodeVersion) + ": " + path);
  }
  Episode ep;
  ep.seed = r.u64();
  ep.config = read_config(r);
  ep.rig.fx = r.f64();
  ep.rig.fy = r.f64();
  ep.rig.cx = r.f64();
  ep.rig.cy = r.f64();
  ep.rig.width = static_cast<int>(r.u32());
  ep.rig.height = static_cast<int>(r.u32());
  ep.rig.mount_height = r.f64();
  const uint32_t n_yaws = r.u32();
  ep.rig.mount_yaws.resize(n_yaws);
  for (uint32_t i = 0; i < n_yaws; ++i) ep.rig.mount_yaws[i] = r.f64();
  const uint32_t n_actors = r.u32();
  ep.actors.reserve(n_actors);
  for (uint32_t i = 0; i < n_actors; ++i) ep.actors.push_back(read_actor(r));
  const uint32_t n_frames = r.u32();
  ep.frames.reserve(n_frames);
  for (uint32_t i = 0; i < n_frames; ++i) {
    SceneFrame f;
    f.timestamp = r.f64();
    f.ego = read_pose(r);
    const uint32_t n_views = r.u32();
    for (uint32_t v = 0; v < n_views; ++v) {
      f.images.push_back(read_tensor(r));
      f.image_depth.push_back(read_tensor(r));
      const uint32_t n_sem = r.u32();
      std::vector<uint8_t> sem(n_sem);
      r.bytes(sem.data(), n_sem);
      f.image_semantics.push_back(std::move(sem));
    }
    f.lidar_points = read_tensor(r);
    const uint32_t n_boxes = r.u32();
    for (uint32_t b = 0; b < n_boxes; ++b) f.boxes.push_back(read_actor(r));
    ep.frames.push_back(std::move(f));
  }
  if (ep.frames.size() != n_frames) {
    throw std::runtime_error("episode frame count mismatch: " + path);
  }
  if (!r.at_eof()) {
    throw std::runtime_error("trailing bytes after frame " + std::to_string(n_frames) +
                             " at byte offset " + std::to_string(r.offset()) + ": " + path);
  }
  return ep;
}

}  // namespace bevworld::sim
