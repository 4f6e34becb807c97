#include "bevworld/run/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace bevworld::run {

namespace {

struct Field {
  std::string key;
  enum Kind { kInt, kDouble, kBool, kString, kU64 } kind;
  std::function<void*(RunConfig&)> ptr;
};

std::vector<Field> field_table() {
  auto f = [](const char* key, Field::Kind kind, auto getter) {
    return Field{key, kind, [getter](RunConfig& c) -> void* { return getter(c); }};
  };
  std::vector<Field> t;
  // [data]
  t.push_back(f("data.manifest", Field::kString, [](RunConfig& c) { return &c.manifest; }));
  t.push_back(f("data.train_count", Field::kInt, [](RunConfig& c) { return &c.train_count; }));
  t.push_back(f("data.encoder_checkpoint", Field::kString,
                [](RunConfig& c) { return &c.encoder_checkpoint; }));
  t.push_back(f("data.decoder_checkpoint", Field::kString,
                [](RunConfig& c) { return &c.decoder_checkpoint; }));
  // [world]
  t.push_back(f("world.bound", Field::kDouble, [](RunConfig& c) { return &c.world.bound; }));
  t.push_back(f("world.n_frames", Field::kInt, [](RunConfig& c) { return &c.world.n_frames; }));
  t.push_back(f("world.dt", Field::kDouble, [](RunConfig& c) { return &c.world.dt; }));
  t.push_back(f("world.actors_min", Field::kInt, [](RunConfig& c) { return &c.world.n_actors_min; }));
  t.push_back(f("world.actors_max", Field::kInt, [](RunConfig& c) { return &c.world.n_actors_max; }));
  t.push_back(f("world.dynamics", Field::kBool, [](RunConfig& c) { return &c.world.dynamics; }));
  t.push_back(f("world.n_cameras", Field::kInt, [](RunConfig& c) { return &c.world.n_cameras; }));
  t.push_back(f("world.img_h", Field::kInt, [](RunConfig& c) { return &c.world.img_h; }));
  t.push_back(f("world.img_w", Field::kInt, [](RunConfig& c) { return &c.world.img_w; }));
  t.push_back(f("world.hfov_deg", Field::kDouble, [](RunConfig& c) { return &c.world.hfov_deg; }));
  t.push_back(f("world.cam_height", Field::kDouble, [](RunConfig& c) { return &c.world.cam_height; }));
  t.push_back(f("world.lidar_azimuths", Field::kInt,
                [](RunConfig& c) { return &c.world.lidar_azimuths; }));
  t.push_back(f("world.lidar_elevations", Field::kInt,
                [](RunConfig& c) { return &c.world.lidar_elevations; }));
  t.push_back(f("world.lidar_height", Field::kDouble,
                [](RunConfig& c) { return &c.world.lidar_height; }));
  t.push_back(f("world.max_range", Field::kDouble, [](RunConfig& c) { return &c.world.max_range; }));
  t.push_back(f("world.ego_speed_min", Field::kDouble,
                [](RunConfig& c) { return &c.world.ego_speed_min; }));
  t.push_back(f("world.ego_speed_max", Field::kDouble,
                [](RunConfig& c) { return &c.world.ego_speed_max; }));
  // [model]
  t.push_back(f("model.grid_h", Field::kInt, [](RunConfig& c) { return &c.model.grid_h; }));
  t.push_back(f("model.grid_w", Field::kInt, [](RunConfig& c) { return &c.model.grid_w; }));
  t.push_back(f("model.latent_c", Field::kInt, [](RunConfig& c) { return &c.model.latent_c; }));
  t.push_back(f("model.extent", Field::kDouble, [](RunConfig& c) { return &c.model.extent; }));
  t.push_back(f("model.z_bins", Field::kInt, [](RunConfig& c) { return &c.model.z_bins; }));
  t.push_back(f("model.cstar", Field::kInt, [](RunConfig& c) { return &c.model.cstar; }));
  t.push_back(f("model.z_max", Field::kDouble, [](RunConfig& c) { return &c.model.z_max; }));
  t.push_back(f("model.c2h_kernel", Field::kInt, [](RunConfig& c) { return &c.model.c2h_kernel; }));
  t.push_back(f("model.n_waypoints", Field::kInt, [](RunConfig& c) { return &c.model.n_waypoints; }));
  t.push_back(f("model.waypoint_near", Field::kDouble,
                [](RunConfig& c) { return &c.model.waypoint_near; }));
  t.push_back(f("model.waypoint_far", Field::kDouble,
                [](RunConfig& c) { return &c.model.waypoint_far; }));
  t.push_back(f("model.horizons", Field::kInt, [](RunConfig& c) { return &c.model.horizons; }));
  t.push_back(f("model.memory_depth", Field::kInt,
                [](RunConfig& c) { return &c.model.memory_depth; }));
  t.push_back(f("model.warp_neighbors", Field::kInt,
                [](RunConfig& c) { return &c.model.warp_neighbors; }));
  t.push_back(f("model.warp_cutoff_cells", Field::kDouble,
                [](RunConfig& c) { return &c.model.warp_cutoff_cells; }));
  t.push_back(f("model.img_feat_c", Field::kInt, [](RunConfig& c) { return &c.model.img_feat_c; }));
  t.push_back(f("model.fsa_j", Field::kInt, [](RunConfig& c) { return &c.model.fsa_j; }));
  t.push_back(f("model.query_c", Field::kInt, [](RunConfig& c) { return &c.model.query_c; }));
  // [rays]
  t.push_back(f("rays.n_lidar", Field::kInt, [](RunConfig& c) { return &c.rays.n_lidar; }));
  t.push_back(f("rays.n_camera", Field::kInt, [](RunConfig& c) { return &c.rays.n_camera; }));
  t.push_back(f("rays.n_dynamic", Field::kInt, [](RunConfig& c) { return &c.rays.n_dynamic; }));
  t.push_back(f("rays.future_n_lidar", Field::kInt,
                [](RunConfig& c) { return &c.future_rays.n_lidar; }));
  t.push_back(f("rays.future_n_camera", Field::kInt,
                [](RunConfig& c) { return &c.future_rays.n_camera; }));
  t.push_back(f("rays.future_n_dynamic", Field::kInt,
                [](RunConfig& c) { return &c.future_rays.n_dynamic; }));
  // [train]
  t.push_back(f("train.steps", Field::kInt, [](RunConfig& c) { return &c.steps; }));
  t.push_back(f("train.lr", Field::kDouble, [](RunConfig& c) { return &c.lr; }));
  t.push_back(f("train.weight_decay", Field::kDouble, [](RunConfig& c) { return &c.weight_decay; }));
  t.push_back(f("train.seed", Field::kU64, [](RunConfig& c) { return &c.seed; }));
  t.push_back(f("train.log_every", Field::kInt, [](RunConfig& c) { return &c.log_every; }));
  t.push_back(f("train.joint", Field::kBool, [](RunConfig& c) { return &c.joint; }));
  t.push_back(f("train.dynamic_rays", Field::kBool, [](RunConfig& c) { return &c.dynamic_rays; }));
  t.push_back(f("train.fsa_k", Field::kInt, [](RunConfig& c) { return &c.fsa_k; }));
  t.push_back(f("train.task", Field::kString, [](RunConfig& c) { return &c.task; }));
  // [loss]
  t.push_back(f("loss.w_latent", Field::kDouble, [](RunConfig& c) { return &c.w_latent; }));
  t.push_back(f("loss.w_scene", Field::kDouble, [](RunConfig& c) { return &c.w_scene; }));
  t.push_back(f("loss.sup_depth", Field::kBool, [](RunConfig& c) { return &c.sup_depth; }));
  t.push_back(f("loss.sup_semantic", Field::kBool, [](RunConfig& c) { return &c.sup_semantic; }));
  t.push_back(f("loss.sup_color", Field::kBool, [](RunConfig& c) { return &c.sup_color; }));
  // [eval]
  t.push_back(f("eval.horizons", Field::kInt, [](RunConfig& c) { return &c.eval_horizons; }));
  t.push_back(f("eval.range", Field::kDouble, [](RunConfig& c) { return &c.eval_range; }));
  return t;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

void assign(const Field& field, RunConfig& cfg, const std::string& value, const std::string& where) {
  void* p = field.ptr(cfg);
  try {
    switch (field.kind) {
      case Field::kInt:
        *static_cast<int*>(p) = std::stoi(value);
        break;
      case Field::kDouble:
        *static_cast<double*>(p) = std::stod(value);
        break;
      case Field::kU64:
        *static_cast<uint64_t*>(p) = std::stoull(value);
        break;
      case Field::kBool:
        if (value == "true" || value == "1") {
          *static_cast<bool*>(p) = true;
        } else if (value == "false" || value == "0") {
          *static_cast<bool*>(p) = false;
        } else {
          throw std::invalid_argument("expected true/false");
        }
        break;
      case Field::kString:
        *static_cast<std::string*>(p) = value;
        break;
    }
  } catch (const std::exception& e) {
    throw std::invalid_argument(where + ": bad value '" + value + "' for key " + field.key + ": " +
                                e.what());
  }
}

std::string format_value(const Field& field, RunConfig& cfg) {
  void* p = field.ptr(cfg);
  switch (field.kind) {
    case Field::kInt:
      return std::to_string(*static_cast<int*>(p));
    case Field::kU64:
      return std::to_string(*static_cast<uint64_t*>(p));
    case Field::kBool:
      return *static_cast<bool*>(p) ? "true" : "false";
    case Field::kString:
      return *static_cast<std::string*>(p);
    case Field::kDouble: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", *static_cast<double*>(p));
      return buf;
    }
  }
  return "";
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  const auto table = field_table();
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(where + ": expected 'key = value', got '" + s + "'");
    }
    std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    bool found = false;
    for (const auto& f : table) {
      if (f.key == key) {
        assign(f, cfg, value, where);
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument(where + ": unknown config key '" + key + "'");
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string echo_config(const RunConfig& c) {
  RunConfig copy = c;
  const auto table = field_table();
  std::ostringstream out;
  std::string section;
  for (const auto& f : table) {
    const size_t dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    out << f.key.substr(dot + 1) << " = " << format_value(f, copy) << "\n";
  }
  return out.str();
}

std::string config_hash(const RunConfig& c) {
  const std::string text = echo_config(c);
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace bevworld::run
