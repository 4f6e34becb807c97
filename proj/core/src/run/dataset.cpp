#include "bevworld/run/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bevworld::run {

namespace fs = std::filesystem;

std::string generate_dataset(const sim::WorldConfig& wcfg, uint64_t seed_a, uint64_t seed_b,
                             const std::string& out_dir) {
  if (seed_b < seed_a) throw std::invalid_argument("generate_dataset: empty seed range");
  fs::create_directories(out_dir);
  const std::string manifest_path = (fs::path(out_dir) / "manifest.txt").string();
  std::ofstream manifest(manifest_path);
  if (!manifest) throw std::runtime_error("cannot write manifest: " + manifest_path);
  for (uint64_t seed = seed_a; seed <= seed_b; ++seed) {
    const sim::Episode ep = sim::generate_episode(wcfg, seed);
    const std::string name = "ep_" + std::to_string(seed) + ".bwep";
    const std::string path = (fs::path(out_dir) / name).string();
    sim::save_episode(ep, path);
    manifest << path << " " << seed << "\n";
  }
  manifest.close();
  if (!manifest) throw std::runtime_error("manifest write failure: " + manifest_path);
  return manifest_path;
}

std::vector<std::pair<std::string, uint64_t>> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  std::vector<std::pair<std::string, uint64_t>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string p;
    uint64_t seed = 0;
    if (!(row >> p >> seed)) throw std::runtime_error("malformed manifest line: " + line);
    out.emplace_back(p, seed);
  }
  return out;
}

Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw std::runtime_error("config data.manifest is empty");
  const auto entries = read_manifest(cfg.manifest);
  Dataset ds;
  for (size_t i = 0; i < entries.size(); ++i) {
    sim::Episode ep = sim::load_episode(entries[i].first);
    if (static_cast<int>(i) < cfg.train_count) {
      ds.train.push_back(std::move(ep));
    } else {
      ds.heldout.push_back(std::move(ep));
    }
  }
  if (ds.train.empty()) throw std::runtime_error("dataset has no training episodes");
  return ds;
}

}  // namespace bevworld::run
