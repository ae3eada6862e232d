#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mitodet/model.hpp"

namespace mitodet {

// Checkpoint container, format_version 1: model config plus a flat ordered
// list of {name, shape, data} parameter records. Stable across releases;
// loaders must reject unknown major versions.
inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json checkpoint_to_json(const UVNet& net) {
  const UVNetConfig& cfg = net.config();
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["model"] = {{"in_channels", cfg.in_channels},
                {"out_channels", cfg.out_channels},
                {"base_f", cfg.base_f},
                {"depth", cfg.depth},
                {"seed", cfg.seed}};
  nlohmann::json params = nlohmann::json::array();
  for (const Parameter& p : net.parameters()) {
    const Shape4 s = p.weights().shape;
    params.push_back({{"name", p.name},
                      {"shape", {s.n, s.c, s.h, s.w}},
                      {"data", p.weights().data}});
  }
  j["parameters"] = std::move(params);
  return j;
}

inline void save_checkpoint(const UVNet& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out << checkpoint_to_json(net) << "\n";
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

inline UVNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: " + path.string() + " is not valid JSON: " +
                             e.what());
  }
  if (!j.contains("format_version") || j["format_version"].get<int>() != kCheckpointFormatVersion) {
    throw std::runtime_error("load_checkpoint: unsupported format_version in " + path.string());
  }
  UVNetConfig cfg;
  const auto& m = j.at("model");
  cfg.in_channels = m.at("in_channels").get<int>();
  cfg.out_channels = m.at("out_channels").get<int>();
  cfg.base_f = m.at("base_f").get<int>();
  cfg.depth = m.at("depth").get<int>();
  cfg.seed = m.at("seed").get<std::uint64_t>();

  UVNet net(cfg);
  std::vector<std::pair<std::string, Tensor>> weights;
  for (const auto& rec : j.at("parameters")) {
    const auto dims = rec.at("shape").get<std::vector<int>>();
    if (dims.size() != 4) {
      throw std::runtime_error("load_checkpoint: parameter '" +
                               rec.at("name").get<std::string>() + "' has non rank-4 shape");
    }
    Shape4 s{dims[0], dims[1], dims[2], dims[3]};
    weights.emplace_back(rec.at("name").get<std::string>(),
                         Tensor(s, rec.at("data").get<std::vector<real>>()));
  }
  if (weights.size() != net.parameters().size()) {
    throw std::runtime_error("load_checkpoint: expected " +
                             std::to_string(net.parameters().size()) + " parameters, found " +
                             std::to_string(weights.size()));
  }
  net.load_weight_values(weights);
  return net;
}

}  // namespace mitodet
