#pragma once

#include "ecomp/net.hpp"
#include "ecomp/schedule.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

namespace ecomp {

inline void to_json(nlohmann::json& j, const MlpConfig& c) {
  j = nlohmann::json{{"input_dim", c.input_dim},   {"cond_dim", c.cond_dim},
                     {"output_dim", c.output_dim}, {"hidden", c.hidden},
                     {"n_blocks", c.n_blocks},     {"layer_norm", c.layer_norm},
                     {"time_scalar", c.time_scalar}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, MlpConfig& c) {
  c.input_dim = j.value("input_dim", 0);
  c.cond_dim = j.value("cond_dim", 0);
  c.output_dim = j.value("output_dim", 0);
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<int>>();
  c.n_blocks = j.value("n_blocks", 3);
  c.layer_norm = j.value("layer_norm", true);
  c.time_scalar = j.value("time_scalar", true);
  c.seed = j.value("seed", uint64_t{1});
}

inline void to_json(nlohmann::json& j, const NoiseSchedule& s) {
  j = nlohmann::json{{"T", s.T},
                     {"sigma", std::vector<double>(s.sigma.data(), s.sigma.data() + s.sigma.size())}};
}

inline void from_json(const nlohmann::json& j, NoiseSchedule& s) {
  s.T = j.at("T").get<int>();
  auto sig = j.at("sigma").get<std::vector<double>>();
  s.sigma = Eigen::Map<const Vec>(sig.data(), static_cast<Eigen::Index>(sig.size()));
  if (s.T != static_cast<int>(sig.size())) throw ConfigError("schedule length mismatch");
}

inline uint64_t fnv1a(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

struct Checkpoint {
  ParamSet params;
  NoiseSchedule sched;
  std::string task;
  int version = 1;
  uint64_t checksum = 0;
};

// JSON manifest next to a raw little-endian f64 blob; the manifest records the
// blob's FNV-1a checksum and the parameter count.
inline void save_checkpoint(const std::string& path, const ParamSet& params,
                            const NoiseSchedule& sched, const std::string& task) {
  params.check();
  namespace fs = std::filesystem;
  fs::path manifest(path);
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
  fs::path blob = manifest;
  blob.replace_extension(".bin");
  {
    std::ofstream out(blob, std::ios::binary);
    if (!out) throw IoError("cannot write " + blob.string());
    out.write(reinterpret_cast<const char*>(params.flat.data()),
              static_cast<std::streamsize>(params.flat.size() * sizeof(double)));
  }
  nlohmann::json j;
  j["version"] = 1;
  j["task"] = task;
  j["arch"] = params.config;
  j["schedule"] = sched;
  j["param_count"] = params.flat.size();
  j["blob"] = blob.filename().string();
  j["checksum"] = fnv1a(params.flat.data(), params.flat.size() * sizeof(double));
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  out << j.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
  namespace fs = std::filesystem;
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint not found: " + path);
  nlohmann::json j;
  in >> j;
  Checkpoint ck;
  ck.version = j.value("version", 1);
  ck.task = j.value("task", "");
  ck.params.config = j.at("arch").get<MlpConfig>();
  ck.sched = j.at("schedule").get<NoiseSchedule>();
  const auto count = j.at("param_count").get<Eigen::Index>();
  fs::path blob = fs::path(path).parent_path() / j.at("blob").get<std::string>();
  std::ifstream bin(blob, std::ios::binary);
  if (!bin) throw ConfigError("checkpoint blob not found: " + blob.string());
  ck.params.flat = Vec(count);
  bin.read(reinterpret_cast<char*>(ck.params.flat.data()),
           static_cast<std::streamsize>(count * sizeof(double)));
  if (bin.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
    throw IoError("checkpoint blob truncated");
  ck.checksum = fnv1a(ck.params.flat.data(), ck.params.flat.size() * sizeof(double));
  if (ck.checksum != j.at("checksum").get<uint64_t>())
    throw IoError("checkpoint checksum mismatch");
  ck.params.check();
  return ck;
}

}  // namespace ecomp
