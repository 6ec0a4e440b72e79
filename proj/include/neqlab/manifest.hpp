#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "neqlab/config.hpp"
#include "neqlab/langevin.hpp"

namespace neqlab {

#ifndef NEQLAB_VERSION
#define NEQLAB_VERSION "0.0.0"
#endif

/// Record of one experiment directory. Every command merges its section in,
/// so the directory can be rebuilt from this file alone.
struct ExperimentManifest {
  SystemConfig config;
  nlohmann::json schedule = nlohmann::json::object();
  nlohmann::json grid = nlohmann::json::object();
  nlohmann::json training = nlohmann::json::object();  // keyed by method
  std::map<std::string, std::string> files;            // artifact name -> path relative to the manifest
  std::string tool_version = NEQLAB_VERSION;
  std::map<std::string, double> timings;               // command -> wall seconds

  friend bool operator==(const ExperimentManifest&, const ExperimentManifest&) = default;
};

inline void to_json(nlohmann::json& j, const ExperimentManifest& m) {
  j = nlohmann::json{{"config", m.config},     {"schedule", m.schedule},         {"grid", m.grid},
                     {"training", m.training}, {"files", m.files},               {"tool_version", m.tool_version},
                     {"timings", m.timings}};
}

inline void from_json(const nlohmann::json& j, ExperimentManifest& m) {
  m.config = j.at("config").get<SystemConfig>();
  m.schedule = j.value("schedule", nlohmann::json::object());
  m.grid = j.value("grid", nlohmann::json::object());
  m.training = j.value("training", nlohmann::json::object());
  m.files = j.value("files", std::map<std::string, std::string>{});
  m.tool_version = j.value("tool_version", std::string(NEQLAB_VERSION));
  m.timings = j.value("timings", std::map<std::string, double>{});
}

inline constexpr const char* kManifestName = "manifest.json";

/// Writes dir/manifest.json after checking every referenced file exists.
inline void write_manifest(const std::filesystem::path& dir, const ExperimentManifest& m) {
  for (const auto& [name, rel] : m.files) {
    if (!std::filesystem::exists(dir / rel))
      throw IoError("manifest references missing artifact '" + name + "': " + (dir / rel).string());
  }
  detail::write_file((dir / kManifestName).string(), nlohmann::json(m).dump(2) + "\n");
}

inline ExperimentManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestName;
  try {
    return nlohmann::json::parse(detail::read_file(path.string())).get<ExperimentManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace neqlab
