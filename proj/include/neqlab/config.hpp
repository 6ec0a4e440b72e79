#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>

#include "neqlab/types.hpp"

namespace neqlab {

/// Physical and numerical parameters of the rotating multi-well system.
struct SystemConfig {
  int s = 5;
  double beta = 10.0;
  double dt = 0.02;
  double total_time = 20.0;
  std::int64_t n_traj = 2000;
  std::array<double, 2> domain_lo{-1.0, -1.0};
  std::array<double, 2> domain_hi{1.0, 1.0};
  std::uint64_t seed = 20250101;
  // Squares the radial confinement term. On by default: the linear form
  // pulls particles into the angular singularity at the origin and explicit
  // Euler-Maruyama diverges at dt = 0.02.
  bool radial_squared = true;

  std::int64_t n_steps() const {
    return static_cast<std::int64_t>(std::llround(total_time / dt));
  }

  void validate() const {
    if (s < 1) throw ConfigError("s must be >= 1");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be > 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be > 0");
    if (!(total_time >= dt) || !std::isfinite(total_time))
      throw ConfigError("total_time must be >= dt");
    if (n_traj < 1) throw ConfigError("n_traj must be >= 1");
    for (int k = 0; k < 2; ++k) {
      if (!(domain_lo[k] < domain_hi[k]))
        throw ConfigError("domain_lo must be < domain_hi componentwise");
    }
  }

  friend bool operator==(const SystemConfig&, const SystemConfig&) = default;
};

inline void to_json(nlohmann::json& j, const SystemConfig& c) {
  j = nlohmann::json{{"s", c.s},
                     {"beta", c.beta},
                     {"dt", c.dt},
                     {"total_time", c.total_time},
                     {"n_traj", c.n_traj},
                     {"domain_lo", c.domain_lo},
                     {"domain_hi", c.domain_hi},
                     {"seed", c.seed},
                     {"radial_squared", c.radial_squared}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, SystemConfig& c) {
  static const std::set<std::string> known{"s",      "beta",      "dt",        "total_time",
                                           "n_traj", "domain_lo", "domain_hi", "seed",
                                           "radial_squared"};
  if (!j.is_object()) throw ConfigError("SystemConfig JSON must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown SystemConfig key: " + key);
  }
  try {
    if (j.contains("s")) c.s = j.at("s").get<int>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("dt")) c.dt = j.at("dt").get<double>();
    if (j.contains("total_time")) c.total_time = j.at("total_time").get<double>();
    if (j.contains("n_traj")) c.n_traj = j.at("n_traj").get<std::int64_t>();
    if (j.contains("domain_lo")) c.domain_lo = j.at("domain_lo").get<std::array<double, 2>>();
    if (j.contains("domain_hi")) c.domain_hi = j.at("domain_hi").get<std::array<double, 2>>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("radial_squared")) c.radial_squared = j.at("radial_squared").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed SystemConfig: ") + e.what());
  }
}

}  // namespace neqlab
