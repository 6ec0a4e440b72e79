#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "neqlab/config.hpp"
#include "neqlab/parallel.hpp"
#include "neqlab/potential.hpp"
#include "neqlab/rng.hpp"
#include "neqlab/types.hpp"

namespace neqlab {

/// Particles closer to the origin than this are pushed back out radially.
inline constexpr double kReflectRadius = 1e-6;
/// Any coordinate beyond this magnitude means the integrator blew up.
inline constexpr double kDivergenceBound = 10.0;
/// Initial positions closer to the origin are redrawn: the angular force
/// grows like s / r and a first step from r < 0.01 leaves the domain.
inline constexpr double kInitExclusionRadius = 0.05;

/// Uniform draw over the configured box, rejecting the small disk around
/// the origin.
inline Vec2 draw_initial_position(const SystemConfig& cfg, RngStream& rng) {
  for (;;) {
    const Vec2 p{rng.uniform(cfg.domain_lo[0], cfg.domain_hi[0]), rng.uniform(cfg.domain_lo[1], cfg.domain_hi[1])};
    if (norm(p) >= kInitExclusionRadius) return p;
  }
}

/// Ensemble of paths sampled on the uniform grid t_n = n * dt.
struct TrajectorySet {
  SystemConfig config;
  std::int64_t n_steps = 0;
  std::vector<std::int64_t> traj_ids;  // original ensemble index of each path
  std::vector<Vec2> states;            // (trajectory, step) row-major
  std::vector<double> times;

  std::size_t n_traj() const { return traj_ids.size(); }
  std::size_t n_frames() const { return static_cast<std::size_t>(n_steps) + 1; }
  Vec2 at(std::size_t traj, std::size_t step) const { return states[traj * n_frames() + step]; }
  std::span<const Vec2> path(std::size_t traj) const {
    return {states.data() + traj * n_frames(), n_frames()};
  }

  /// Checks the container invariants; throws ShapeError/NumericError.
  void validate() const {
    if (states.size() != n_traj() * n_frames())
      throw ShapeError("TrajectorySet: states size does not match n_traj x (n_steps + 1)");
    if (times.size() != n_frames()) throw ShapeError("TrajectorySet: times size mismatch");
    for (std::size_t n = 1; n < times.size(); ++n) {
      if (std::abs(times[n] - times[n - 1] - config.dt) > 1e-12 * std::max(1.0, std::abs(times[n])))
        throw ShapeError("TrajectorySet: times are not uniformly spaced by dt");
    }
    for (const Vec2& p : states) {
      if (!is_finite(p)) throw NumericError("TrajectorySet: non-finite state");
    }
  }
};

inline std::vector<double> uniform_times(double dt, std::int64_t n_steps) {
  std::vector<double> times(static_cast<std::size_t>(n_steps) + 1);
  for (std::size_t n = 0; n < times.size(); ++n) times[n] = static_cast<double>(n) * dt;
  return times;
}

/// One Euler-Maruyama step of dX = -grad V dt + sqrt(2/beta) dW with the
/// supplied standard-normal draws.
template <ForceField Field>
Vec2 em_step(const Field& field, double t, Vec2 p, Vec2 noise, double dt, double beta) {
  if (!(std::abs(p.x) <= kDivergenceBound && std::abs(p.y) <= kDivergenceBound))
    throw DivergenceError("em_step: start point outside the extended domain");
  if (!is_finite(noise)) throw NumericError("em_step: non-finite noise");
  if (dt == 0.0) return p;
  Vec2 next = p - dt * field.gradient(t, p) + std::sqrt(2.0 * dt / beta) * noise;
  if (!(std::abs(next.x) <= kDivergenceBound && std::abs(next.y) <= kDivergenceBound))
    throw DivergenceError("em_step: |coordinate| exceeded 10; the step size is unstable");
  const double r = norm(next);
  if (r < kReflectRadius) {
    next = r > 0.0 ? (kReflectRadius / r) * next : Vec2{kReflectRadius, 0.0};
  }
  return next;
}

inline Vec2 em_step(const SystemConfig& cfg, double t, Vec2 p, Vec2 noise) {
  return em_step(RotatingPotential(cfg), t, p, noise, cfg.dt, cfg.beta);
}

/// Integrates cfg.n_traj independent paths. Path i draws its initial point
/// and all noise from RngStream(cfg.seed, i), so the result is identical for
/// any worker count. The domain box must not lie entirely inside the
/// exclusion disk.
template <ForceField Field>
TrajectorySet simulate_ensemble(const SystemConfig& cfg, const Field& field, int workers = 1) {
  cfg.validate();
  TrajectorySet ts;
  ts.config = cfg;
  ts.n_steps = cfg.n_steps();
  ts.times = uniform_times(cfg.dt, ts.n_steps);
  ts.traj_ids.resize(static_cast<std::size_t>(cfg.n_traj));
  std::iota(ts.traj_ids.begin(), ts.traj_ids.end(), std::int64_t{0});
  const std::size_t frames = ts.n_frames();
  ts.states.resize(ts.traj_ids.size() * frames);

  parallel_for(ts.traj_ids.size(), workers, [&](std::size_t i) {
    RngStream rng(cfg.seed, stream_id(StreamTag::trajectory, i));
    Vec2* out = ts.states.data() + i * frames;
    Vec2 p = draw_initial_position(cfg, rng);
    out[0] = p;
    for (std::int64_t n = 0; n < ts.n_steps; ++n) {
      try {
        p = em_step(field, ts.times[static_cast<std::size_t>(n)], p, rng.normal2(), cfg.dt, cfg.beta);
      } catch (const Error& e) {
        throw DivergenceError("trajectory " + std::to_string(i) + ", step " + std::to_string(n) + ": " +
                              e.what());
      }
      out[n + 1] = p;
    }
  });
  return ts;
}

inline TrajectorySet simulate_ensemble(const SystemConfig& cfg, int workers = 1) {
  return simulate_ensemble(cfg, RotatingPotential(cfg), workers);
}

/// Even positions go to the first set, odd positions to the second.
inline std::pair<TrajectorySet, TrajectorySet> split_train_test(const TrajectorySet& ts) {
  if (ts.n_traj() % 2 != 0) throw ShapeError("split_train_test: trajectory count must be even");
  std::pair<TrajectorySet, TrajectorySet> halves;
  const std::size_t frames = ts.n_frames();
  for (TrajectorySet* half : {&halves.first, &halves.second}) {
    half->config = ts.config;
    half->config.n_traj = static_cast<std::int64_t>(ts.n_traj() / 2);
    half->n_steps = ts.n_steps;
    half->times = ts.times;
    half->states.reserve(ts.n_traj() / 2 * frames);
  }
  for (std::size_t i = 0; i < ts.n_traj(); ++i) {
    TrajectorySet& half = (i % 2 == 0) ? halves.first : halves.second;
    half.traj_ids.push_back(ts.traj_ids[i]);
    const auto path = ts.path(i);
    half.states.insert(half.states.end(), path.begin(), path.end());
  }
  return halves;
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  out.append(buf, res.ptr);
}

inline double parse_double(std::string_view field) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw IoError("malformed number '" + std::string(field) + "'");
  return v;
}

inline std::int64_t parse_int(std::string_view field) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw IoError("malformed integer '" + std::string(field) + "'");
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace detail

inline constexpr std::string_view kTrajectoryCsvHeader = "traj_id,step,t,x,y";

inline std::string trajectory_csv(const TrajectorySet& ts) {
  std::string out;
  out.reserve(ts.states.size() * 72 + 32);
  out.append(kTrajectoryCsvHeader);
  out.push_back('\n');
  for (std::size_t i = 0; i < ts.n_traj(); ++i) {
    const std::string id = std::to_string(ts.traj_ids[i]);
    for (std::size_t n = 0; n < ts.n_frames(); ++n) {
      const Vec2 p = ts.at(i, n);
      out.append(id);
      out.push_back(',');
      out.append(std::to_string(n));
      out.push_back(',');
      detail::append_double(out, ts.times[n]);
      out.push_back(',');
      detail::append_double(out, p.x);
      out.push_back(',');
      detail::append_double(out, p.y);
      out.push_back('\n');
    }
  }
  return out;
}

inline void write_trajectory_csv(const std::string& path, const TrajectorySet& ts) {
  detail::write_file(path, trajectory_csv(ts));
}

/// Parses the CSV form. The file carries no configuration, so the caller
/// supplies it; n_traj and dt are reconciled with what the file holds.
inline TrajectorySet parse_trajectory_csv(std::string_view text, const SystemConfig& cfg) {
  TrajectorySet ts;
  ts.config = cfg;
  std::size_t pos = text.find('\n');
  if (pos == std::string_view::npos || text.substr(0, pos) != kTrajectoryCsvHeader)
    throw IoError("trajectory CSV: missing header '" + std::string(kTrajectoryCsvHeader) + "'");
  ++pos;
  std::int64_t current_id = -1;
  std::int64_t expected_step = 0;
  std::vector<double> first_times;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    std::string_view fields[5];
    for (int k = 0; k < 5; ++k) {
      const std::size_t comma = k < 4 ? line.find(',') : line.size();
      if (comma == std::string_view::npos) throw IoError("trajectory CSV: expected 5 columns");
      fields[k] = line.substr(0, comma);
      line = k < 4 ? line.substr(comma + 1) : std::string_view{};
    }
    const std::int64_t id = detail::parse_int(fields[0]);
    const std::int64_t step = detail::parse_int(fields[1]);
    if (id != current_id) {
      if (ts.traj_ids.size() == 1) ts.n_steps = expected_step - 1;
      if (current_id >= 0 && expected_step != ts.n_steps + 1)
        throw IoError("trajectory CSV: trajectory " + std::to_string(current_id) + " has wrong frame count");
      if (current_id >= 0 && id <= current_id) throw IoError("trajectory CSV: rows not in ascending traj_id order");
      current_id = id;
      expected_step = 0;
      ts.traj_ids.push_back(id);
    }
    if (step != expected_step) throw IoError("trajectory CSV: rows not in ascending step order");
    if (ts.traj_ids.size() == 1) first_times.push_back(detail::parse_double(fields[2]));
    ts.states.push_back({detail::parse_double(fields[3]), detail::parse_double(fields[4])});
    ++expected_step;
  }
  if (ts.traj_ids.empty()) throw IoError("trajectory CSV: no rows");
  if (ts.traj_ids.size() == 1) ts.n_steps = expected_step - 1;
  if (expected_step != ts.n_steps + 1) throw IoError("trajectory CSV: last trajectory has wrong frame count");
  ts.times = std::move(first_times);
  ts.config.n_traj = static_cast<std::int64_t>(ts.traj_ids.size());
  if (ts.n_steps > 0) ts.config.dt = ts.times[1] - ts.times[0];
  ts.validate();
  return ts;
}

inline TrajectorySet read_trajectory_csv(const std::string& path, const SystemConfig& cfg) {
  return parse_trajectory_csv(detail::read_file(path), cfg);
}

inline constexpr char kTrajectoryMagic[8] = {'N', 'Q', 'T', 'R', 'A', 'J', '1', '\0'};

/// Binary container: magic, u64 LE length + JSON header, then LE floats in
/// (trajectory, step, coordinate) order. The header's "precision" field is
/// "float64" or "float32".
inline std::string trajectory_binary(const TrajectorySet& ts, bool float32 = false) {
  static_assert(std::endian::native == std::endian::little, "binary container assumes a little-endian host");
  const nlohmann::json header{{"config", ts.config},
                              {"n_steps", ts.n_steps},
                              {"traj_ids", ts.traj_ids},
                              {"precision", float32 ? "float32" : "float64"}};
  const std::string header_text = header.dump();
  std::string out(kTrajectoryMagic, sizeof kTrajectoryMagic);
  const std::uint64_t len = header_text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out.append(header_text);
  for (const Vec2& p : ts.states) {
    if (float32) {
      const float xy[2] = {static_cast<float>(p.x), static_cast<float>(p.y)};
      out.append(reinterpret_cast<const char*>(xy), sizeof xy);
    } else {
      const double xy[2] = {p.x, p.y};
      out.append(reinterpret_cast<const char*>(xy), sizeof xy);
    }
  }
  return out;
}

inline TrajectorySet parse_trajectory_binary(std::string_view data) {
  if (data.size() < 16 || std::memcmp(data.data(), kTrajectoryMagic, 8) != 0)
    throw IoError("trajectory binary: bad magic");
  std::uint64_t len = 0;
  std::memcpy(&len, data.data() + 8, sizeof len);
  if (16 + len > data.size()) throw IoError("trajectory binary: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("trajectory binary: header is not JSON: ") + e.what());
  }
  TrajectorySet ts;
  ts.config = header.at("config").get<SystemConfig>();
  ts.n_steps = header.at("n_steps").get<std::int64_t>();
  ts.traj_ids = header.at("traj_ids").get<std::vector<std::int64_t>>();
  const bool float32 = header.at("precision").get<std::string>() == "float32";
  ts.times = uniform_times(ts.config.dt, ts.n_steps);
  const std::size_t count = ts.traj_ids.size() * ts.n_frames();
  const std::size_t width = float32 ? sizeof(float) : sizeof(double);
  const char* body = data.data() + 16 + len;
  if (data.size() != 16 + len + count * 2 * width) throw IoError("trajectory binary: payload size mismatch");
  ts.states.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    if (float32) {
      float xy[2];
      std::memcpy(xy, body + k * 2 * width, sizeof xy);
      ts.states[k] = {xy[0], xy[1]};
    } else {
      double xy[2];
      std::memcpy(xy, body + k * 2 * width, sizeof xy);
      ts.states[k] = {xy[0], xy[1]};
    }
  }
  ts.validate();
  return ts;
}

inline void write_trajectory_binary(const std::string& path, const TrajectorySet& ts, bool float32 = false) {
  detail::write_file(path, trajectory_binary(ts, float32));
}

inline TrajectorySet read_trajectory_binary(const std::string& path) {
  return parse_trajectory_binary(detail::read_file(path));
}

}  // namespace neqlab
