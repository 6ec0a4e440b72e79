#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neqlab/langevin.hpp"
#include "neqlab/parallel.hpp"
#include "neqlab/rng.hpp"
#include "neqlab/types.hpp"

namespace neqlab {

/// Regular rectangular binning of the plane. Cell (i, j) has flat index
/// i * bins[1] + j, i along x.
struct Grid2D {
  std::array<double, 2> lo{-1.2, -1.2};
  std::array<double, 2> hi{1.2, 1.2};
  std::array<int, 2> bins{50, 50};

  void validate() const {
    for (int k = 0; k < 2; ++k) {
      if (!(lo[k] < hi[k])) throw ConfigError("grid: lo must be < hi");
      if (bins[k] < 1) throw ConfigError("grid: bins must be >= 1");
    }
  }

  std::size_t size() const { return static_cast<std::size_t>(bins[0]) * static_cast<std::size_t>(bins[1]); }
  double width(int axis) const { return (hi[axis] - lo[axis]) / bins[axis]; }
  double cell_area() const { return width(0) * width(1); }

  bool contains(Vec2 p) const { return p.x >= lo[0] && p.x < hi[0] && p.y >= lo[1] && p.y < hi[1]; }

  /// Flat index of the cell holding p; points outside are clamped to the edge cell.
  std::size_t index(Vec2 p) const {
    auto axis_index = [&](double v, int k) {
      const double f = std::floor((v - lo[k]) / width(k));
      return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(bins[k] - 1)));
    };
    return axis_index(p.x, 0) * static_cast<std::size_t>(bins[1]) + axis_index(p.y, 1);
  }

  Vec2 center(std::size_t flat) const {
    const auto i = static_cast<double>(flat / static_cast<std::size_t>(bins[1]));
    const auto j = static_cast<double>(flat % static_cast<std::size_t>(bins[1]));
    return {lo[0] + (i + 0.5) * width(0), lo[1] + (j + 0.5) * width(1)};
  }

  /// Lower-left corner of a cell.
  Vec2 corner(std::size_t flat) const {
    const auto i = static_cast<double>(flat / static_cast<std::size_t>(bins[1]));
    const auto j = static_cast<double>(flat % static_cast<std::size_t>(bins[1]));
    return {lo[0] + i * width(0), lo[1] + j * width(1)};
  }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;
};

inline void to_json(nlohmann::json& j, const Grid2D& g) {
  j = nlohmann::json{{"lo", g.lo}, {"hi", g.hi}, {"bins", g.bins}};
}

inline void from_json(const nlohmann::json& j, Grid2D& g) {
  g.lo = j.at("lo").get<std::array<double, 2>>();
  g.hi = j.at("hi").get<std::array<double, 2>>();
  g.bins = j.at("bins").get<std::array<int, 2>>();
  g.validate();
}

struct Histogram2D {
  Grid2D grid;
  std::vector<double> probs;
  std::int64_t total_count = 0;
  std::int64_t clamped_count = 0;  // points that fell outside the grid
};

inline Histogram2D histogram(std::span<const Vec2> points, const Grid2D& grid) {
  grid.validate();
  if (points.empty()) throw ShapeError("histogram: no points");
  Histogram2D h{grid, std::vector<double>(grid.size(), 0.0), static_cast<std::int64_t>(points.size()), 0};
  std::vector<std::int64_t> counts(grid.size(), 0);
  for (const Vec2& p : points) {
    if (!grid.contains(p)) ++h.clamped_count;
    ++counts[grid.index(p)];
  }
  const double inv = 1.0 / static_cast<double>(points.size());
  for (std::size_t k = 0; k < counts.size(); ++k) h.probs[k] = static_cast<double>(counts[k]) * inv;
  return h;
}

/// Jensen-Shannon divergence in nats over two probability vectors.
inline double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("jsd: length mismatch");
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    // Ordering the pair keeps jsd(p, q) == jsd(q, p) bit for bit even when
    // the compiler fuses a multiply into the add.
    const double lo = std::min(p[k], q[k]), hi = std::max(p[k], q[k]);
    const double m = 0.5 * (lo + hi);
    const double a = lo > 0.0 ? lo * std::log(lo / m) : 0.0;
    const double b = hi > 0.0 ? hi * std::log(hi / m) : 0.0;
    sum += a + b;
  }
  return std::clamp(0.5 * sum, 0.0, std::log(2.0));
}

inline double jsd(const Histogram2D& p, const Histogram2D& q) {
  if (!(p.grid == q.grid)) throw ShapeError("jsd: histograms are on different grids");
  return jsd(p.probs, q.probs);
}

struct JsdCurve {
  std::vector<double> times;
  std::vector<double> jsd_eq;
  std::vector<double> jsd_noneq;

  void validate() const {
    if (jsd_eq.size() != times.size() || jsd_noneq.size() != times.size())
      throw ShapeError("JsdCurve: column lengths differ");
  }

  double mean_eq() const { return mean(jsd_eq); }
  double mean_noneq() const { return mean(jsd_noneq); }

  double fraction_noneq_lower() const {
    if (times.empty()) return 0.0;
    std::size_t lower = 0;
    for (std::size_t k = 0; k < times.size(); ++k) lower += jsd_noneq[k] < jsd_eq[k] ? 1 : 0;
    return static_cast<double>(lower) / static_cast<double>(times.size());
  }

 private:
  static double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  }
};

/// n uniform points on [first, last], inclusive.
inline std::vector<double> default_eval_times(std::size_t n = 40, double first = 0.5, double last = 19.5) {
  std::vector<double> t(n);
  for (std::size_t k = 0; k < n; ++k)
    t[k] = n == 1 ? first : first + (last - first) * static_cast<double>(k) / static_cast<double>(n - 1);
  return t;
}

/// Test-set frames with |t_n - t| <= slice_width / 2, pooled over trajectories.
inline std::vector<Vec2> reference_points(const TrajectorySet& test, double t, double slice_width) {
  const double half = 0.5 * slice_width + 1e-9;
  std::vector<std::size_t> frames;
  for (std::size_t n = 0; n < test.times.size(); ++n)
    if (std::abs(test.times[n] - t) <= half) frames.push_back(n);
  std::vector<Vec2> points;
  points.reserve(frames.size() * test.n_traj());
  for (std::size_t i = 0; i < test.n_traj(); ++i)
    for (std::size_t n : frames) points.push_back(test.at(i, n));
  return points;
}

/// Draws n points for physical time t from the given stream.
using TimeSampler = std::function<std::vector<Vec2>(double t, std::size_t n, RngStream& rng)>;

/// One JSD column: reference histogram of pooled test frames vs. histogram of
/// n_per_time generated samples at each eval time. Eval time k samples from
/// RngStream(seed, stream_id(evaluation, stream_offset + k)).
inline std::vector<double> jsd_column(const TrajectorySet& test, const TimeSampler& sampler, const Grid2D& grid,
                                      std::span<const double> eval_times, std::size_t n_per_time, double slice_width,
                                      std::uint64_t seed, std::uint64_t stream_offset = 0, int workers = 1) {
  const double t_end = test.times.back();
  for (double t : eval_times)
    if (t < 0.0 || t > t_end + 1e-12) throw ConfigError("jsd_curve: eval time outside [0, T]");
  std::vector<double> column(eval_times.size());
  parallel_for(eval_times.size(), workers, [&](std::size_t k) {
    const auto ref = reference_points(test, eval_times[k], slice_width);
    if (ref.empty()) throw ShapeError("jsd_curve: no test frames near t=" + std::to_string(eval_times[k]));
    RngStream rng(seed, stream_id(StreamTag::evaluation, stream_offset + k));
    const auto generated = sampler(eval_times[k], n_per_time, rng);
    column[k] = jsd(histogram(ref, grid), histogram(generated, grid));
  });
  return column;
}

inline std::string curve_csv(const JsdCurve& curve) {
  curve.validate();
  std::string out = "t,jsd_eq,jsd_noneq\n";
  for (std::size_t k = 0; k < curve.times.size(); ++k) {
    detail::append_double(out, curve.times[k]);
    out.push_back(',');
    detail::append_double(out, curve.jsd_eq[k]);
    out.push_back(',');
    detail::append_double(out, curve.jsd_noneq[k]);
    out.push_back('\n');
  }
  return out;
}

}  // namespace neqlab
