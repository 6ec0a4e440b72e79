#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neqlab/evaluation.hpp"
#include "neqlab/noneq_model.hpp"
#include "neqlab/potential.hpp"
#include "neqlab/rng.hpp"

namespace neqlab {

/// Nonnegative density on a 1-D line or 2-D plane of cells. Flat index is
/// i * n[1] + j; in 1-D n[1] == 1 and the y coordinate is 0.
struct GridDensity {
  int dims = 1;
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> h{1.0, 1.0};
  std::array<int, 2> n{1, 1};
  std::vector<double> values;
  double leaked_mass = 0.0;   // mass that left through the absorbing edge
  double clamped_mass = 0.0;  // total negative mass removed by clamping

  static GridDensity line(double lo, double hi, int cells) {
    if (!(hi > lo) || cells < 1) throw ConfigError("GridDensity: bad 1-D geometry");
    GridDensity d;
    d.dims = 1;
    d.lo = {lo, 0.0};
    d.h = {(hi - lo) / cells, 1.0};
    d.n = {cells, 1};
    d.values.assign(static_cast<std::size_t>(cells), 0.0);
    return d;
  }

  static GridDensity plane(const Grid2D& g) {
    g.validate();
    GridDensity d;
    d.dims = 2;
    d.lo = g.lo;
    d.h = {g.width(0), g.width(1)};
    d.n = g.bins;
    d.values.assign(g.size(), 0.0);
    return d;
  }

  std::size_t size() const { return values.size(); }
  double cell_measure() const { return dims == 1 ? h[0] : h[0] * h[1]; }

  Vec2 center(std::size_t flat) const {
    const auto i = static_cast<double>(flat / static_cast<std::size_t>(n[1]));
    const auto j = static_cast<double>(flat % static_cast<std::size_t>(n[1]));
    return {lo[0] + (i + 0.5) * h[0], dims == 1 ? 0.0 : lo[1] + (j + 0.5) * h[1]};
  }

  double mass() const {
    double m = 0.0;
    for (double v : values) m += v;
    return m * cell_measure();
  }

  /// Cell holding p, or -1 when p is outside.
  std::ptrdiff_t locate(Vec2 p) const {
    const double fi = std::floor((p.x - lo[0]) / h[0]);
    if (fi < 0 || fi >= n[0]) return -1;
    double fj = 0.0;
    if (dims == 2) {
      fj = std::floor((p.y - lo[1]) / h[1]);
      if (fj < 0 || fj >= n[1]) return -1;
    }
    return static_cast<std::ptrdiff_t>(fi) * n[1] + static_cast<std::ptrdiff_t>(fj);
  }

  /// First moment along an axis.
  double mean(int axis = 0) const {
    double m = 0.0, w = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      const Vec2 c = center(k);
      m += values[k] * (axis == 0 ? c.x : c.y);
      w += values[k];
    }
    return m / w;
  }

  /// Central second moment along an axis.
  double variance(int axis = 0) const {
    const double mu = mean(axis);
    double v = 0.0, w = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      const Vec2 c = center(k);
      const double d = (axis == 0 ? c.x : c.y) - mu;
      v += values[k] * d * d;
      w += values[k];
    }
    return v / w;
  }

  /// Rescales values to unit discrete integral.
  void normalize() {
    const double m = mass();
    if (!(m > 0.0)) throw NumericError("GridDensity: cannot normalize zero mass");
    for (double& v : values) v /= m;
  }
};

/// Cell-averaged 1-D Gaussian, normalized on the grid.
inline GridDensity gaussian_line(double lo, double hi, int cells, double mean, double stddev) {
  GridDensity d = GridDensity::line(lo, hi, cells);
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double a = lo + static_cast<double>(k) * d.h[0];
    d.values[k] = 0.5 * (std::erf((a + d.h[0] - mean) / (stddev * std::sqrt(2.0))) -
                         std::erf((a - mean) / (stddev * std::sqrt(2.0))));
  }
  d.normalize();
  return d;
}

namespace detail {

/// Drift seen by a solver stepping forward in its own clock.
inline Vec2 effective_drift(const SdeDescriptor& sde, Vec2 p, double t) {
  const Vec2 mu = sde.drift(p, t);
  return sde.direction == Direction::forward ? mu : -mu;
}

inline double clock_after(const SdeDescriptor& sde, double t, double dt) {
  return sde.direction == Direction::forward ? t + dt : t - dt;
}

}  // namespace detail

/// Largest drift magnitude per axis over the cell interfaces at time t.
inline std::array<double, 2> max_interface_drift(const GridDensity& d, const SdeDescriptor& sde, double t) {
  std::array<double, 2> m{0.0, 0.0};
  for (int i = 0; i <= d.n[0]; ++i) {
    for (int j = 0; j < d.n[1]; ++j) {
      const Vec2 p{d.lo[0] + i * d.h[0], d.dims == 1 ? 0.0 : d.lo[1] + (j + 0.5) * d.h[1]};
      m[0] = std::max(m[0], std::abs(detail::effective_drift(sde, p, t).x));
    }
  }
  if (d.dims == 2) {
    for (int i = 0; i < d.n[0]; ++i) {
      for (int j = 0; j <= d.n[1]; ++j) {
        const Vec2 p{d.lo[0] + (i + 0.5) * d.h[0], d.lo[1] + j * d.h[1]};
        m[1] = std::max(m[1], std::abs(detail::effective_drift(sde, p, t).y));
      }
    }
  }
  return m;
}

/// Largest step allowed at time t: dt <= h^2 / (4 D) for diffusion and
/// |mu| dt / h <= 1/2 for advection, on every axis.
inline double stable_dt(const GridDensity& d, const SdeDescriptor& sde, double t) {
  const double g = sde.diffusion(t);
  const double diff = 0.5 * g * g;
  const auto mu = max_interface_drift(d, sde, t);
  double dt = std::numeric_limits<double>::infinity();
  for (int k = 0; k < d.dims; ++k) {
    if (diff > 0.0) dt = std::min(dt, d.h[k] * d.h[k] / (4.0 * diff));
    if (mu[k] > 0.0) dt = std::min(dt, 0.5 * d.h[k] / mu[k]);
  }
  return dt;
}

/// One explicit conservative step of dP/dt = -div(mu P) + D lap P with
/// upwind advective flux, central diffusive flux and absorbing edges.
/// Reverse descriptors step their clock from t to t - dt.
inline GridDensity fpe_step(const GridDensity& density, const SdeDescriptor& sde, double t, double dt_pde) {
  if (!(dt_pde >= 0.0)) throw StabilityError("fpe_step: dt must be >= 0");
  const double g = sde.diffusion(t);
  if (!(g >= 0.0)) throw StabilityError("fpe_step: negative diffusion");
  const double diff = 0.5 * g * g;
  for (int k = 0; k < density.dims; ++k) {
    if (diff > 0.0 && dt_pde > density.h[k] * density.h[k] / (4.0 * diff) * (1.0 + 1e-12))
      throw StabilityError("fpe_step: dt exceeds the diffusion stability bound h^2/(4D)");
  }
  GridDensity next = density;
  if (dt_pde == 0.0) return next;

  const int nx = density.n[0], ny = density.n[1];
  auto at = [&](int i, int j) -> double {
    if (i < 0 || i >= nx || j < 0 || j >= ny) return 0.0;
    return density.values[static_cast<std::size_t>(i) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(j)];
  };
  auto cfl_check = [&](double mu, int axis) {
    if (std::abs(mu) * dt_pde > 0.5 * density.h[axis] * (1.0 + 1e-12))
      throw StabilityError("fpe_step: dt exceeds the advection bound |mu| dt / h <= 1/2");
  };

  double outflow = 0.0;  // probability flux through the outer edge, times dt
  std::vector<double> delta(density.size(), 0.0);
  auto apply_flux = [&](int i0, int j0, int i1, int j1, double flux_dt) {
    const bool in0 = i0 >= 0 && i0 < nx && j0 >= 0 && j0 < ny;
    const bool in1 = i1 >= 0 && i1 < nx && j1 >= 0 && j1 < ny;
    if (in0) delta[static_cast<std::size_t>(i0) * ny + j0] -= flux_dt;
    if (in1) delta[static_cast<std::size_t>(i1) * ny + j1] += flux_dt;
    if (in0 != in1) outflow += in0 ? flux_dt : -flux_dt;
  };

  // x-interfaces between (i-1, j) and (i, j)
  const double hx = density.h[0];
  const double hy = density.dims == 2 ? density.h[1] : 1.0;
  for (int i = 0; i <= nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      const double left = at(i - 1, j), right = at(i, j);
      if (left == 0.0 && right == 0.0) continue;
      const Vec2 p{density.lo[0] + i * hx, density.dims == 1 ? 0.0 : density.lo[1] + (j + 0.5) * hy};
      const double mu = detail::effective_drift(sde, p, t).x;
      cfl_check(mu, 0);
      const double flux = std::max(mu, 0.0) * left + std::min(mu, 0.0) * right - diff * (right - left) / hx;
      apply_flux(i - 1, j, i, j, flux * dt_pde / hx);
    }
  }
  if (density.dims == 2) {
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j <= ny; ++j) {
        const double below = at(i, j - 1), above = at(i, j);
        if (below == 0.0 && above == 0.0) continue;
        const Vec2 p{density.lo[0] + (i + 0.5) * hx, density.lo[1] + j * hy};
        const double mu = detail::effective_drift(sde, p, t).y;
        cfl_check(mu, 1);
        const double flux = std::max(mu, 0.0) * below + std::min(mu, 0.0) * above - diff * (above - below) / hy;
        apply_flux(i, j - 1, i, j, flux * dt_pde / hy);
      }
    }
  }

  const double target_mass = density.mass() - outflow * density.cell_measure();
  double negative = 0.0;
  for (std::size_t k = 0; k < next.values.size(); ++k) {
    next.values[k] += delta[k];
    if (next.values[k] < 0.0) {
      negative -= next.values[k];
      next.values[k] = 0.0;
    }
  }
  next.leaked_mass += outflow * density.cell_measure();
  if (negative > 0.0) {
    next.clamped_mass += negative * density.cell_measure();
    const double m = next.mass();
    if (m > 0.0)
      for (double& v : next.values) v *= target_mass / m;
  }
  return next;
}

/// Maximum leaked mass before a run is aborted.
inline constexpr double kMaxLeak = 1e-3;

struct EvolveResult {
  GridDensity density;
  double t_end = 0.0;
  long steps = 0;
};

/// Advances `density` over `horizon` units of the descriptor's clock with a
/// uniform step no larger than max_dt (0 picks a stable step at t0).
inline EvolveResult evolve_density(GridDensity density, const SdeDescriptor& sde, double t0, double horizon,
                                   double max_dt = 0.0) {
  EvolveResult r{std::move(density), t0, 0};
  if (horizon <= 0.0) return r;
  double dt = max_dt;
  if (dt <= 0.0) {
    // Coefficients vary in time; take the tightest bound over the horizon.
    dt = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 10; ++k)
      dt = std::min(dt, 0.9 * stable_dt(r.density, sde, detail::clock_after(sde, t0, horizon * k / 10.0)));
  }
  if (!std::isfinite(dt)) dt = horizon;
  r.steps = static_cast<long>(std::ceil(horizon / dt - 1e-9));
  dt = horizon / static_cast<double>(r.steps);
  for (long k = 0; k < r.steps; ++k) {
    const double t = detail::clock_after(sde, t0, static_cast<double>(k) * dt);
    r.density = fpe_step(r.density, sde, t, dt);
    if (r.density.leaked_mass > kMaxLeak)
      throw DomainError("evolve_density: leaked mass " + std::to_string(r.density.leaked_mass) + " exceeds 0.1%");
  }
  r.t_end = detail::clock_after(sde, t0, horizon);
  return r;
}

/// Euler-Maruyama ensemble under a descriptor, from t0 over `horizon` units
/// of its clock. Diffusion is evaluated at the step midpoint so a
/// time-dependent g(t) accumulates the right variance.
inline void evolve_particles(std::span<Vec2> points, const SdeDescriptor& sde, double t0, double horizon, long steps,
                             RngStream& rng, bool one_dimensional = false) {
  if (steps < 1 || horizon <= 0.0) return;
  const double dt = horizon / static_cast<double>(steps);
  const double sqdt = std::sqrt(dt);
  for (long k = 0; k < steps; ++k) {
    const double t = detail::clock_after(sde, t0, static_cast<double>(k) * dt);
    const double g = sde.diffusion(detail::clock_after(sde, t0, (static_cast<double>(k) + 0.5) * dt));
    for (Vec2& p : points) {
      const Vec2 mu = detail::effective_drift(sde, p, t);
      const Vec2 z = rng.normal2();
      p.x += mu.x * dt + g * sqdt * z.x;
      if (!one_dimensional) p.y += mu.y * dt + g * sqdt * z.y;
    }
  }
}

/// Draws n points from a grid density: categorical cell, uniform inside.
inline std::vector<Vec2> sample_density(const GridDensity& d, std::size_t n, RngStream& rng) {
  std::vector<double> cdf(d.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) cdf[k] = acc += std::max(d.values[k], 0.0);
  if (!(acc > 0.0)) throw NumericError("sample_density: zero mass");
  std::vector<Vec2> out(n);
  for (Vec2& p : out) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), rng.uniform() * acc);
    const auto k = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(d.size()) - 1));
    const Vec2 c = d.center(k);
    p.x = c.x + (rng.uniform() - 0.5) * d.h[0];
    p.y = d.dims == 2 ? c.y + (rng.uniform() - 0.5) * d.h[1] : 0.0;
  }
  return out;
}

/// Empirical density of points on the grid geometry of `like`.
inline GridDensity empirical_density(std::span<const Vec2> points, const GridDensity& like) {
  GridDensity d = like;
  std::fill(d.values.begin(), d.values.end(), 0.0);
  d.leaked_mass = d.clamped_mass = 0.0;
  const double w = 1.0 / (static_cast<double>(points.size()) * d.cell_measure());
  for (const Vec2& p : points) {
    const auto k = d.locate(p);
    if (k >= 0) d.values[static_cast<std::size_t>(k)] += w;
  }
  return d;
}

inline double l1_distance(const GridDensity& a, const GridDensity& b) {
  if (a.size() != b.size()) throw ShapeError("l1_distance: grid mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a.values[k] - b.values[k]);
  return s * a.cell_measure();
}

// ---------------------------------------------------------------------------
// Checks

struct CheckReport {
  std::string check_name;
  nlohmann::json parameters = nlohmann::json::object();
  double statistic = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

inline void to_json(nlohmann::json& j, const CheckReport& r) {
  j = nlohmann::json{{"check_name", r.check_name},
                     {"parameters", r.parameters},
                     {"statistic", r.statistic},
                     {"threshold", r.threshold},
                     {"pass", r.pass}};
}

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct GreensReport {
  double variance = 0.0;
  double expected_variance = 0.0;
  double relative_error = 0.0;
  double ks_statistic = 0.0;  // sup |F_n - Phi| against the Gaussian kernel
  bool pass = false;
};

/// Pure Brownian motion dX = sigma dW from the origin, `steps` increments
/// over [0, t]; compares the sample variance with sigma^2 t.
inline GreensReport greens_function_check(double sigma, double t, std::size_t n_particles, RngStream& rng, long steps = 100) {
  if (!(t > 0.0)) throw ConfigError("greens_function_check: t must be > 0");
  if (n_particles < 2) throw ConfigError("greens_function_check: need at least 2 particles");
  if (steps < 1) throw ConfigError("greens_function_check: steps must be >= 1");
  const double dt = t / static_cast<double>(steps);
  std::vector<double> x(n_particles, 0.0);
  for (long k = 0; k < steps; ++k)
    for (double& v : x) v += sigma * std::sqrt(dt) * rng.normal();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n_particles);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n_particles - 1);

  GreensReport r;
  r.variance = var;
  r.expected_variance = sigma * sigma * t;
  if (r.expected_variance > 0.0) {
    r.relative_error = std::abs(var - r.expected_variance) / r.expected_variance;
    std::sort(x.begin(), x.end());
    const double scale = std::sqrt(r.expected_variance);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double f = normal_cdf(x[k] / scale);
      r.ks_statistic = std::max({r.ks_statistic, std::abs(f - static_cast<double>(k) / x.size()),
                                 std::abs(f - static_cast<double>(k + 1) / x.size())});
    }
    r.pass = r.relative_error < 0.05;
  } else {
    r.relative_error = var;
    r.pass = var == 0.0;
  }
  return r;
}

struct IndependenceOptions {
  long steps = 1000;
  bool coupled_noise = false;  // drive both ensembles with the same stream
  double max_outside = 1e-3;   // fraction of final points allowed off-grid
};

/// Evolves both ensembles over [0, horizon] of the descriptor's clock and
/// returns the JSD of their final histograms.
inline double independence_check(std::vector<Vec2> init_a, std::vector<Vec2> init_b, const SdeDescriptor& sde,
                                 double horizon, const Grid2D& grid, const RngStream& rng,
                                 const IndependenceOptions& opts = {}) {
  if (init_a.empty() || init_b.empty()) throw ConfigError("independence_check: empty ensemble");
  RngStream ra = rng.derive(0);
  RngStream rb = opts.coupled_noise ? rng.derive(0) : rng.derive(1);
  evolve_particles(init_a, sde, 0.0, horizon, opts.steps, ra);
  evolve_particles(init_b, sde, 0.0, horizon, opts.steps, rb);
  for (const auto* ens : {&init_a, &init_b}) {
    std::size_t outside = 0;
    for (const Vec2& p : *ens) outside += grid.contains(p) ? 0 : 1;
    if (static_cast<double>(outside) > opts.max_outside * static_cast<double>(ens->size()))
      throw DomainError("independence_check: grid does not cover the evolved ensemble");
  }
  return jsd(histogram(init_a, grid), histogram(init_b, grid));
}

struct FpeMcResult {
  double l1 = 0.0;
  GridDensity pde;
  GridDensity monte_carlo;
  long pde_steps = 0;
};

/// Evolves `init` with fpe_step and an ensemble sampled from it with
/// Euler-Maruyama, then returns sum |p_FPE - p_MC| * cell measure.
inline FpeMcResult fpe_vs_monte_carlo(const SdeDescriptor& sde, const GridDensity& init, double t0, double horizon,
                                      std::size_t n_particles, RngStream& rng, long mc_steps = 500, double max_dt = 0.0) {
  auto evolved = evolve_density(init, sde, t0, horizon, max_dt);
  auto particles = sample_density(init, n_particles, rng);
  evolve_particles(particles, sde, t0, horizon, mc_steps, rng, init.dims == 1);
  FpeMcResult r;
  r.pde = std::move(evolved.density);
  r.pde_steps = evolved.steps;
  r.monte_carlo = empirical_density(particles, r.pde);
  r.l1 = l1_distance(r.pde, r.monte_carlo);
  return r;
}

/// Overdamped Langevin dynamics of the rotating potential as a descriptor:
/// drift -grad V(x, t), diffusion sqrt(2 / beta).
inline SdeDescriptor langevin_descriptor(const SystemConfig& cfg) {
  const double g = std::sqrt(2.0 / cfg.beta);
  return {[cfg](Vec2 p, double t) { return -potential_gradient(cfg, t, p); }, [g](double) { return g; },
          Direction::forward};
}

// ---------------------------------------------------------------------------
// Named check cases

/// Green's function variance law for dX = sigma dW.
inline CheckReport diffusion_case(std::uint64_t seed, double sigma = 1.0, double t = 1.0, std::size_t n = 100000) {
  RngStream rng(seed, stream_id(StreamTag::verification, 0));
  const GreensReport g = greens_function_check(sigma, t, n, rng);
  return {"diffusion",
          {{"sigma", sigma}, {"t", t}, {"n_particles", n}, {"variance", g.variance},
           {"expected_variance", g.expected_variance}, {"ks_statistic", g.ks_statistic}},
          g.relative_error,
          0.05,
          g.pass};
}

/// Pure diffusion (D = 1/2) of a 1-D Gaussian: FPE solver vs Monte Carlo.
inline CheckReport mc_vs_pde_case(std::uint64_t seed, double horizon = 0.5, std::size_t n = 100000, double h = 0.02) {
  const SdeDescriptor sde{[](Vec2, double) { return Vec2{}; }, [](double) { return 1.0; }, Direction::forward};
  const double half_width = 4.0;
  const auto init = gaussian_line(-half_width, half_width, static_cast<int>(std::lround(2 * half_width / h)), 0.0, 0.5);
  RngStream rng(seed, stream_id(StreamTag::verification, 1));
  const FpeMcResult r = fpe_vs_monte_carlo(sde, init, 0.0, horizon, n, rng);
  return {"mc-vs-pde",
          {{"horizon", horizon}, {"n_particles", n}, {"h", h}, {"init_sd", 0.5}, {"pde_steps", r.pde_steps},
           {"leaked_mass", r.pde.leaked_mass}},
          r.l1,
          0.05,
          r.l1 < 0.05};
}

/// Reverse VE SDE with the exact score of N(0, data_sd^2) data, run from
/// t = 1 down to 0 on a 1-D grid: FPE solver vs Monte Carlo.
inline CheckReport reverse_case(std::uint64_t seed, std::size_t n = 100000, double h = 0.02, double data_sd = 0.5) {
  const NoiseSchedule schedule = make_schedule(1.0, 0.01, 10);
  const double base = data_sd * data_sd - schedule.sigma_min * schedule.sigma_min;
  const VeSde ve = make_ve_sde(schedule, [base](Vec2 p, double sigma) {
    return Vec2{-p.x / (base + sigma * sigma), 0.0};
  });
  const double start_sd = std::sqrt(base + schedule.sigma_max * schedule.sigma_max);
  const double half_width = 5.0;
  const int cells = static_cast<int>(std::lround(2 * half_width / h));
  const auto init = gaussian_line(-half_width, half_width, cells, 0.0, start_sd);
  RngStream rng(seed, stream_id(StreamTag::verification, 2));
  const FpeMcResult r = fpe_vs_monte_carlo(ve.reverse(), init, 1.0, 1.0, n, rng, 1000);
  const auto target = gaussian_line(-half_width, half_width, cells, 0.0, data_sd);
  return {"reverse",
          {{"n_particles", n}, {"h", h}, {"data_sd", data_sd}, {"schedule", schedule}, {"pde_steps", r.pde_steps},
           {"pde_variance", r.pde.variance()}, {"l1_pde_vs_target", l1_distance(r.pde, target)},
           {"leaked_mass", r.pde.leaked_mass}},
          r.l1,
          0.05,
          r.l1 < 0.05};
}

/// A point mass at (0.5, 0) and a uniform square, both diffused by the VE
/// forward SDE to accumulated variance 1, compared by JSD.
inline CheckReport independence_case(std::uint64_t seed, std::size_t n = 100000) {
  const double sigma_min = 0.01;
  const NoiseSchedule schedule = make_schedule(std::sqrt(1.0 + sigma_min * sigma_min), sigma_min, 10);
  const VeSde ve = make_ve_sde(schedule);
  const Grid2D grid{{-6.0, -6.0}, {6.0, 6.0}, {60, 60}};
  RngStream init(seed, stream_id(StreamTag::verification, 3));
  std::vector<Vec2> a(n, Vec2{0.5, 0.0}), b(n);
  for (Vec2& p : b) p = {init.uniform(-1.0, 1.0), init.uniform(-1.0, 1.0)};
  const double d = independence_check(std::move(a), std::move(b), ve.forward, 1.0, grid,
                                      RngStream(seed, stream_id(StreamTag::verification, 4)));
  return {"independence",
          {{"n_particles", n}, {"accumulated_variance", 1.0}, {"grid", grid}, {"init_a", "delta (0.5, 0)"},
           {"init_b", "uniform [-1, 1]^2"}},
          d,
          0.02,
          d < 0.02};
}

}  // namespace neqlab
