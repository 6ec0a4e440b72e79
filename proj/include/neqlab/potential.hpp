#pragma once

#include <cmath>
#include <concepts>
#include <string>

#include "neqlab/config.hpp"
#include "neqlab/types.hpp"

namespace neqlab {

/// Below this radius the polar angle, and with it the potential, is undefined.
inline constexpr double kMinRadius = 1e-9;

/// A time-dependent scalar field the Langevin integrator can follow.
template <typename F>
concept ForceField = requires(const F& f, double t, Vec2 p) {
  { f.gradient(t, p) } -> std::convertible_to<Vec2>;
};

namespace detail {

inline double checked_radius(Vec2 p) {
  const double r = norm(p);
  if (!(r >= kMinRadius)) {
    throw DomainError("potential evaluated within " + std::to_string(kMinRadius) +
                      " of the origin, where the angle is undefined");
  }
  return r;
}

inline double phase(const SystemConfig& cfg, double t, Vec2 p) {
  return cfg.s * std::atan2(p.y, p.x) - 0.5 * kPi * t;
}

}  // namespace detail

/// V(t, x, y) = cos(s*theta - (pi/2) t) + 10 (r - 1/2), radial term squared
/// when cfg.radial_squared is set.
inline double potential_value(const SystemConfig& cfg, double t, Vec2 p) {
  const double r = detail::checked_radius(p);
  const double radial = r - 0.5;
  return std::cos(detail::phase(cfg, t, p)) + 10.0 * (cfg.radial_squared ? radial * radial : radial);
}

inline Vec2 potential_gradient(const SystemConfig& cfg, double t, Vec2 p) {
  const double r = detail::checked_radius(p);
  const double r2 = r * r;
  // d/dtheta of the angular term, then chain through dtheta/dx = -y/r^2,
  // dtheta/dy = x/r^2.
  const double angular = -cfg.s * std::sin(detail::phase(cfg, t, p));
  // dV/dr of the radial term, then chain through dr/dx = x/r.
  const double radial = cfg.radial_squared ? 20.0 * (r - 0.5) : 10.0;
  return {angular * (-p.y / r2) + radial * p.x / r, angular * (p.x / r2) + radial * p.y / r};
}

/// The rotating landscape as a ForceField.
class RotatingPotential {
 public:
  explicit RotatingPotential(SystemConfig cfg) : cfg_(std::move(cfg)) {}

  double value(double t, Vec2 p) const { return potential_value(cfg_, t, p); }
  Vec2 gradient(double t, Vec2 p) const { return potential_gradient(cfg_, t, p); }
  const SystemConfig& config() const { return cfg_; }

 private:
  SystemConfig cfg_;
};

/// The landscape pinned at one instant; the time argument is ignored.
class FrozenPotential {
 public:
  FrozenPotential(SystemConfig cfg, double t_freeze) : cfg_(std::move(cfg)), t_freeze_(t_freeze) {
    if (!(t_freeze >= 0.0)) throw DomainError("t_freeze must be >= 0");
  }

  double operator()(Vec2 p) const { return potential_value(cfg_, t_freeze_, p); }
  double value(double /*t*/, Vec2 p) const { return (*this)(p); }
  Vec2 gradient(double /*t*/, Vec2 p) const { return potential_gradient(cfg_, t_freeze_, p); }
  double freeze_time() const { return t_freeze_; }

 private:
  SystemConfig cfg_;
  double t_freeze_;
};

inline FrozenPotential frozen_potential(const SystemConfig& cfg, double t_freeze) {
  return FrozenPotential(cfg, t_freeze);
}

/// Flat landscape, for pure-diffusion checks.
struct ZeroPotential {
  Vec2 gradient(double /*t*/, Vec2 /*p*/) const { return {}; }
};

}  // namespace neqlab
