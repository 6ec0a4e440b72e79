#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "neqlab/fpe.hpp"

using namespace neqlab;

namespace {

SdeDescriptor constant_sde(double mu, double g, Direction dir = Direction::forward) {
  return {[mu](Vec2, double) { return Vec2{mu, mu}; }, [g](double) { return g; }, dir};
}

GridDensity delta_line(double lo, double hi, int cells, double at) {
  GridDensity d = GridDensity::line(lo, hi, cells);
  d.values[static_cast<std::size_t>(d.locate({at, 0.0}))] = 1.0 / d.h[0];
  return d;
}

}  // namespace

TEST(FpeStep, NoDriftNoDiffusionIsIdentity) {
  const auto d = gaussian_line(-2, 2, 40, 0.3, 0.4);
  const auto next = fpe_step(d, constant_sde(0.0, 0.0), 0.0, 0.1);
  EXPECT_EQ(next.values, d.values);
  EXPECT_EQ(next.leaked_mass, 0.0);
}

// For the central diffusive flux the discrete second moment grows by
// exactly 2 D dt per step while no mass reaches the edge.
TEST(FpeStep, DiffusionVarianceIdentity) {
  GridDensity d = delta_line(-5, 5, 500, 0.01);
  const double g = 0.7, D = 0.5 * g * g, dt = 0.2 * d.h[0] * d.h[0] / D;
  for (int k = 0; k < 200; ++k) {
    const double before = d.variance();
    const double mean = d.mean();
    d = fpe_step(d, constant_sde(0.0, g), 0.0, dt);
    EXPECT_NEAR(d.variance() - before, 2 * D * dt, 1e-8 * (2 * D * dt) + 1e-14);
    EXPECT_NEAR(d.mean(), mean, 1e-12);
    EXPECT_NEAR(d.mass(), 1.0, 1e-12);
  }
}

TEST(FpeStep, DriftMeanIdentity) {
  for (double mu : {0.8, -1.3}) {
    GridDensity d = gaussian_line(-4, 4, 400, 0.0, 0.3);
    const SdeDescriptor sde = constant_sde(mu, 0.3);
    const double dt = stable_dt(d, sde, 0.0);
    for (int k = 0; k < 100; ++k) {
      const double before = d.mean();
      d = fpe_step(d, sde, 0.0, dt);
      EXPECT_NEAR(d.mean() - before, mu * dt, 1e-8 * std::abs(mu * dt));
    }
  }
}

TEST(FpeStep, TwoDimensionalMoments) {
  Grid2D g{{-2, -2}, {2, 2}, {80, 80}};
  GridDensity d = GridDensity::plane(g);
  d.values[static_cast<std::size_t>(d.locate({0.01, 0.01}))] = 1.0 / d.cell_measure();
  const double D = 0.5, dt = 0.2 * d.h[0] * d.h[0] / D;
  for (int k = 0; k < 50; ++k) {
    const double vx = d.variance(0), vy = d.variance(1);
    d = fpe_step(d, constant_sde(0.0, 1.0), 0.0, dt);
    EXPECT_NEAR(d.variance(0) - vx, 2 * D * dt, 1e-8 * 2 * D * dt);
    EXPECT_NEAR(d.variance(1) - vy, 2 * D * dt, 1e-8 * 2 * D * dt);
  }
}

// Mass after a step plus what left through the edge equals mass before.
TEST(FpeStep, MassConservationProperty) {
  RngStream rng(1, 0);
  for (int trial = 0; trial < 10000; ++trial) {
    const bool plane = rng.below(2) == 1;
    GridDensity d = plane ? GridDensity::plane(Grid2D{{-1, -1}, {1, 1}, {8, 8}}) : GridDensity::line(-1, 1, 20);
    for (double& v : d.values) v = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
    d.values[0] += 1.0;
    d.normalize();
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3), g = rng.uniform(0, 2);
    const SdeDescriptor sde{[a, b](Vec2 p, double) { return Vec2{a + b * p.x, a - b * p.y}; },
                            [g](double) { return g; }, rng.below(2) ? Direction::forward : Direction::reverse};
    const double dt = rng.uniform(0.05, 1.0) * stable_dt(d, sde, 0.0);
    const GridDensity next = fpe_step(d, sde, 0.0, dt);
    EXPECT_NEAR(next.mass() + next.leaked_mass, 1.0, 1e-9) << "trial " << trial;
    for (double v : next.values) ASSERT_GE(v, 0.0);
  }
}

TEST(FpeStep, StabilityBounds) {
  const auto d = gaussian_line(-1, 1, 20, 0.0, 0.3);
  const double h = d.h[0];
  EXPECT_NO_THROW(fpe_step(d, constant_sde(0.0, 1.0), 0.0, h * h / 2.0));
  EXPECT_THROW(fpe_step(d, constant_sde(0.0, 1.0), 0.0, h * h / 2.0 * 1.01), StabilityError);
  EXPECT_THROW(fpe_step(d, constant_sde(2.0, 0.0), 0.0, 0.3 * h), StabilityError);
  EXPECT_THROW(fpe_step(d, constant_sde(0.0, 1.0), 0.0, -1e-3), StabilityError);
  EXPECT_THROW(fpe_step(d, constant_sde(0.0, -1.0), 0.0, 1e-4), StabilityError);
  EXPECT_NEAR(stable_dt(d, constant_sde(2.0, 1.0), 0.0), std::min(h * h / 2.0, 0.25 * h), 1e-15);
}

TEST(Evolve, LeakageAborts) {
  const auto d = gaussian_line(-1, 1, 50, 0.8, 0.1);
  EXPECT_THROW(evolve_density(d, constant_sde(1.0, 0.2), 0.0, 1.0), DomainError);
}

TEST(Evolve, ReverseClockRunsBackwards) {
  const auto d = gaussian_line(-3, 3, 100, 0.0, 0.3);
  const SdeDescriptor sde = constant_sde(0.5, 0.0, Direction::reverse);
  const EvolveResult r = evolve_density(d, sde, 1.0, 1.0);
  EXPECT_NEAR(r.t_end, 0.0, 1e-15);
  // The solver integrates -drift forward in its own clock.
  EXPECT_NEAR(r.density.mean(), -0.5, 1e-8);
}

TEST(Greens, VarianceLaw) {
  RngStream rng(2, 0);
  const GreensReport r = greens_function_check(1.0, 1.0, 100000, rng);
  EXPECT_GT(r.variance, 0.95);
  EXPECT_LT(r.variance, 1.05);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.ks_statistic, 0.01);
}

TEST(Greens, SingleIncrementAndZeroSigma) {
  RngStream rng(3, 0);
  const GreensReport one = greens_function_check(2.0, 1e-3, 100000, rng, 1);
  EXPECT_NEAR(one.variance, 4e-3, 0.05 * 4e-3);
  const GreensReport zero = greens_function_check(0.0, 1.0, 10000, rng);
  EXPECT_EQ(zero.variance, 0.0);
  EXPECT_TRUE(zero.pass);
  EXPECT_THROW(greens_function_check(1.0, 0.0, 10000, rng), ConfigError);
  EXPECT_THROW(greens_function_check(1.0, 1.0, 1, rng), ConfigError);
}

TEST(Independence, CoupledIdenticalEnsemblesGiveZero) {
  RngStream init(4, 0);
  std::vector<Vec2> a(20000);
  for (auto& p : a) p = {init.uniform(-1, 1), init.uniform(-1, 1)};
  IndependenceOptions o;
  o.coupled_noise = true;
  o.steps = 50;
  const double d = independence_check(a, a, constant_sde(0.0, 1.0), 1.0, Grid2D{{-8, -8}, {8, 8}, {40, 40}},
                                      RngStream(5, 0), o);
  EXPECT_EQ(d, 0.0);
}

TEST(Independence, NoDiffusionKeepsDeltasApart) {
  IndependenceOptions o;
  o.steps = 10;
  const double d = independence_check(std::vector<Vec2>(10000, Vec2{-0.5, 0.0}), std::vector<Vec2>(10000, Vec2{0.5, 0.0}),
                                      constant_sde(0.0, 0.0), 1.0, Grid2D{}, RngStream(6, 0), o);
  EXPECT_NEAR(d, std::log(2.0), 1e-15);
}

TEST(Independence, CoverageError) {
  EXPECT_THROW(independence_check(std::vector<Vec2>(100, Vec2{}), std::vector<Vec2>(100, Vec2{}), constant_sde(0.0, 5.0),
                                  1.0, Grid2D{}, RngStream(7, 0)),
               DomainError);
  EXPECT_THROW(independence_check({}, std::vector<Vec2>(1), constant_sde(0.0, 1.0), 1.0, Grid2D{}, RngStream(7, 0)),
               ConfigError);
}

// Once the accumulated variance dwarfs the initial spread, the two
// ensembles become indistinguishable.
TEST(Independence, ForgetsInitialStateAtLargeVariance) {
  const NoiseSchedule s = make_schedule(5.0, 0.01, 10);
  const VeSde ve = make_ve_sde(s);
  RngStream init(8, 0);
  const std::size_t n = 100000;
  std::vector<Vec2> a(n, Vec2{0.5, 0.0}), b(n);
  for (auto& p : b) p = {init.uniform(-1, 1), init.uniform(-1, 1)};
  const double d = independence_check(a, b, ve.forward, 1.0, Grid2D{{-25, -25}, {25, 25}, {50, 50}}, RngStream(9, 0));
  EXPECT_LT(d, 0.02);
}

// At accumulated variance 1 the delta and the uniform square stay apart:
// the continuous JSD of the two smoothed laws is 0.0355, and binning on this
// grid only lowers it slightly.
TEST(Independence, UnitVarianceCaseMatchesQuadrature) {
  const CheckReport r = independence_case(10);
  EXPECT_EQ(r.check_name, "independence");
  EXPECT_EQ(r.threshold, 0.02);
  EXPECT_NEAR(r.statistic, 0.0355, 0.006);
  EXPECT_EQ(r.pass, r.statistic < 0.02);
}

TEST(FpeVsMc, PureDiffusion) {
  const CheckReport r = mc_vs_pde_case(11);
  EXPECT_LT(r.statistic, 0.05);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.parameters["leaked_mass"].get<double>(), kMaxLeak);
}

// With no evolution the distance is sampling error alone. On an h = 0.02
// grid that error is about 0.028 at n = 1e5 (sum of binomial deviations over
// 400 occupied cells), so the coarser h = 0.1 grid carries the < 0.02 check.
TEST(FpeVsMc, HorizonZeroIsSamplingError) {
  const SdeDescriptor sde = constant_sde(0.0, 1.0);
  RngStream rng(12, 0);
  const auto coarse = fpe_vs_monte_carlo(sde, gaussian_line(-4, 4, 80, 0.0, 0.5), 0.0, 0.0, 100000, rng);
  EXPECT_LT(coarse.l1, 0.02);
  const auto fine = fpe_vs_monte_carlo(sde, gaussian_line(-4, 4, 400, 0.0, 0.5), 0.0, 0.0, 100000, rng);
  EXPECT_LT(fine.l1, 0.035);
  EXPECT_EQ(coarse.pde.values, gaussian_line(-4, 4, 80, 0.0, 0.5).values);
}

TEST(FpeVsMc, DriftOnlyTransport) {
  const SdeDescriptor sde = constant_sde(1.0, 0.0);
  RngStream rng(13, 0);
  const auto r = fpe_vs_monte_carlo(sde, delta_line(-1, 2, 150, 0.01), 0.0, 0.5, 1000, rng, 50);
  EXPECT_NEAR(r.pde.mean(), 0.51, 1e-9);
  double near = 0.0;
  for (std::size_t k = 0; k < r.pde.size(); ++k)
    if (std::abs(r.pde.center(k).x - 0.51) < 0.2) near += r.pde.values[k] * r.pde.h[0];
  EXPECT_GT(near, 0.95);
  // Every particle rides the characteristic from its start cell.
  const GridDensity& mc = r.monte_carlo;
  EXPECT_NEAR(mc.values[static_cast<std::size_t>(mc.locate({0.51, 0.0}))], 1.0 / mc.h[0], 1e-9 / mc.h[0]);
}

TEST(FpeVsMc, ReverseAnalyticScore) {
  const CheckReport r = reverse_case(14);
  EXPECT_LT(r.statistic, 0.05);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.parameters["l1_pde_vs_target"].get<double>(), 0.05);
}

namespace {

double rotating_well_l1(int bins) {
  const SdeDescriptor sde = langevin_descriptor(SystemConfig{});
  GridDensity init = GridDensity::plane(Grid2D{{-1.2, -1.2}, {1.2, 1.2}, {bins, bins}});
  for (std::size_t k = 0; k < init.size(); ++k) {
    const Vec2 c = init.center(k);
    init.values[k] = std::exp(-((c.x - 0.5) * (c.x - 0.5) + c.y * c.y) / (2 * 0.1 * 0.1));
  }
  init.normalize();
  RngStream rng(15, 0);
  return fpe_vs_monte_carlo(sde, init, 0.0, 0.2, 100000, rng, 2000).l1;
}

}  // namespace

// Upwind smearing across the narrow well keeps this near 0.33; left failing on purpose.
TEST(FpeVsMc, RotatingWellCoarsePlane) { EXPECT_LT(rotating_well_l1(64), 0.15); }

TEST(FpeVsMc, RotatingWellConvergesUnderRefinement) {
  const double coarse = rotating_well_l1(32), mid = rotating_well_l1(64), fine = rotating_well_l1(128);
  EXPECT_LT(mid, coarse);
  EXPECT_LT(fine, mid);
  EXPECT_LT(fine, 0.25);
}

TEST(Cases, DiffusionReport) {
  const CheckReport r = diffusion_case(16);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.threshold, 0.05);
  const nlohmann::json j = r;
  for (const char* key : {"check_name", "parameters", "statistic", "threshold", "pass"}) EXPECT_TRUE(j.contains(key));
  EXPECT_EQ(diffusion_case(16).statistic, r.statistic);
}
