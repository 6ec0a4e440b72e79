#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "neqlab/noneq_model.hpp"

using namespace neqlab;

namespace {

Eigen::MatrixXd gaussian_score(const Eigen::MatrixXd& x, double sigma, Eigen::Vector2d mu = Eigen::Vector2d::Zero()) {
  return -(x.colwise() - mu) / (1.0 + sigma * sigma);
}

// Points uniform in the disc of radius 3.
Eigen::MatrixXd disc_points(std::size_t n, std::uint64_t seed) {
  RngStream rng(seed, 0);
  Eigen::MatrixXd x(2, static_cast<Eigen::Index>(n));
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Vec2 p;
    do {
      p = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
    } while (p.x * p.x + p.y * p.y > 9.0);
    x.col(c) << p.x, p.y;
  }
  return x;
}

// Field-relative L2 error ||s_model - s|| / ||s|| per level, averaged over levels.
double mean_relative_error(const ScoreModel& m, Eigen::Vector2d mu) {
  const Eigen::MatrixXd x = disc_points(2000, 99).colwise() + mu;
  double total = 0.0;
  for (double s : m.schedule.sigmas) {
    const Eigen::MatrixXd truth = gaussian_score(x, s, mu);
    total += (m(x, 0.0, s) - truth).norm() / truth.norm();
  }
  return total / static_cast<double>(m.schedule.sigmas.size());
}

ScoreFit train_gaussian(Eigen::Vector2d mu) {
  RngStream init(1, stream_id(StreamTag::init, 0));
  ScoreModel model = ScoreModel::create({4, 64, 64, 2}, Activation::tanh, make_schedule(1.0, 0.01, 10), 1.0, init);
  ScoreTrainOptions o;
  o.steps = 8000;
  o.learning_rate = 3e-3;
  o.final_learning_rate = 1e-5;
  RngStream rng(1, stream_id(StreamTag::training, 0));
  auto draw = [&](std::span<Vec2> p, std::span<double> t, RngStream& r) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      const Vec2 z = r.normal2();
      p[k] = {mu(0) + z.x, mu(1) + z.y};
      t[k] = 0.0;
    }
  };
  return train_score_with(std::move(model), draw, o, rng);
}

ScoreModel tiny_model(std::uint64_t seed, SigmaConditioning c = SigmaConditioning::ratio) {
  RngStream init(seed, 0);
  return ScoreModel::create({4, 8, 2}, Activation::tanh, make_schedule(1.0, 0.01, 10), 20.0, init, c);
}

}  // namespace

TEST(Schedule, Examples) {
  const auto s = make_schedule(1.0, 0.01, 3);
  ASSERT_EQ(s.sigmas.size(), 3u);
  EXPECT_EQ(s.sigmas[0], 1.0);
  EXPECT_NEAR(s.sigmas[1], 0.1, 1e-15);
  EXPECT_EQ(s.sigmas[2], 0.01);
  EXPECT_NEAR(make_schedule(1.0, 0.01, 10).ratio(), 1.6681, 5e-5);
}

TEST(Schedule, GeometricInvariant) {
  for (int levels : {2, 5, 10, 37}) {
    const auto s = make_schedule(2.5, 0.003, levels);
    EXPECT_EQ(s.sigmas.front(), 2.5);
    EXPECT_EQ(s.sigmas.back(), 0.003);
    for (std::size_t i = 1; i < s.sigmas.size(); ++i)
      EXPECT_NEAR(s.sigmas[i - 1] / s.sigmas[i], s.ratio(), 1e-12 * s.ratio());
  }
}

TEST(Schedule, ErrorsAndJson) {
  EXPECT_THROW(make_schedule(0.01, 1.0, 3), ConfigError);
  EXPECT_THROW(make_schedule(1.0, 0.0, 3), ConfigError);
  EXPECT_THROW(make_schedule(1.0, 0.01, 1), ConfigError);
  const auto s = make_schedule(1.0, 0.01, 10);
  EXPECT_EQ(nlohmann::json(s).get<NoiseSchedule>().sigmas, s.sigmas);
}

TEST(ScoreModel, SigmaFeatures) {
  const ScoreModel r = tiny_model(1, SigmaConditioning::ratio);
  EXPECT_EQ(r.sigma_feature(1.0), 1.0);
  EXPECT_NEAR(r.sigma_feature(0.01), 0.01, 1e-17);
  const ScoreModel l = tiny_model(1, SigmaConditioning::log_standardized);
  double mean = 0.0, sq = 0.0;
  for (double s : l.schedule.sigmas) {
    mean += l.sigma_feature(s);
    sq += l.sigma_feature(s) * l.sigma_feature(s);
  }
  EXPECT_NEAR(mean / 10, 0.0, 1e-14);
  EXPECT_NEAR(sq / 10, 1.0, 1e-14);
  EXPECT_EQ(sigma_conditioning_from_string(to_string(SigmaConditioning::log_standardized)),
            SigmaConditioning::log_standardized);
  EXPECT_THROW(sigma_conditioning_from_string("log"), ConfigError);
}

TEST(ScoreModel, InputLayout) {
  ScoreModel m = tiny_model(2);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(2, 3, 0.25);
  const std::vector<double> t{0.0, 10.0, 20.0}, s{1.0, 0.1, 0.01};
  const Eigen::MatrixXd in = m.features(x, t, s);
  EXPECT_EQ(in(2, 1), 0.5);
  EXPECT_EQ(in(3, 2), 0.01);
  const Eigen::MatrixXd batched = m.score(x, t, s);
  EXPECT_EQ(batched.col(1), m(x.col(1), 10.0, 0.1).col(0));
  EXPECT_THROW(m.features(x, std::vector<double>{0.0}, s), ShapeError);
  RngStream init(3, 0);
  EXPECT_THROW(ScoreModel::create({3, 8, 2}, Activation::tanh, make_schedule(1, 0.1, 2), 1.0, init), ShapeError);
}

TEST(Dsm, ZeroModelLossIsTwo) {
  ScoreModel m = tiny_model(3);
  m.net = DenseNet::zeros({4, 8, 2});
  RngStream rng(4, 0);
  std::vector<Vec2> pts(10000);
  for (auto& p : pts) p = rng.normal2();
  const std::vector<double> t(pts.size(), 1.0);
  const DsmResult r = dsm_loss(m, pts, t, rng);
  // Per-item loss is ||z||^2, chi-square with 2 dof: variance 4, standard error 0.02.
  EXPECT_NEAR(r.loss, 2.0, 3 * 0.02);
}

TEST(Dsm, OracleScoreGivesZeroLoss) {
  RngStream rng(5, 0);
  std::vector<Vec2> pts(64, Vec2{0.3, -0.2});
  const std::vector<double> t(64, 0.0);
  const DsmDraws d = dsm_draw(pts, t, make_schedule(1.0, 0.01, 10), rng);
  Eigen::MatrixXd oracle(2, 64);
  for (Eigen::Index c = 0; c < 64; ++c) oracle.col(c) = -d.z.col(c) / d.sigmas[static_cast<std::size_t>(c)];
  EXPECT_EQ(dsm_loss_from_scores(d, oracle), 0.0);
}

TEST(Dsm, DrawLaw) {
  RngStream rng(6, 0);
  const auto sched = make_schedule(1.0, 0.01, 10);
  std::vector<Vec2> pts(5000, Vec2{1.0, 2.0});
  const std::vector<double> t(pts.size(), 3.0);
  const DsmDraws d = dsm_draw(pts, t, sched, rng);
  std::vector<int> hits(10, 0);
  for (Eigen::Index c = 0; c < 5000; ++c) {
    const double s = d.sigmas[static_cast<std::size_t>(c)];
    const auto it = std::find(sched.sigmas.begin(), sched.sigmas.end(), s);
    ASSERT_NE(it, sched.sigmas.end());
    ++hits[static_cast<std::size_t>(it - sched.sigmas.begin())];
    EXPECT_NEAR(d.noisy(0, c), 1.0 + s * d.z(0, c), 1e-15);
    EXPECT_EQ(d.times[static_cast<std::size_t>(c)], 3.0);
  }
  for (int h : hits) EXPECT_NEAR(h, 500, 4 * std::sqrt(5000 * 0.1 * 0.9));
}

TEST(Dsm, AntitheticPairs) {
  RngStream rng(7, 0);
  const std::vector<Vec2> pts{{0.5, 0.5}, {0.5, 0.5}, {-1.0, 0.0}, {-1.0, 0.0}};
  const std::vector<double> t{1.0, 1.0, 2.0, 2.0};
  const DsmDraws d = dsm_draw(pts, t, make_schedule(1.0, 0.01, 10), rng, true);
  EXPECT_EQ(d.z.col(1), Eigen::Vector2d(-d.z.col(0)));
  EXPECT_EQ(d.sigmas[3], d.sigmas[2]);
  EXPECT_NEAR(d.noisy(0, 3) + d.noisy(0, 2), -2.0, 1e-15);
}

TEST(Dsm, Errors) {
  ScoreModel m = tiny_model(8);
  RngStream rng(8, 0);
  EXPECT_THROW(dsm_loss(m, std::vector<Vec2>{}, std::vector<double>{}, rng), ShapeError);
  EXPECT_THROW(dsm_loss(m, std::vector<Vec2>{{0, 0}}, std::vector<double>{}, rng), ShapeError);
}

// Gradients at fixed noise draws against central differences of the loss.
TEST(Dsm, GradientMatchesFiniteDifferences) {
  ScoreModel m = tiny_model(9, SigmaConditioning::log_standardized);
  RngStream data(10, 0);
  std::vector<Vec2> pts(32);
  std::vector<double> t(32);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    pts[k] = data.normal2();
    t[k] = data.uniform(0.0, 20.0);
  }
  const RngStream draws(11, 0);
  RngStream r1 = draws;
  const DsmResult r = dsm_loss(m, pts, t, r1);
  RngStream r2 = draws;
  const DsmDraws d = dsm_draw(pts, t, m.schedule, r2);
  auto loss = [&] { return dsm_loss_from_scores(d, m.score(d.noisy, d.times, d.sigmas)); };
  EXPECT_NEAR(loss(), r.loss, 1e-14 * r.loss);

  const double h = 1e-6;
  double diff = 0.0, scale = 0.0;
  auto probe = [&](double& param, double grad) {
    const double saved = param;
    param = saved + h;
    const double up = loss();
    param = saved - h;
    const double down = loss();
    param = saved;
    const double fd = (up - down) / (2 * h);
    diff += (fd - grad) * (fd - grad);
    scale += fd * fd;
  };
  for (std::size_t l = 0; l < m.net.n_layers(); ++l) {
    for (Eigen::Index k = 0; k < m.net.weights[l].size(); ++k)
      probe(m.net.weights[l].data()[k], r.grads.weights[l].data()[k]);
    for (Eigen::Index k = 0; k < m.net.biases[l].size(); ++k)
      probe(m.net.biases[l].data()[k], r.grads.biases[l].data()[k]);
  }
  EXPECT_LT(std::sqrt(diff / scale), 1e-4);
}

TEST(TrainScore, RecoversStandardGaussianScore) {
  const ScoreFit fit = train_gaussian(Eigen::Vector2d::Zero());
  EXPECT_LT(mean_relative_error(fit.model, Eigen::Vector2d::Zero()), 0.10);
}

TEST(TrainScore, ShiftedGaussianZeroCrossing) {
  const Eigen::Vector2d mu(0.5, -0.3);
  const ScoreFit fit = train_gaussian(mu);
  // The analytic field is -(x - mu) / (1 + sigma^2), so one Newton step from
  // mu lands on the learned zero crossing.
  for (double s : fit.model.schedule.sigmas) {
    const Eigen::Vector2d offset = (1.0 + s * s) * fit.model(mu, 0.0, s).col(0);
    EXPECT_LT(offset.norm(), 0.05) << "sigma " << s;
  }
}

TEST(TrainScore, DeterministicAndValidated) {
  SystemConfig cfg;
  cfg.n_traj = 4;
  cfg.total_time = 0.2;
  const TrajectorySet ts = simulate_ensemble(cfg);
  ScoreTrainOptions o;
  o.steps = 30;
  o.batch_size = 16;
  o.log_every = 10;
  RngStream a(1, 0), b(1, 0);
  const ScoreFit fa = train_score(ts, tiny_model(12), o, a);
  const ScoreFit fb = train_score(ts, tiny_model(12), o, b);
  EXPECT_EQ(fa.model.net.weights[0], fb.model.net.weights[0]);
  EXPECT_EQ(fa.loss_history, fb.loss_history);
  ASSERT_EQ(fa.loss_history.size(), 4u);
  EXPECT_EQ(fa.loss_history.back().first, 29);
  o.steps = 0;
  EXPECT_THROW(train_score(ts, tiny_model(12), o, a), ConfigError);
}

TEST(TrainScore, CosineRate) {
  ScoreTrainOptions o;
  o.steps = 101;
  o.learning_rate = 1e-3;
  EXPECT_EQ(o.rate_at(50), 1e-3);
  o.final_learning_rate = 1e-5;
  EXPECT_EQ(o.rate_at(0), 1e-3);
  EXPECT_NEAR(o.rate_at(50), 0.5 * (1e-3 + 1e-5), 1e-18);
  EXPECT_NEAR(o.rate_at(100), 1e-5, 1e-18);
}

TEST(Langevin, AnalyticGaussianScoreRecoversTarget) {
  const auto sched = make_schedule(1.0, 0.01, 10);
  auto score = [](const Eigen::MatrixXd& x, double, double sigma) { return gaussian_score(x, sigma); };
  const auto pts = annealed_langevin_sample(score, sched, 0.0, 10000, LangevinOptions{}, RngStream(13, 0));
  double mx = 0, my = 0, vx = 0, vy = 0;
  for (const Vec2& p : pts) {
    mx += p.x;
    my += p.y;
    vx += p.x * p.x;
    vy += p.y * p.y;
  }
  const double n = static_cast<double>(pts.size());
  mx /= n;
  my /= n;
  EXPECT_NEAR(mx, 0.0, 0.05);
  EXPECT_NEAR(my, 0.0, 0.05);
  EXPECT_NEAR(vx / n - mx * mx, 1.0, 0.05);
  EXPECT_NEAR(vy / n - my * my, 1.0, 0.05);
}

TEST(Langevin, MixtureMomentsMatchQuadrature) {
  const double w = 0.2;
  auto density = [w](double a) {
    auto g = [w](double u) { return std::exp(-u * u / (2 * w * w)) / (w * std::sqrt(2 * kPi)); };
    return 0.5 * g(a - 1) + 0.5 * g(a + 1);
  };
  double m1 = 0.0, m2 = 0.0;
  const double h = 1e-4;
  for (double a = -5.0; a <= 5.0; a += h) {
    m1 += a * density(a) * h;
    m2 += a * a * density(a) * h;
  }
  EXPECT_NEAR(m2, 1.0 + w * w, 1e-9);

  // x follows the mixture perturbed by sigma, y the standard Gaussian.
  auto score = [w](const Eigen::MatrixXd& x, double, double sigma) {
    const double v = w * w + sigma * sigma;
    Eigen::MatrixXd out(2, x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double a = x(0, c);
      const double lp = -(a - 1) * (a - 1) / (2 * v), lm = -(a + 1) * (a + 1) / (2 * v);
      const double r = 1.0 / (1.0 + std::exp(lm - lp));
      out(0, c) = (r * (1 - a) + (1 - r) * (-1 - a)) / v;
      out(1, c) = -x(1, c) / (1 + sigma * sigma);
    }
    return out;
  };
  const auto pts = annealed_langevin_sample(score, make_schedule(1.0, 0.01, 10), 0.0, 10000, LangevinOptions{},
                                            RngStream(14, 0));
  double s1 = 0, s2 = 0;
  for (const Vec2& p : pts) {
    s1 += p.x;
    s2 += p.x * p.x;
  }
  s1 /= 1e4;
  s2 /= 1e4;
  EXPECT_NEAR(s1, m1, 0.05 * std::sqrt(m2));  // the first moment is zero, so the 5% is taken of its scale
  EXPECT_NEAR(s2, m2, 0.05 * m2);
}

TEST(Langevin, DeterminismAndChunking) {
  const ScoreModel m = tiny_model(15);
  LangevinOptions o;
  o.steps_per_level = 5;
  const auto a = annealed_langevin_sample(m, 3.0, 1, o, RngStream(16, 0));
  const auto b = annealed_langevin_sample(m, 3.0, 1, o, RngStream(16, 0));
  EXPECT_EQ(a, b);
  const auto one = annealed_langevin_sample(m, 3.0, 1500, o, RngStream(16, 0));
  o.workers = 3;
  const auto three = annealed_langevin_sample(m, 3.0, 1500, o, RngStream(16, 0));
  EXPECT_EQ(one, three);
}

TEST(Langevin, Errors) {
  const ScoreModel m = tiny_model(17);
  LangevinOptions o;
  EXPECT_THROW(annealed_langevin_sample(m, 0.0, 0, o, RngStream(1, 0)), ConfigError);
  o.steps_per_level = 0;
  EXPECT_THROW(annealed_langevin_sample(m, 0.0, 10, o, RngStream(1, 0)), ConfigError);
  o.steps_per_level = 10;
  o.eps = 0.0;
  EXPECT_THROW(annealed_langevin_sample(m, 0.0, 10, o, RngStream(1, 0)), ConfigError);
  o.eps = 2e-5;
  auto repel = [](const Eigen::MatrixXd& x, double, double) { return Eigen::MatrixXd(1e6 * x); };
  EXPECT_THROW(annealed_langevin_sample(repel, m.schedule, 0.0, 10, o, RngStream(1, 0)), DivergenceError);
}

TEST(VeSde, ForwardDescriptor) {
  const auto sched = make_schedule(1.0, 0.01, 10);
  const VeSde sde = make_ve_sde(sched);
  EXPECT_EQ(sde.forward.direction, Direction::forward);
  EXPECT_EQ(sde.forward.drift({0.3, -2.0}, 0.7), (Vec2{0.0, 0.0}));
  EXPECT_NEAR(sde.noise_level(0.0), 0.01, 1e-17);
  EXPECT_NEAR(sde.noise_level(1.0), 1.0, 1e-15);
  for (std::size_t i = 0; i < sched.sigmas.size(); ++i)
    EXPECT_NEAR(sde.noise_level(1.0 - static_cast<double>(i) / 9.0), sched.sigmas[i], 1e-14);
  // Accumulated variance: the integral of g^2 over [0, t] is sigma(t)^2 - sigma_min^2.
  double acc = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const double g = sde.forward.diffusion((k + 0.5) / n);
    EXPECT_GE(g, 0.0);
    acc += g * g / n;
  }
  EXPECT_NEAR(acc, 1.0 - 1e-4, 1e-8);
  EXPECT_THROW(sde.reverse(), ConfigError);
}

TEST(VeSde, ReverseDescriptor) {
  const auto sched = make_schedule(1.0, 0.01, 10);
  const VeSde zero = make_ve_sde(sched, [](Vec2, double) { return Vec2{}; });
  EXPECT_EQ(zero.reverse().drift({1.0, 0.0}, 0.5), (Vec2{0.0, 0.0}));
  EXPECT_EQ(zero.reverse().direction, Direction::reverse);

  const VeSde g = make_ve_sde(sched, [](Vec2 p, double s) { return Vec2{-p.x / (1 + s * s), -p.y / (1 + s * s)}; });
  // At t = 1, sigma = 1 and g^2 = 2 ln 100; the score at (1, 0) is (-1/2, 0).
  const Vec2 d = g.reverse().drift({1.0, 0.0}, 1.0);
  EXPECT_NEAR(d.x, std::log(100.0), 1e-12);
  EXPECT_EQ(d.y, 0.0);
  EXPECT_NEAR(g.reverse().diffusion(1.0), std::sqrt(2 * std::log(100.0)), 1e-14);
}

TEST(ScoreCheckpoint, RoundTrip) {
  const ScoreModel m = tiny_model(18, SigmaConditioning::log_standardized);
  const auto j = nlohmann::json::parse(score_checkpoint_json(m).dump());
  EXPECT_EQ(j["model"], "noneq");
  EXPECT_EQ(j["sigma_conditioning"], "log_standardized");
  const ScoreModel back = score_model_from_checkpoint(j);
  const Eigen::MatrixXd x = disc_points(10, 1);
  EXPECT_EQ(back(x, 4.0, 0.1), m(x, 4.0, 0.1));
  EXPECT_EQ(back.schedule.sigmas, m.schedule.sigmas);
  EXPECT_EQ(back.t_scale, 20.0);
  auto bad = j;
  bad["layer_sizes"] = {4, 8, 1};
  bad["weights"][1].erase(1);
  bad["biases"][1].erase(1);
  EXPECT_THROW(score_model_from_checkpoint(bad), ShapeError);
}
