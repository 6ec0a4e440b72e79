#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "neqlab/langevin.hpp"
#include "neqlab/nn.hpp"
#include "neqlab/parallel.hpp"
#include "neqlab/rng.hpp"
#include "neqlab/types.hpp"

namespace neqlab {

/// Geometric perturbation scales sigma_1 > ... > sigma_L.
struct NoiseSchedule {
  double sigma_max = 1.0;
  double sigma_min = 0.01;
  int levels = 10;
  std::vector<double> sigmas;

  /// Constant ratio sigma_i / sigma_{i+1}.
  double ratio() const { return std::pow(sigma_max / sigma_min, 1.0 / (levels - 1)); }
};

inline NoiseSchedule make_schedule(double sigma_max, double sigma_min, int levels) {
  if (!(sigma_min > 0.0) || !(sigma_max > sigma_min)) throw ConfigError("schedule: need sigma_max > sigma_min > 0");
  if (levels < 2) throw ConfigError("schedule: need at least 2 levels");
  NoiseSchedule s{sigma_max, sigma_min, levels, {}};
  const double log_ratio = std::log(sigma_min / sigma_max);
  for (int i = 0; i < levels; ++i) s.sigmas.push_back(sigma_max * std::exp(log_ratio * i / (levels - 1)));
  s.sigmas.front() = sigma_max;
  s.sigmas.back() = sigma_min;
  return s;
}

inline void to_json(nlohmann::json& j, const NoiseSchedule& s) {
  j = nlohmann::json{{"sigma_max", s.sigma_max}, {"sigma_min", s.sigma_min}, {"levels", s.levels}};
}

inline void from_json(const nlohmann::json& j, NoiseSchedule& s) {
  s = make_schedule(j.at("sigma_max").get<double>(), j.at("sigma_min").get<double>(), j.at("levels").get<int>());
}

/// How sigma enters the net. `ratio` feeds sigma / sigma_max; `log_standardized`
/// feeds log sigma standardized over the schedule levels. Under the sigma^2
/// loss weighting the small levels carry little gradient, and the linear
/// feature lets them share the large levels' fit instead of extrapolating.
enum class SigmaConditioning { ratio, log_standardized };

inline std::string to_string(SigmaConditioning c) {
  return c == SigmaConditioning::ratio ? "ratio" : "log_standardized";
}

inline SigmaConditioning sigma_conditioning_from_string(const std::string& name) {
  if (name == "ratio") return SigmaConditioning::ratio;
  if (name == "log_standardized") return SigmaConditioning::log_standardized;
  throw ConfigError("unknown sigma conditioning: " + name);
}

/// Time- and noise-conditioned score s(x, t, sigma) ~ grad_x log p_sigma(x | t).
/// Net input is (x, y, t / t_scale, sigma feature); the net output is the
/// score itself.
struct ScoreModel {
  DenseNet net;
  NoiseSchedule schedule;
  double t_scale = 20.0;
  SigmaConditioning conditioning = SigmaConditioning::ratio;

  static ScoreModel create(std::vector<int> layer_sizes, Activation act, NoiseSchedule schedule, double t_scale,
                           RngStream& rng, SigmaConditioning conditioning = SigmaConditioning::ratio) {
    if (layer_sizes.front() != 4 || layer_sizes.back() != 2) throw ShapeError("score net must map 4 inputs to 2 outputs");
    return {DenseNet::init(std::move(layer_sizes), act, rng), std::move(schedule), t_scale, conditioning};
  }

  double sigma_feature(double sigma) const {
    if (conditioning == SigmaConditioning::ratio) return sigma / schedule.sigma_max;
    double mean = 0.0;
    for (double s : schedule.sigmas) mean += std::log(s);
    mean /= static_cast<double>(schedule.sigmas.size());
    double var = 0.0;
    for (double s : schedule.sigmas) var += (std::log(s) - mean) * (std::log(s) - mean);
    var /= static_cast<double>(schedule.sigmas.size());
    return (std::log(sigma) - mean) / std::sqrt(var);
  }

  /// Scores for the columns of `x` (2 x B); times and sigmas per column.
  Eigen::MatrixXd score(const Eigen::MatrixXd& x, std::span<const double> times, std::span<const double> sigmas,
                        ForwardTrace* trace = nullptr) const {
    return forward_batch(net, features(x, times, sigmas), trace);
  }

  /// Scores at one (t, sigma) for every column of x.
  Eigen::MatrixXd operator()(const Eigen::MatrixXd& x, double t, double sigma) const {
    Eigen::MatrixXd in(4, x.cols());
    in.topRows(2) = x;
    in.row(2).setConstant(t / t_scale);
    in.row(3).setConstant(sigma_feature(sigma));
    return forward_batch(net, in);
  }

  Eigen::MatrixXd features(const Eigen::MatrixXd& x, std::span<const double> times, std::span<const double> sigmas) const {
    if (x.rows() != 2 || static_cast<std::size_t>(x.cols()) != times.size() || times.size() != sigmas.size())
      throw ShapeError("score: points/times/sigmas size mismatch");
    Eigen::MatrixXd in(4, x.cols());
    in.topRows(2) = x;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      in(2, c) = times[static_cast<std::size_t>(c)] / t_scale;
      in(3, c) = sigma_feature(sigmas[static_cast<std::size_t>(c)]);
    }
    return in;
  }
};

/// Anything that maps a (2 x B) batch at one (t, sigma) to (2 x B) scores.
template <typename F>
concept BatchScore = requires(const F& f, const Eigen::MatrixXd& x, double t, double sigma) {
  { f(x, t, sigma) } -> std::convertible_to<Eigen::MatrixXd>;
};

// ---------------------------------------------------------------------------
// Denoising score matching

/// Perturbation draws for one minibatch: level i uniform, z ~ N(0, I),
/// noisy = x + sigma_i z. With `antithetic`, each odd item repeats the
/// previous item's point, time and level with -z; every item keeps its
/// marginal law, so the loss expectation is unchanged.
struct DsmDraws {
  Eigen::MatrixXd noisy;
  Eigen::MatrixXd z;
  std::vector<double> times;
  std::vector<double> sigmas;
};

inline DsmDraws dsm_draw(std::span<const Vec2> points, std::span<const double> times, const NoiseSchedule& schedule,
                         RngStream& rng, bool antithetic = false) {
  if (points.empty()) throw ShapeError("dsm: empty batch");
  if (points.size() != times.size()) throw ShapeError("dsm: points/times size mismatch");
  const auto n = static_cast<Eigen::Index>(points.size());
  DsmDraws d{Eigen::MatrixXd(2, n), Eigen::MatrixXd(2, n), {times.begin(), times.end()}, std::vector<double>(points.size())};
  for (Eigen::Index c = 0; c < n; ++c) {
    if (antithetic && c % 2 == 1) {
      const auto prev = static_cast<std::size_t>(c - 1);
      d.times[prev + 1] = d.times[prev];
      d.sigmas[prev + 1] = d.sigmas[prev];
      d.z.col(c) = -d.z.col(c - 1);
      d.noisy.col(c) = 2.0 * Eigen::Vector2d(points[prev].x, points[prev].y) - d.noisy.col(c - 1);
      continue;
    }
    const double sigma = schedule.sigmas[rng.below(schedule.sigmas.size())];
    const Vec2 z = rng.normal2();
    const Vec2 p = points[static_cast<std::size_t>(c)];
    d.sigmas[static_cast<std::size_t>(c)] = sigma;
    d.z.col(c) << z.x, z.y;
    d.noisy.col(c) << p.x + sigma * z.x, p.y + sigma * z.y;
  }
  return d;
}

/// mean_i sigma_i^2 || s_i + z_i / sigma_i ||^2, and optionally its gradient
/// with respect to the scores.
inline double dsm_loss_from_scores(const DsmDraws& d, const Eigen::MatrixXd& scores, Eigen::MatrixXd* d_scores = nullptr) {
  if (scores.rows() != 2 || scores.cols() != d.z.cols()) throw ShapeError("dsm: score shape mismatch");
  const auto n = static_cast<double>(scores.cols());
  double loss = 0.0;
  if (d_scores) d_scores->resize(2, scores.cols());
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    const double sigma = d.sigmas[static_cast<std::size_t>(c)];
    const Eigen::Vector2d resid = scores.col(c) + d.z.col(c) / sigma;
    loss += sigma * sigma * resid.squaredNorm();
    if (d_scores) d_scores->col(c) = (2.0 * sigma * sigma / n) * resid;
  }
  return loss / n;
}

struct DsmResult {
  double loss = 0.0;
  Gradients grads;
};

/// Noise-conditioned denoising score matching with lambda(sigma) = sigma^2.
inline DsmResult dsm_loss(const ScoreModel& model, std::span<const Vec2> points, std::span<const double> times,
                          RngStream& rng, bool antithetic = false) {
  const DsmDraws d = dsm_draw(points, times, model.schedule, rng, antithetic);
  ForwardTrace trace;
  const Eigen::MatrixXd scores = model.score(d.noisy, d.times, d.sigmas, &trace);
  Eigen::MatrixXd cot;
  DsmResult r{dsm_loss_from_scores(d, scores, &cot), Gradients::zeros_like(model.net)};
  if (!std::isfinite(r.loss)) throw NumericError("dsm_loss: non-finite loss");
  backward_batch(model.net, trace, cot, r.grads);
  return r;
}

struct ScoreTrainOptions {
  long steps = 20000;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double final_learning_rate = -1.0;  // cosine decay target; negative keeps the rate constant
  bool antithetic = false;            // paired +z / -z noise draws
  std::size_t log_every = 100;

  double rate_at(long step) const {
    if (final_learning_rate < 0.0 || steps < 2) return learning_rate;
    const double progress = static_cast<double>(step) / static_cast<double>(steps - 1);
    return final_learning_rate + 0.5 * (learning_rate - final_learning_rate) * (1.0 + std::cos(kPi * progress));
  }
};

struct ScoreFit {
  ScoreModel model;
  std::vector<std::pair<long, double>> loss_history;
};

/// Generic trainer: `draw(batch_points, batch_times, rng)` fills one minibatch.
template <typename DrawBatch>
ScoreFit train_score_with(ScoreModel model, DrawBatch&& draw, const ScoreTrainOptions& opts, RngStream& rng) {
  if (opts.steps < 1) throw ConfigError("train_score: steps must be >= 1");
  if (opts.batch_size < 1) throw ConfigError("train_score: batch_size must be >= 1");
  model.net.check_shapes();
  OptimizerState opt = OptimizerState::for_net(model.net, opts.learning_rate);
  std::vector<Vec2> points(opts.batch_size);
  std::vector<double> times(opts.batch_size);
  ScoreFit fit;
  for (long step = 0; step < opts.steps; ++step) {
    draw(std::span<Vec2>(points), std::span<double>(times), rng);
    DsmResult r = dsm_loss(model, points, times, rng, opts.antithetic);
    if (!std::isfinite(r.loss)) throw NumericError("train_score: loss diverged at step " + std::to_string(step));
    opt.learning_rate = opts.rate_at(step);
    optimizer_step(model.net, r.grads, opt);
    if (step % static_cast<long>(std::max<std::size_t>(opts.log_every, 1)) == 0 || step + 1 == opts.steps)
      fit.loss_history.emplace_back(step, r.loss);
  }
  fit.model = std::move(model);
  return fit;
}

/// Trains on uniformly drawn (trajectory, frame) pairs.
inline ScoreFit train_score(const TrajectorySet& train, ScoreModel model, const ScoreTrainOptions& opts, RngStream& rng) {
  if (train.n_traj() == 0) throw ShapeError("train_score: empty trajectory set");
  const std::size_t frames = train.n_frames();
  auto draw = [&](std::span<Vec2> pts, std::span<double> ts, RngStream& r) {
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const std::size_t i = r.below(train.n_traj());
      const std::size_t n = r.below(frames);
      pts[k] = train.at(i, n);
      ts[k] = train.times[n];
    }
  };
  return train_score_with(std::move(model), draw, opts, rng);
}

// ---------------------------------------------------------------------------
// Annealed Langevin sampling

struct LangevinOptions {
  double eps = 2e-5;          // step scale; level i uses alpha_i = eps sigma_i^2 / sigma_L^2
  int steps_per_level = 100;  // K
  bool final_denoise = false; // x += sigma_L^2 s(x, sigma_L) after the last level
  int workers = 1;
};

/// Chains per independently seeded chunk; fixed so results do not depend on workers.
inline constexpr std::size_t kChainChunk = 512;

template <BatchScore Score>
std::vector<Vec2> annealed_langevin_sample(const Score& score, const NoiseSchedule& schedule, double t_phys, std::size_t n,
                                           const LangevinOptions& opts, const RngStream& rng) {
  if (n < 1) throw ConfigError("annealed_langevin_sample: n must be >= 1");
  if (!(opts.eps > 0.0)) throw ConfigError("annealed_langevin_sample: eps must be > 0");
  if (opts.steps_per_level < 1) throw ConfigError("annealed_langevin_sample: steps_per_level must be >= 1");
  const double sigma_last = schedule.sigmas.back();
  std::vector<Vec2> out(n);
  const std::size_t chunks = (n + kChainChunk - 1) / kChainChunk;
  parallel_for(chunks, opts.workers, [&](std::size_t chunk) {
    RngStream local = rng.derive(chunk);
    const std::size_t begin = chunk * kChainChunk;
    const auto m = static_cast<Eigen::Index>(std::min(kChainChunk, n - begin));
    Eigen::MatrixXd x(2, m);
    for (Eigen::Index c = 0; c < m; ++c) {
      const Vec2 z = local.normal2();
      x.col(c) << schedule.sigmas.front() * z.x, schedule.sigmas.front() * z.y;
    }
    Eigen::MatrixXd noise(2, m);
    for (double sigma : schedule.sigmas) {
      const double alpha = opts.eps * sigma * sigma / (sigma_last * sigma_last);
      const double noise_scale = std::sqrt(alpha);
      for (int k = 0; k < opts.steps_per_level; ++k) {
        for (Eigen::Index c = 0; c < m; ++c) {
          const Vec2 z = local.normal2();
          noise(0, c) = z.x;
          noise(1, c) = z.y;
        }
        const Eigen::MatrixXd s = score(x, t_phys, sigma);
        x += (0.5 * alpha) * s + noise_scale * noise;
        if (!(x.array().abs() <= kDivergenceBound).all())
          throw DivergenceError("annealed_langevin_sample: chain left |coordinate| <= 10 at sigma=" + std::to_string(sigma));
      }
    }
    if (opts.final_denoise) x += (sigma_last * sigma_last) * score(x, t_phys, sigma_last);
    for (Eigen::Index c = 0; c < m; ++c) out[begin + static_cast<std::size_t>(c)] = {x(0, c), x(1, c)};
  });
  return out;
}

inline std::vector<Vec2> annealed_langevin_sample(const ScoreModel& model, double t_phys, std::size_t n,
                                                  const LangevinOptions& opts, const RngStream& rng) {
  return annealed_langevin_sample(model, model.schedule, t_phys, n, opts, rng);
}

// ---------------------------------------------------------------------------
// SDE descriptors

enum class Direction { forward, reverse };

/// dX = drift(X, t) dt + diffusion(t) dW. Reverse descriptors are integrated
/// from high t to low t: X_{t - h} = X_t - drift h + diffusion sqrt(h) z.
struct SdeDescriptor {
  std::function<Vec2(Vec2, double)> drift;
  std::function<double(double)> diffusion;
  Direction direction = Direction::forward;
};

/// Pointwise score at a given noise level.
using PointScore = std::function<Vec2(Vec2 p, double sigma)>;

/// Variance-exploding pair on t in [0, 1]: sigma(t) = sigma_min (sigma_max /
/// sigma_min)^t passes through every schedule level, and the diffusion
/// g(t) = sigma(t) sqrt(2 ln(sigma_max / sigma_min)) makes the accumulated
/// variance sigma(t)^2 - sigma_min^2.
struct VeSde {
  NoiseSchedule schedule;
  SdeDescriptor forward;
  std::optional<SdeDescriptor> reverse_descriptor;

  double noise_level(double t) const {
    return schedule.sigma_min * std::pow(schedule.sigma_max / schedule.sigma_min, t);
  }

  const SdeDescriptor& reverse() const {
    if (!reverse_descriptor) throw ConfigError("make_ve_sde: the reverse descriptor requires a score");
    return *reverse_descriptor;
  }
};

inline VeSde make_ve_sde(const NoiseSchedule& schedule, PointScore score = {}) {
  if (schedule.sigmas.size() < 2) throw ConfigError("make_ve_sde: invalid schedule");
  VeSde sde;
  sde.schedule = schedule;
  const double sigma_min = schedule.sigma_min;
  const double log_ratio = std::log(schedule.sigma_max / schedule.sigma_min);
  auto level = [=](double t) { return sigma_min * std::exp(log_ratio * t); };
  auto diffusion = [=](double t) { return level(t) * std::sqrt(2.0 * log_ratio); };
  sde.forward = {[](Vec2, double) { return Vec2{}; }, diffusion, Direction::forward};
  if (score) {
    sde.reverse_descriptor = SdeDescriptor{[=](Vec2 p, double t) {
                                             const double g = diffusion(t);
                                             return -(g * g) * score(p, level(t));
                                           },
                                           diffusion, Direction::reverse};
  }
  return sde;
}

inline nlohmann::json score_checkpoint_json(const ScoreModel& model) {
  nlohmann::json j = checkpoint_json(model.net);
  j["model"] = "noneq";
  j["schedule"] = model.schedule;
  j["t_scale"] = model.t_scale;
  j["sigma_conditioning"] = to_string(model.conditioning);
  return j;
}

inline ScoreModel score_model_from_checkpoint(const nlohmann::json& j) {
  ScoreModel m;
  m.net = net_from_checkpoint(j);
  m.schedule = j.at("schedule").get<NoiseSchedule>();
  m.t_scale = j.at("t_scale").get<double>();
  m.conditioning = sigma_conditioning_from_string(j.value("sigma_conditioning", std::string("ratio")));
  if (m.net.input_size() != 4 || m.net.output_size() != 2) throw ShapeError("score checkpoint: net must be 4 -> 2");
  return m;
}

}  // namespace neqlab
