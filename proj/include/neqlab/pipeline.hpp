#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "neqlab/eq_model.hpp"
#include "neqlab/evaluation.hpp"
#include "neqlab/langevin.hpp"
#include "neqlab/nn.hpp"
#include "neqlab/noneq_model.hpp"

namespace neqlab {

/// Everything the Figure-1b comparison depends on besides the data.
struct PipelineOptions {
  SystemConfig config;
  Grid2D grid;
  double slice_width = 0.1;

  std::vector<int> eq_layers{3, 64, 64, 1};
  Activation eq_activation = Activation::tanh;
  long eq_steps = 20000;
  double eq_learning_rate = 1e-3;
  std::size_t eq_batch = 256;

  std::vector<int> score_layers{4, 128, 128, 2};
  Activation score_activation = Activation::tanh;
  NoiseSchedule schedule = make_schedule(1.0, 0.01, 10);
  long score_steps = 30000;
  double score_learning_rate = 1e-3;
  double score_final_learning_rate = 1e-5;  // cosine decay target; negative keeps the rate constant
  std::size_t score_batch = 256;
  SigmaConditioning sigma_conditioning = SigmaConditioning::ratio;

  double langevin_eps = 2e-5;
  int steps_per_level = 100;

  std::vector<double> eval_times = default_eval_times();
  std::size_t n_per_time = 1000;
  int workers = 1;
};

/// Eval-time streams of the non-equilibrium column start here so the two
/// columns never share a stream.
inline constexpr std::uint64_t kNoneqEvalOffset = std::uint64_t{1} << 32;

inline nlohmann::json eq_training_json(const PipelineOptions& o) {
  return {{"layer_sizes", o.eq_layers},  {"activation", to_string(o.eq_activation)},
          {"steps", o.eq_steps},         {"learning_rate", o.eq_learning_rate},
          {"batch_size", o.eq_batch},    {"slice_width", o.slice_width}};
}

inline nlohmann::json noneq_training_json(const PipelineOptions& o) {
  return {{"layer_sizes", o.score_layers}, {"activation", to_string(o.score_activation)},
          {"steps", o.score_steps},        {"learning_rate", o.score_learning_rate},
          {"final_learning_rate", o.score_final_learning_rate},
          {"batch_size", o.score_batch},   {"sigma_conditioning", to_string(o.sigma_conditioning)},
          {"langevin_eps", o.langevin_eps}, {"steps_per_level", o.steps_per_level}};
}

struct EqResult {
  EnergySliceTable table;
  EnergyFit fit;
};

inline EqResult fit_equilibrium(const TrajectorySet& train, const PipelineOptions& o) {
  EqResult r{distill_energy(train, o.grid, o.slice_width), {}};
  RngStream init(o.config.seed, stream_id(StreamTag::init, 0));
  EnergyTrainOptions eo;
  eo.steps = o.eq_steps;
  eo.batch_size = o.eq_batch;
  eo.learning_rate = o.eq_learning_rate;
  eo.seed = o.config.seed;
  eo.t_scale = o.config.total_time;
  r.fit = train_energy_field(r.table, DenseNet::init(o.eq_layers, o.eq_activation, init), eo);
  return r;
}

inline ScoreFit fit_nonequilibrium(const TrajectorySet& train, const PipelineOptions& o) {
  RngStream init(o.config.seed, stream_id(StreamTag::init, 1));
  ScoreModel model = ScoreModel::create(o.score_layers, o.score_activation, o.schedule, o.config.total_time, init,
                                        o.sigma_conditioning);
  ScoreTrainOptions so;
  so.steps = o.score_steps;
  so.batch_size = o.score_batch;
  so.learning_rate = o.score_learning_rate;
  so.final_learning_rate = o.score_final_learning_rate;
  RngStream rng(o.config.seed, stream_id(StreamTag::training, 1));
  return train_score(train, std::move(model), so, rng);
}

inline TimeSampler eq_sampler(const EnergyField& field, double beta, const Grid2D& grid) {
  return [&field, beta, grid](double t, std::size_t n, RngStream& rng) {
    return boltzmann_sample(field, beta, t, grid, n, rng);
  };
}

inline LangevinOptions langevin_options(const PipelineOptions& o) {
  LangevinOptions lo;
  lo.eps = o.langevin_eps;
  lo.steps_per_level = o.steps_per_level;
  return lo;
}

inline TimeSampler noneq_sampler(const ScoreModel& model, const LangevinOptions& lo) {
  return [&model, lo](double t, std::size_t n, RngStream& rng) { return annealed_langevin_sample(model, t, n, lo, rng); };
}

inline JsdCurve evaluate_pipelines(const TrajectorySet& test, const EnergyField& field, const ScoreModel& model,
                                   const PipelineOptions& o) {
  JsdCurve c;
  c.times = o.eval_times;
  c.jsd_eq = jsd_column(test, eq_sampler(field, o.config.beta, o.grid), o.grid, o.eval_times, o.n_per_time,
                        o.slice_width, o.config.seed, 0, o.workers);
  c.jsd_noneq = jsd_column(test, noneq_sampler(model, langevin_options(o)), o.grid, o.eval_times, o.n_per_time,
                           o.slice_width, o.config.seed, kNoneqEvalOffset, o.workers);
  c.validate();
  return c;
}

inline nlohmann::json curve_summary(const JsdCurve& c) {
  return {{"mean_jsd_eq", c.mean_eq()},
          {"mean_jsd_noneq", c.mean_noneq()},
          {"fraction_times_noneq_lower", c.fraction_noneq_lower()}};
}

struct PipelineResult {
  TrajectorySet train;
  TrajectorySet test;
  EqResult eq;
  ScoreFit noneq;
  JsdCurve curve;
  std::map<std::string, double> timings;  // stage -> wall seconds
};

/// simulate -> split -> train both -> evaluate, in memory.
inline PipelineResult run_pipeline(const PipelineOptions& o) {
  using clock = std::chrono::steady_clock;
  PipelineResult r;
  auto mark = clock::now();
  auto lap = [&](const char* stage) {
    const auto now = clock::now();
    r.timings[stage] = std::chrono::duration<double>(now - mark).count();
    mark = now;
  };
  std::tie(r.train, r.test) = split_train_test(simulate_ensemble(o.config, o.workers));
  lap("simulate");
  r.eq = fit_equilibrium(r.train, o);
  lap("train_eq");
  r.noneq = fit_nonequilibrium(r.train, o);
  lap("train_noneq");
  r.curve = evaluate_pipelines(r.test, r.eq.fit.field, r.noneq.model, o);
  lap("evaluate");
  return r;
}

}  // namespace neqlab
