// neqlab: simulate, train, sample, evaluate and verify from the command line.
// Exit codes: 0 success, 1 runtime or check failure, 2 usage error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "neqlab/neqlab.hpp"

namespace fs = std::filesystem;
using namespace neqlab;

namespace {

struct Common {
  std::string config_path;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  int workers = 1;
};

struct SystemFlags {
  std::optional<int> s;
  std::optional<double> beta, dt, total_time;
  std::optional<std::int64_t> n_traj;
  std::optional<bool> radial_squared;
  std::vector<double> domain_lo, domain_hi;
};

struct GridFlags {
  std::vector<double> lo, hi;
  std::vector<int> bins;
  bool given() const { return !lo.empty() || !hi.empty() || !bins.empty(); }
  Grid2D apply(Grid2D g) const {
    if (!lo.empty()) g.lo = {lo[0], lo[1]};
    if (!hi.empty()) g.hi = {hi[0], hi[1]};
    if (!bins.empty()) g.bins = {bins[0], bins[1]};
    g.validate();
    return g;
  }
};

void add_grid_flags(CLI::App* cmd, GridFlags& g) {
  cmd->add_option("--grid-lo", g.lo, "grid lower corner x y")->expected(2);
  cmd->add_option("--grid-hi", g.hi, "grid upper corner x y")->expected(2);
  cmd->add_option("--bins", g.bins, "bins along x and y")->expected(2);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

fs::path output_dir(const Common& c) {
  const fs::path dir(c.out);
  if (!fs::is_directory(dir)) throw IoError("output directory does not exist: " + dir.string());
  return dir;
}

ExperimentManifest load_manifest(const fs::path& dir) {
  if (!fs::exists(dir / kManifestName)) throw IoError("no manifest in " + dir.string() + "; run simulate first");
  return read_manifest(dir);
}

ExperimentManifest load_or_new_manifest(const fs::path& dir, const SystemConfig& cfg) {
  if (fs::exists(dir / kManifestName)) return read_manifest(dir);
  ExperimentManifest m;
  m.config = cfg;
  return m;
}

SystemConfig base_config(const Common& c) {
  if (c.config_path.empty()) return SystemConfig{};
  try {
    return nlohmann::json::parse(detail::read_file(c.config_path)).get<SystemConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad config file " + c.config_path + ": " + e.what());
  }
}

SystemConfig resolve_config(const Common& c, const SystemFlags& f) {
  SystemConfig cfg = base_config(c);
  if (f.s) cfg.s = *f.s;
  if (f.beta) cfg.beta = *f.beta;
  if (f.dt) cfg.dt = *f.dt;
  if (f.total_time) cfg.total_time = *f.total_time;
  if (f.n_traj) cfg.n_traj = *f.n_traj;
  if (f.radial_squared) cfg.radial_squared = *f.radial_squared;
  if (!f.domain_lo.empty()) cfg.domain_lo = {f.domain_lo[0], f.domain_lo[1]};
  if (!f.domain_hi.empty()) cfg.domain_hi = {f.domain_hi[0], f.domain_hi[1]};
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

TrajectorySet load_trajectories(const fs::path& dir, const ExperimentManifest& m, const std::string& name) {
  const auto it = m.files.find(name);
  if (it == m.files.end()) throw IoError("manifest has no '" + name + "' trajectory file");
  const fs::path path = dir / it->second;
  if (path.extension() == ".bin") return read_trajectory_binary(path.string());
  return read_trajectory_csv(path.string(), m.config);
}

std::string loss_csv(const std::vector<std::pair<long, double>>& history) {
  std::string out = "step,loss\n";
  for (const auto& [step, loss] : history) {
    out += std::to_string(step);
    out.push_back(',');
    detail::append_double(out, loss);
    out.push_back('\n');
  }
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) { detail::write_file(path.string(), j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(detail::read_file(path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON " + path.string() + ": " + e.what());
  }
}

fs::path artifact(const fs::path& dir, const ExperimentManifest& m, const std::string& name) {
  const auto it = m.files.find(name);
  if (it == m.files.end()) throw IoError("manifest has no '" + name + "' artifact; run the producing command first");
  return dir / it->second;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  SystemFlags sys;
  std::string format = "csv";
};

int cmd_simulate(const Common& c, const SimulateArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = output_dir(c);
  const SystemConfig cfg = resolve_config(c, a.sys);
  auto [train, test] = split_train_test(simulate_ensemble(cfg, c.workers));
  ExperimentManifest m;
  m.config = cfg;
  const std::string ext = a.format == "binary" ? ".bin" : ".csv";
  for (const auto& [name, ts] : {std::pair<std::string, const TrajectorySet*>{"train", &train}, {"test", &test}}) {
    const std::string file = name + ext;
    if (a.format == "binary")
      write_trajectory_binary((dir / file).string(), *ts);
    else
      write_trajectory_csv((dir / file).string(), *ts);
    m.files[name] = file;
  }
  m.timings["simulate"] = seconds_since(start);
  write_manifest(dir, m);
  std::printf("simulated %lld trajectories (%lld train, %lld test), %lld frames each -> %s\n",
              static_cast<long long>(cfg.n_traj), static_cast<long long>(train.n_traj()),
              static_cast<long long>(test.n_traj()), static_cast<long long>(train.n_frames()), dir.string().c_str());
  return 0;
}

struct TrainArgs {
  std::string method;
  std::optional<long> steps;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::vector<int> hidden;
  std::string activation;
  std::optional<double> slice_width;
  GridFlags grid;
  std::optional<double> sigma_max, sigma_min;
  std::optional<int> levels;
  std::optional<double> final_lr;
  std::string sigma_conditioning;
};

int cmd_train(const Common& c, const TrainArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = output_dir(c);
  ExperimentManifest m = load_manifest(dir);
  PipelineOptions o;
  o.config = m.config;
  if (c.seed) o.config.seed = *c.seed;
  const TrajectorySet train = load_trajectories(dir, m, "train");

  if (a.method == "eq") {
    o.grid = a.grid.apply(o.grid);
    if (a.slice_width) o.slice_width = *a.slice_width;
    if (a.steps) o.eq_steps = *a.steps;
    if (a.lr) o.eq_learning_rate = *a.lr;
    if (a.batch) o.eq_batch = *a.batch;
    if (!a.hidden.empty()) {
      o.eq_layers = {3};
      o.eq_layers.insert(o.eq_layers.end(), a.hidden.begin(), a.hidden.end());
      o.eq_layers.push_back(1);
    }
    if (!a.activation.empty()) o.eq_activation = activation_from_string(a.activation);
    const EqResult r = fit_equilibrium(train, o);
    write_json(dir / "energy_table.json", table_json(r.table));
    write_json(dir / "eq.json", energy_checkpoint_json(r.fit.field, o.config.beta, o.grid));
    detail::write_file((dir / "loss_eq.csv").string(), loss_csv(r.fit.loss_history));
    m.files["energy_table"] = "energy_table.json";
    m.files["eq_checkpoint"] = "eq.json";
    m.files["eq_loss"] = "loss_eq.csv";
    m.grid = o.grid;
    auto section = eq_training_json(o);
    section["seed"] = o.config.seed;
    section["final_mse"] = r.fit.final_loss;
    m.training["eq"] = section;
    m.timings["train_eq"] = seconds_since(start);
    write_manifest(dir, m);
    std::printf("eq: %zu occupied (slice, bin) targets, final mse %.6g\n", r.table.n_occupied(), r.fit.final_loss);
    return 0;
  }

  if (a.sigma_max || a.sigma_min || a.levels)
    o.schedule = make_schedule(a.sigma_max.value_or(o.schedule.sigma_max), a.sigma_min.value_or(o.schedule.sigma_min),
                               a.levels.value_or(o.schedule.levels));
  if (a.steps) o.score_steps = *a.steps;
  if (a.lr) o.score_learning_rate = *a.lr;
  if (a.final_lr) o.score_final_learning_rate = *a.final_lr;
  if (!a.sigma_conditioning.empty()) o.sigma_conditioning = sigma_conditioning_from_string(a.sigma_conditioning);
  if (a.batch) o.score_batch = *a.batch;
  if (!a.hidden.empty()) {
    o.score_layers = {4};
    o.score_layers.insert(o.score_layers.end(), a.hidden.begin(), a.hidden.end());
    o.score_layers.push_back(2);
  }
  if (!a.activation.empty()) o.score_activation = activation_from_string(a.activation);
  const ScoreFit fit = fit_nonequilibrium(train, o);
  write_json(dir / "noneq.json", score_checkpoint_json(fit.model));
  detail::write_file((dir / "loss_noneq.csv").string(), loss_csv(fit.loss_history));
  m.files["noneq_checkpoint"] = "noneq.json";
  m.files["noneq_loss"] = "loss_noneq.csv";
  m.schedule = o.schedule;
  auto section = noneq_training_json(o);
  section["seed"] = o.config.seed;
  m.training["noneq"] = section;
  m.timings["train_noneq"] = seconds_since(start);
  write_manifest(dir, m);
  std::printf("noneq: %ld steps, last minibatch loss %.6g\n", o.score_steps, fit.loss_history.back().second);
  return 0;
}

struct SamplerFlags {
  std::optional<double> eps;
  std::optional<int> steps_per_level;
};

LangevinOptions sampler_options(const SamplerFlags& f, int workers) {
  PipelineOptions o;
  LangevinOptions lo = langevin_options(o);
  if (f.eps) lo.eps = *f.eps;
  if (f.steps_per_level) lo.steps_per_level = *f.steps_per_level;
  lo.workers = workers;
  return lo;
}

struct SampleArgs {
  std::string method;
  std::vector<double> times;
  std::size_t n = 1000;
  SamplerFlags sampler;
};

int cmd_sample(const Common& c, const SampleArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = output_dir(c);
  ExperimentManifest m = load_manifest(dir);
  const std::uint64_t seed = c.seed.value_or(m.config.seed);
  std::string out = "t,x,y\n";
  auto emit = [&](double t, const std::vector<Vec2>& pts) {
    for (const Vec2& p : pts) {
      detail::append_double(out, t);
      out.push_back(',');
      detail::append_double(out, p.x);
      out.push_back(',');
      detail::append_double(out, p.y);
      out.push_back('\n');
    }
  };
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    if (a.times[k] < 0.0 || a.times[k] > m.config.total_time) throw ConfigError("sample time outside [0, T]");
    RngStream rng(seed, stream_id(StreamTag::sampling, k));
    if (a.method == "eq") {
      const auto j = read_json(artifact(dir, m, "eq_checkpoint"));
      const EnergyField field = energy_field_from_checkpoint(j);
      emit(a.times[k], boltzmann_sample(field, j.at("beta").get<double>(), a.times[k], j.at("grid").get<Grid2D>(), a.n, rng));
    } else {
      const ScoreModel model = score_model_from_checkpoint(read_json(artifact(dir, m, "noneq_checkpoint")));
      emit(a.times[k], annealed_langevin_sample(model, a.times[k], a.n, sampler_options(a.sampler, c.workers), rng));
    }
  }
  const std::string file = "samples_" + a.method + ".csv";
  detail::write_file((dir / file).string(), out);
  m.files["samples_" + a.method] = file;
  m.timings["sample_" + a.method] = seconds_since(start);
  write_manifest(dir, m);
  std::printf("wrote %zu samples to %s\n", a.n * a.times.size(), (dir / file).string().c_str());
  return 0;
}

struct EvaluateArgs {
  GridFlags grid;
  std::size_t n_per_time = 1000;
  std::vector<double> eval_times;
  std::size_t n_eval_times = 40;
  std::optional<double> slice_width;
  SamplerFlags sampler;
};

int cmd_evaluate(const Common& c, const EvaluateArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = output_dir(c);
  ExperimentManifest m = load_manifest(dir);
  const auto eq_json = read_json(artifact(dir, m, "eq_checkpoint"));
  const EnergyField field = energy_field_from_checkpoint(eq_json);
  const ScoreModel model = score_model_from_checkpoint(read_json(artifact(dir, m, "noneq_checkpoint")));
  const TrajectorySet test = load_trajectories(dir, m, "test");

  PipelineOptions o;
  o.config = m.config;
  if (c.seed) o.config.seed = *c.seed;
  o.config.beta = eq_json.at("beta").get<double>();
  o.grid = eq_json.at("grid").get<Grid2D>();
  if (a.grid.given() && a.grid.apply(o.grid) != o.grid)
    throw ConfigError("evaluation grid differs from the grid the equilibrium model was distilled on");
  if (m.training.contains("eq")) o.slice_width = m.training["eq"].value("slice_width", o.slice_width);
  if (a.slice_width) o.slice_width = *a.slice_width;
  o.eval_times = a.eval_times.empty() ? default_eval_times(a.n_eval_times) : a.eval_times;
  o.n_per_time = a.n_per_time;
  o.workers = c.workers;
  const LangevinOptions lo = sampler_options(a.sampler, 1);
  o.langevin_eps = lo.eps;
  o.steps_per_level = lo.steps_per_level;

  const JsdCurve curve = evaluate_pipelines(test, field, model, o);
  detail::write_file((dir / "jsd_curve.csv").string(), curve_csv(curve));
  write_json(dir / "jsd_curve.json", {{"grid", o.grid},
                                      {"n_per_time", o.n_per_time},
                                      {"log_base", "e"},
                                      {"seed", o.config.seed},
                                      {"slice_width", o.slice_width},
                                      {"langevin_eps", o.langevin_eps},
                                      {"steps_per_level", o.steps_per_level}});
  const auto summary = curve_summary(curve);
  write_json(dir / "summary.json", summary);
  m.files["jsd_curve"] = "jsd_curve.csv";
  m.files["jsd_curve_meta"] = "jsd_curve.json";
  m.files["summary"] = "summary.json";
  m.grid = o.grid;
  m.timings["evaluate"] = seconds_since(start);
  write_manifest(dir, m);
  std::printf("mean JSD eq %.4f, noneq %.4f, noneq lower at %.0f%% of %zu times\n", curve.mean_eq(),
              curve.mean_noneq(), 100.0 * curve.fraction_noneq_lower(), curve.times.size());
  return 0;
}

struct FpeArgs {
  std::string check_case;
  std::optional<std::size_t> n;
};

int cmd_fpe_check(const Common& c, const FpeArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = output_dir(c);
  SystemConfig cfg = base_config(c);
  if (c.seed) cfg.seed = *c.seed;
  ExperimentManifest m = load_or_new_manifest(dir, cfg);
  const std::size_t n = a.n.value_or(100000);
  CheckReport r;
  if (a.check_case == "diffusion")
    r = diffusion_case(cfg.seed, 1.0, 1.0, n);
  else if (a.check_case == "reverse")
    r = reverse_case(cfg.seed, n);
  else if (a.check_case == "independence")
    r = independence_case(cfg.seed, n);
  else
    r = mc_vs_pde_case(cfg.seed, 0.5, n);
  r.parameters["seed"] = cfg.seed;
  const std::string file = "fpe_" + a.check_case + ".json";
  write_json(dir / file, r);
  m.files["fpe_" + a.check_case] = file;
  m.timings["fpe_" + a.check_case] = seconds_since(start);
  write_manifest(dir, m);
  std::printf("%s: statistic %.6g, threshold %.6g -> %s\n", r.check_name.c_str(), r.statistic, r.threshold,
              r.pass ? "pass" : "FAIL");
  return r.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equilibrium vs non-equilibrium generative modelling of a rotating multi-well system"};
  app.set_version_flag("--version", std::string(NEQLAB_VERSION));
  app.require_subcommand(1);

  Common common;
  app.add_option("--config", common.config_path, "SystemConfig JSON file")->check(CLI::ExistingFile);
  app.add_option("--out", common.out, "experiment directory")->envname("NEQLAB_OUT");
  app.add_option("--seed", common.seed, "master seed, overrides the config everywhere");
  app.add_option("--workers", common.workers, "worker threads")->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "simulate the ensemble and write train/test trajectories");
  simulate->add_option("--s", sim.sys.s, "number of wells");
  simulate->add_option("--beta", sim.sys.beta, "inverse temperature");
  simulate->add_option("--dt", sim.sys.dt, "time step");
  simulate->add_option("--total-time", sim.sys.total_time, "horizon T");
  simulate->add_option("--n-traj", sim.sys.n_traj, "number of trajectories (even)");
  simulate->add_option("--radial-squared", sim.sys.radial_squared, "square the radial term (true|false)");
  simulate->add_option("--domain-lo", sim.sys.domain_lo, "initial box lower corner")->expected(2);
  simulate->add_option("--domain-hi", sim.sys.domain_hi, "initial box upper corner")->expected(2);
  simulate->add_option("--format", sim.format, "trajectory file format")->check(CLI::IsMember({"csv", "binary"}));

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train the equilibrium or non-equilibrium model");
  train->add_option("--method", tr.method, "eq or noneq")->required()->check(CLI::IsMember({"eq", "noneq"}));
  train->add_option("--steps", tr.steps, "optimizer steps")->check(CLI::PositiveNumber);
  train->add_option("--lr", tr.lr, "Adam learning rate");
  train->add_option("--batch", tr.batch, "minibatch size")->check(CLI::PositiveNumber);
  train->add_option("--hidden", tr.hidden, "hidden layer widths");
  train->add_option("--activation", tr.activation, "hidden activation")
      ->check(CLI::IsMember({"tanh", "sigmoid_linear", "smooth_gated"}));
  train->add_option("--slice-width", tr.slice_width, "eq: time window pooled per energy slice");
  add_grid_flags(train, tr.grid);
  train->add_option("--sigma-max", tr.sigma_max, "noneq: largest noise scale");
  train->add_option("--sigma-min", tr.sigma_min, "noneq: smallest noise scale");
  train->add_option("--levels", tr.levels, "noneq: number of noise levels");
  train->add_option("--final-lr", tr.final_lr, "noneq: cosine-decay target rate (negative: constant)");
  train->add_option("--sigma-conditioning", tr.sigma_conditioning, "noneq: sigma input feature")
      ->check(CLI::IsMember({"ratio", "log_standardized"}));

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "draw samples from a trained model");
  sample->add_option("--method", sa.method, "eq or noneq")->required()->check(CLI::IsMember({"eq", "noneq"}));
  sample->add_option("--t", sa.times, "physical times")->required();
  sample->add_option("--n", sa.n, "samples per time")->check(CLI::PositiveNumber);
  sample->add_option("--eps", sa.sampler.eps, "Langevin step scale");
  sample->add_option("--steps-per-level", sa.sampler.steps_per_level, "Langevin steps per noise level");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "JSD curve of both models against the test set");
  add_grid_flags(evaluate, ev.grid);
  evaluate->add_option("--n-per-time", ev.n_per_time, "generated samples per eval time")->check(CLI::PositiveNumber);
  evaluate->add_option("--eval-times", ev.eval_times, "explicit eval times");
  evaluate->add_option("--n-eval-times", ev.n_eval_times, "uniform eval times in [0.5, 19.5]")->check(CLI::PositiveNumber);
  evaluate->add_option("--slice-width", ev.slice_width, "reference window width");
  evaluate->add_option("--eps", ev.sampler.eps, "Langevin step scale");
  evaluate->add_option("--steps-per-level", ev.sampler.steps_per_level, "Langevin steps per noise level");

  FpeArgs fa;
  auto* fpe = app.add_subcommand("fpe-check", "run a Fokker-Planck verification case");
  fpe->add_option("--case", fa.check_case, "check to run")
      ->required()
      ->check(CLI::IsMember({"diffusion", "reverse", "independence", "mc-vs-pde"}));
  fpe->add_option("--n", fa.n, "particles")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*simulate) return cmd_simulate(common, sim);
    if (*train) return cmd_train(common, tr);
    if (*sample) return cmd_sample(common, sa);
    if (*evaluate) return cmd_evaluate(common, ev);
    if (*fpe) return cmd_fpe_check(common, fa);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "neqlab: error: %s\n", e.what());
    return 1;
  }
  return 2;
}
