#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "neqlab/evaluation.hpp"
#include "neqlab/langevin.hpp"
#include "neqlab/nn.hpp"
#include "neqlab/rng.hpp"

namespace neqlab {

/// Per-time-slice Boltzmann energies of the empirical occupancy. Energies of
/// unoccupied bins are NaN; within a slice the lowest occupied energy is 0.
struct EnergySliceTable {
  Grid2D grid;
  double beta = 10.0;
  std::vector<double> time_slices;
  std::vector<std::vector<double>> energies;
  std::vector<std::vector<std::int64_t>> occupancy;

  std::size_t n_slices() const { return time_slices.size(); }

  std::size_t n_occupied() const {
    std::size_t n = 0;
    for (const auto& slice : occupancy)
      for (std::int64_t c : slice) n += c > 0 ? 1 : 0;
    return n;
  }
};

/// Slices are consecutive windows [k w, (k+1) w) over the frame times; the
/// slice time is the mean time of its frames. E = -(1/beta) ln p_hat, shifted
/// so the most occupied bin sits at 0.
inline EnergySliceTable distill_energy(const TrajectorySet& train, const Grid2D& grid, double slice_width) {
  grid.validate();
  const double dt = train.config.dt;
  if (!(slice_width >= dt - 1e-12)) throw ConfigError("distill_energy: slice_width must be >= dt");
  if (train.n_traj() == 0) throw ShapeError("distill_energy: empty trajectory set");

  std::vector<std::vector<std::size_t>> slice_frames;
  for (std::size_t n = 0; n < train.times.size(); ++n) {
    const auto k = static_cast<std::size_t>(std::floor(train.times[n] / slice_width + 1e-9));
    if (k >= slice_frames.size()) slice_frames.resize(k + 1);
    slice_frames[k].push_back(n);
  }

  EnergySliceTable table;
  table.grid = grid;
  table.beta = train.config.beta;
  for (std::size_t k = 0; k < slice_frames.size(); ++k) {
    const auto& frames = slice_frames[k];
    if (frames.empty()) throw ShapeError("distill_energy: slice " + std::to_string(k) + " contains no frames");
    double t_sum = 0.0;
    for (std::size_t n : frames) t_sum += train.times[n];
    std::vector<std::int64_t> counts(grid.size(), 0);
    for (std::size_t i = 0; i < train.n_traj(); ++i)
      for (std::size_t n : frames) ++counts[grid.index(train.at(i, n))];
    const std::int64_t max_count = *std::max_element(counts.begin(), counts.end());
    std::vector<double> energies(grid.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t b = 0; b < counts.size(); ++b) {
      if (counts[b] > 0)
        energies[b] = (std::log(static_cast<double>(max_count)) - std::log(static_cast<double>(counts[b]))) / table.beta;
    }
    table.time_slices.push_back(t_sum / static_cast<double>(frames.size()));
    table.energies.push_back(std::move(energies));
    table.occupancy.push_back(std::move(counts));
  }
  return table;
}

inline nlohmann::json table_json(const EnergySliceTable& table) {
  nlohmann::json energies = nlohmann::json::array();
  for (const auto& slice : table.energies) {
    nlohmann::json row = nlohmann::json::array();
    for (double e : slice) row.push_back(std::isnan(e) ? nlohmann::json(nullptr) : nlohmann::json(e));
    energies.push_back(std::move(row));
  }
  return {{"grid", table.grid},
          {"beta", table.beta},
          {"time_slices", table.time_slices},
          {"energies", energies},
          {"occupancy", table.occupancy}};
}

inline EnergySliceTable table_from_json(const nlohmann::json& j) {
  EnergySliceTable table;
  table.grid = j.at("grid").get<Grid2D>();
  table.beta = j.value("beta", 10.0);
  table.time_slices = j.at("time_slices").get<std::vector<double>>();
  table.occupancy = j.at("occupancy").get<std::vector<std::vector<std::int64_t>>>();
  for (const auto& row : j.at("energies")) {
    std::vector<double> slice;
    for (const auto& e : row) slice.push_back(e.is_null() ? std::numeric_limits<double>::quiet_NaN() : e.get<double>());
    table.energies.push_back(std::move(slice));
  }
  if (table.energies.size() != table.time_slices.size() || table.occupancy.size() != table.time_slices.size())
    throw ShapeError("energy table: slice count mismatch");
  return table;
}

/// Neural energy V(t, x, y); the time input is t / t_scale.
struct EnergyField {
  DenseNet net;
  double t_scale = 20.0;

  /// Energies at every cell center of `grid` at time t.
  std::vector<double> on_grid(double t, const Grid2D& grid) const {
    Eigen::MatrixXd inputs(3, static_cast<Eigen::Index>(grid.size()));
    for (std::size_t b = 0; b < grid.size(); ++b) {
      const Vec2 c = grid.center(b);
      inputs.col(static_cast<Eigen::Index>(b)) << t / t_scale, c.x, c.y;
    }
    const Eigen::MatrixXd out = forward_batch(net, inputs);
    return {out.data(), out.data() + out.size()};
  }
};

struct EnergyTrainOptions {
  long steps = 20000;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  double t_scale = 20.0;
  std::size_t log_every = 100;
};

struct EnergyFit {
  EnergyField field;
  std::vector<std::pair<long, double>> loss_history;  // (step, minibatch loss)
  double final_loss = 0.0;                           // MSE over all occupied bins
};

/// Least-squares regression of net(t/t_scale, bin center) onto the occupied
/// table entries. Minibatches are drawn uniformly over occupied (slice, bin)
/// pairs from RngStream(seed, training:0).
inline EnergyFit train_energy_field(const EnergySliceTable& table, DenseNet net, const EnergyTrainOptions& opts = {}) {
  net.check_shapes();
  if (net.input_size() != 3 || net.output_size() != 1) throw ShapeError("energy net must map 3 inputs to 1 output");
  std::vector<double> inputs_flat;
  std::vector<double> targets;
  for (std::size_t k = 0; k < table.n_slices(); ++k) {
    for (std::size_t b = 0; b < table.grid.size(); ++b) {
      if (table.occupancy[k][b] <= 0) continue;
      const Vec2 c = table.grid.center(b);
      inputs_flat.insert(inputs_flat.end(), {table.time_slices[k] / opts.t_scale, c.x, c.y});
      targets.push_back(table.energies[k][b]);
    }
  }
  if (targets.empty()) throw ShapeError("train_energy_field: table has no occupied bins");
  if (opts.steps < 1) throw ConfigError("train_energy_field: steps must be >= 1");

  const Eigen::Map<const Eigen::MatrixXd> all_inputs(inputs_flat.data(), 3, static_cast<Eigen::Index>(targets.size()));
  const Eigen::Map<const Eigen::RowVectorXd> all_targets(targets.data(), static_cast<Eigen::Index>(targets.size()));

  RngStream rng(opts.seed, stream_id(StreamTag::training, 0));
  OptimizerState opt = OptimizerState::for_net(net, opts.learning_rate);
  Gradients grads = Gradients::zeros_like(net);
  const auto batch = static_cast<Eigen::Index>(std::min(opts.batch_size, targets.size()));
  Eigen::MatrixXd x(3, batch);
  Eigen::RowVectorXd y(batch);
  ForwardTrace trace;
  EnergyFit fit;
  for (long step = 0; step < opts.steps; ++step) {
    for (Eigen::Index c = 0; c < batch; ++c) {
      const auto idx = static_cast<Eigen::Index>(rng.below(targets.size()));
      x.col(c) = all_inputs.col(idx);
      y(c) = all_targets(idx);
    }
    const Eigen::MatrixXd pred = forward_batch(net, x, &trace);
    const Eigen::RowVectorXd resid = pred.row(0) - y;
    const double loss = resid.squaredNorm() / static_cast<double>(batch);
    if (!std::isfinite(loss)) throw NumericError("train_energy_field: non-finite loss at step " + std::to_string(step));
    grads.set_zero();
    backward_batch(net, trace, (2.0 / static_cast<double>(batch)) * resid, grads);
    optimizer_step(net, grads, opt);
    if (step % static_cast<long>(std::max<std::size_t>(opts.log_every, 1)) == 0 || step + 1 == opts.steps)
      fit.loss_history.emplace_back(step, loss);
  }

  double sse = 0.0;
  constexpr Eigen::Index kChunk = 4096;
  for (Eigen::Index start = 0; start < all_inputs.cols(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, all_inputs.cols() - start);
    const Eigen::MatrixXd pred = forward_batch(net, all_inputs.middleCols(start, len));
    sse += (pred.row(0) - all_targets.segment(start, len)).squaredNorm();
  }
  fit.final_loss = sse / static_cast<double>(targets.size());
  if (!std::isfinite(fit.final_loss)) throw NumericError("train_energy_field: non-finite final loss");
  fit.field = EnergyField{std::move(net), opts.t_scale};
  return fit;
}

/// Categorical probabilities p_b = exp(-beta E_b) / Z over the cells. The
/// minimum energy is subtracted first, so the result is shift-invariant.
inline std::vector<double> boltzmann_probabilities(std::span<const double> energies, double beta) {
  if (energies.empty()) throw ShapeError("boltzmann: no cells");
  double e_min = std::numeric_limits<double>::infinity();
  for (double e : energies) {
    if (!std::isfinite(e)) throw NumericError("boltzmann: non-finite energy; all weights would vanish");
    e_min = std::min(e_min, e);
  }
  std::vector<double> w(energies.size());
  double z = 0.0;
  for (std::size_t b = 0; b < energies.size(); ++b) {
    w[b] = std::exp(-beta * (energies[b] - e_min));
    z += w[b];
  }
  if (!(z > 0.0) || !std::isfinite(z)) throw NumericError("boltzmann: all weights are zero");
  for (double& v : w) v /= z;
  return w;
}

/// n draws: a cell from `probs`, then a uniform point inside that cell.
inline std::vector<Vec2> sample_cells(std::span<const double> probs, const Grid2D& grid, std::size_t n, RngStream& rng) {
  if (n < 1) throw ConfigError("boltzmann_sample: n must be >= 1");
  if (probs.size() != grid.size()) throw ShapeError("boltzmann_sample: probability/grid size mismatch");
  std::vector<double> cdf(probs.size());
  double acc = 0.0;
  for (std::size_t b = 0; b < probs.size(); ++b) cdf[b] = acc += probs[b];
  std::vector<Vec2> out(n);
  for (Vec2& p : out) {
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto cell = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    const Vec2 corner = grid.corner(cell);
    p = {corner.x + rng.uniform() * grid.width(0), corner.y + rng.uniform() * grid.width(1)};
  }
  return out;
}

inline std::vector<Vec2> boltzmann_sample(const EnergyField& field, double beta, double t, const Grid2D& grid,
                                          std::size_t n, RngStream& rng) {
  if (n < 1) throw ConfigError("boltzmann_sample: n must be >= 1");
  return sample_cells(boltzmann_probabilities(field.on_grid(t, grid), beta), grid, n, rng);
}

inline nlohmann::json energy_checkpoint_json(const EnergyField& field, double beta, const Grid2D& grid) {
  nlohmann::json j = checkpoint_json(field.net);
  j["model"] = "eq";
  j["t_scale"] = field.t_scale;
  j["beta"] = beta;
  j["grid"] = grid;
  return j;
}

inline EnergyField energy_field_from_checkpoint(const nlohmann::json& j) {
  EnergyField f{net_from_checkpoint(j), j.at("t_scale").get<double>()};
  if (f.net.input_size() != 3 || f.net.output_size() != 1) throw ShapeError("energy checkpoint: net must be 3 -> 1");
  return f;
}

}  // namespace neqlab
