#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "otmf/checkpoint.hpp"
#include "otmf/common.hpp"
#include "otmf/coupling.hpp"
#include "otmf/datasets.hpp"
#include "otmf/nn.hpp"

namespace otmf::meanflow {

using data::PointBatch;

struct TimeSample {
  double t = 0.0;
  double r = 0.0;
};

enum class TimeSamplerKind { uniform, logit_normal, constant };

std::string to_string(TimeSamplerKind k);
TimeSamplerKind parse_time_sampler(const std::string& name);

struct TimeSamplerSpec {
  TimeSamplerKind kind = TimeSamplerKind::uniform;
  double p_mean = -0.4;  // logit-normal location
  double p_std = 1.0;    // logit-normal scale
  double constant = 0.0; // constant sampler: both draws equal this value
  /// Probability that r keeps its own draw. Otherwise r is set to t, so 0
  /// means r == t always.
  double equal_time_fraction = 0.75;

  void validate() const;
};

/// Two draws from the base law, r = min and t = max, then r <- t with
/// probability 1 - equal_time_fraction.
TimeSample sample_times(const TimeSamplerSpec& spec, Rng& rng);

struct Interpolant {
  Vector x;  // (1 - t) x0 + t x1
  Vector v;  // x1 - x0
};

Interpolant interpolate(const Vector& x0, const Vector& x1, double t);

/// Regression target for u(x_r, t, r), the average velocity over [r, t]
/// from a point x_r at time r:
///   v + (t - r) * d/dr u(x_r, t, r)   with d/dr along (dx = v, dt = 0, dr = 1).
/// Columns are samples. The result is a plain matrix, so no gradient flows
/// through it.
Matrix compute_u_target(const nn::MlpParams& params, const Matrix& x_r,
                        std::span<const double> t, std::span<const double> r, const Matrix& v);

Vector compute_u_target(const nn::MlpParams& params, const Vector& x_r, double t, double r,
                        const Vector& v);

enum class LossWeighting { uniform, adaptive };

std::string to_string(LossWeighting w);
LossWeighting parse_loss_weighting(const std::string& name);

struct RunConfig {
  data::DatasetSpec source{data::DatasetKind::gaussian, 1.0, {}};
  data::DatasetSpec target{data::DatasetKind::eight_gaussians, 1.0, {}};
  coupling::CouplingSpec coupling;
  std::size_t batch_size = 256;
  long iterations = 10000;
  nn::AdamConfig adam;
  /// Rescale the gradient to this global L2 norm when larger; 0 disables.
  double grad_clip = 0.0;
  double ema_decay = 0.99;
  long ema_period = 16;
  /// Update k (1-based) uses min(ema_decay, (1 + k) / (10 + k)), so the
  /// random initialisation fades out early.
  bool ema_warmup = true;
  TimeSamplerSpec time;
  /// adaptive: sample b gets weight 1 / (||u_b - target_b||^2 + c)^power,
  /// held constant in the gradient.
  LossWeighting loss_weighting = LossWeighting::adaptive;
  double adaptive_power = 1.0;
  double adaptive_c = 1e-3;
  FlowMode mode = FlowMode::meanflow;
  std::uint64_t seed = 0;
  nn::MlpShape mlp;
  long log_every = 100;   // metrics row cadence (loss and ms/step windows)
  long eval_every = 0;    // W2 cadence; 0 evaluates once, after the last step
  std::size_t eval_n = 2000;
  int eval_reps = 3;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct TrainState {
  nn::MlpParams params;
  nn::MlpParams ema;
  nn::AdamState adam;
  long step = 0;
  Rng rng;
  RunConfig config;
};

/// Fresh parameters (ema = params) and an engine seeded from config.seed.
TrainState init_state(const RunConfig& config);

/// Raised when the loss or the update stops being finite. Carries the state
/// at the start of the failing step.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, nn::Checkpoint snapshot)
      : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
  const nn::Checkpoint& snapshot() const { return snapshot_; }

 private:
  nn::Checkpoint snapshot_;
};

/// Snapshot with the config written as key = value text.
nn::Checkpoint to_checkpoint(const TrainState& state);

/// Optional per-sample loss weights, given the paired source and target
/// points (one column each). Uniform when unset.
using SampleWeighting = std::function<std::vector<double>(const Matrix& x0, const Matrix& x1)>;

/// One optimisation step on already paired columns x0[:, b] -> x1[:, b]:
/// time draws, interpolation, target, loss, Adam, EMA. Returns the plain
/// (unweighted) mean squared error of the step.
double step_on_pairs(TrainState& state, const Matrix& x0, const Matrix& x1,
                     const SampleWeighting& weighting = {});

/// Draws both batches, couples them, samples pairs and calls step_on_pairs.
double train_step(TrainState& state, const data::Sampler& source, const data::Sampler& target,
                  const SampleWeighting& weighting = {});

struct MetricsRow {
  long step = 0;
  double loss = 0.0;        // mean over the window
  double ms_per_step = 0.0; // mean wall time per step over the window
  std::optional<double> w2_nfe1;
  std::optional<double> w2_nfe2;
};

struct TrainResult {
  TrainState state;
  std::vector<MetricsRow> metrics;
  double mean_ms_per_step = 0.0;  // over all steps
  double best_ms_per_step = 0.0;  // fastest log window; least exposed to host load
};

/// Runs config.iterations steps. W2 is measured on EMA parameters with an
/// engine separate from the training one, so evaluation does not change the
/// training trajectory.
TrainResult train(const RunConfig& config);

/// Header plus one line per row; missing W2 values are empty cells.
void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path);

}  // namespace otmf::meanflow
