#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "otmf/meanflow.hpp"

namespace otmf::config {

/// Parse failure with the 1-based line it happened on (0 when the problem
/// is not tied to a line, e.g. a failed cross-field check).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

// Format: one `key = value` per line. `#` starts a comment, blank lines are
// ignored, keys may appear once. Unknown keys are errors. Every key is
// optional and falls back to the RunConfig default.
//
//   source, target              dataset name (gaussian, eight_gaussians, moons,
//                               scurve, checkerboard, file)
//   source_scale, target_scale  multiplier on generated points
//   source_path, target_path    CSV file for the `file` kind
//   coupling                    independent | exact | sinkhorn | lot_lr | lot_hr | sliced
//   sinkhorn_epsilon, sinkhorn_epsilon_relative (true/false),
//   sinkhorn_max_iters, sinkhorn_tol
//   lot_rank (0 = ceil(sqrt(batch))), lot_pivot (kmeans | subsample)
//   sliced_projections, sliced_aggregation (min | expect | temp),
//   sliced_temperature
//   batch_size, iterations, lr, adam_beta1, adam_beta2, adam_eps
//   grad_clip (0 = off)
//   ema_decay, ema_period, ema_warmup (true/false)
//   loss_weighting (uniform | adaptive), adaptive_power, adaptive_c
//   time_sampler (uniform | logit_normal | constant), time_p_mean,
//   time_p_std, time_constant, equal_time_fraction
//   mode (meanflow | cfm), seed
//   hidden_width, hidden_layers, activation (tanh | silu | relu),
//   time_embed_dim, time_embed_max_freq
//   log_every, eval_every, eval_n, eval_reps

/// `source` names the input in error messages.
meanflow::RunConfig parse(const std::string& text, const std::string& source = "<config>");
meanflow::RunConfig load(const std::filesystem::path& path);

/// Every key, one per line, in a fixed order. parse(to_text(c)) == c.
std::string to_text(const meanflow::RunConfig& c);

}  // namespace otmf::config
