#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "otmf/common.hpp"

namespace otmf::nn {

enum class Activation { tanh, silu, relu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

/// Sinusoidal embedding of a scalar time: [sin(w_k s)..., cos(w_k s)...]
/// with geometrically spaced, strictly increasing frequencies w_k.
struct TimeEmbedding {
  int dim = 0;
  std::vector<double> frequencies;

  static TimeEmbedding geometric(int dim, double min_freq = 1.0,
                                 double max_freq = 32.0);

  void embed(double s, double* out) const;
  /// d/ds of embed(s).
  void embed_derivative(double s, double* out) const;
};

struct MlpShape {
  int data_dim = 2;
  int hidden_width = 128;
  int hidden_layers = 3;
  Activation activation = Activation::tanh;
  int time_embed_dim = 32;
  double time_embed_max_freq = 32.0;  // frequencies run from 1 to this
};

/// Weights of u(x, t, r). The input vector is [x; emb(t); emb(t - r)] and the
/// output has the data dimension. The last layer is linear.
struct MlpParams {
  std::vector<Matrix> weights;  // layer l: out_l x in_l
  std::vector<Vector> biases;
  Activation activation = Activation::tanh;
  TimeEmbedding time_embedding;
  int data_dim = 0;

  int input_dim() const { return data_dim + 2 * time_embedding.dim; }
  int output_dim() const { return data_dim; }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;

  /// Throws std::invalid_argument on shape or finiteness violations.
  void validate() const;
  bool same_shape(const MlpParams& other) const;
};

MlpParams init_mlp(const MlpShape& shape, Rng& rng);
/// Same shape as `like`, every weight and bias zero.
MlpParams zeros_like(const MlpParams& like);

std::vector<double> flatten(const MlpParams& p);
void unflatten(std::span<const double> flat, MlpParams& p);

// ---------------------------------------------------------------------------
// Evaluation. Batches are column-major: x is d x B, one column per sample.

Vector forward(const MlpParams& p, const Vector& x, double t, double r);
Matrix forward_batch(const MlpParams& p, const Matrix& x,
                     std::span<const double> t, std::span<const double> r);

/// Value and tangent pair produced by forward-mode propagation.
struct DualTensor {
  Matrix value;
  Matrix tangent;
};

/// Directional derivative of u along (dx, dt, dr), propagated as dual numbers.
DualTensor jvp(const MlpParams& p, const Vector& x, double t, double r,
               const Vector& dx, double dt, double dr);
DualTensor jvp_batch(const MlpParams& p, const Matrix& x,
                     std::span<const double> t, std::span<const double> r,
                     const Matrix& dx, std::span<const double> dt,
                     std::span<const double> dr);

struct LossGradient {
  double loss = 0.0;
  MlpParams grad;
};

/// Gradient of mean_b w_b * ||u(x_b, t_b, r_b) - target_b||^2. Targets are
/// constants. `weights` may be empty (uniform).
LossGradient loss_and_gradient(const MlpParams& p, const Matrix& x,
                               std::span<const double> t,
                               std::span<const double> r,
                               const Matrix& targets,
                               std::span<const double> weights = {});

// ---------------------------------------------------------------------------
// Optimisation.

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  MlpParams m;
  MlpParams v;
  long step = 0;

  static AdamState zeros_for(const MlpParams& p);
};

/// Bias-corrected Adam. Throws std::domain_error on a non-finite gradient
/// before touching params or state.
void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state,
               const AdamConfig& cfg);

/// shadow <- decay * shadow + (1 - decay) * live
void ema_update(MlpParams& shadow, const MlpParams& live, double decay);

}  // namespace otmf::nn
