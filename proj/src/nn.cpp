#include "otmf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace otmf::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::silu: return "silu";
    case Activation::relu: return "relu";
  }
  return "tanh";
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "silu") return Activation::silu;
  if (name == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

TimeEmbedding TimeEmbedding::geometric(int dim, double min_freq,
                                       double max_freq) {
  if (dim <= 0 || dim % 2 != 0) {
    throw std::invalid_argument("time embedding dim must be positive and even");
  }
  if (!(min_freq > 0.0) || !(max_freq > min_freq)) {
    throw std::invalid_argument("time embedding needs 0 < min_freq < max_freq");
  }
  TimeEmbedding e;
  e.dim = dim;
  const int half = dim / 2;
  e.frequencies.resize(half);
  for (int k = 0; k < half; ++k) {
    const double frac = half == 1 ? 0.0 : double(k) / double(half - 1);
    e.frequencies[k] = min_freq * std::pow(max_freq / min_freq, frac);
  }
  return e;
}

void TimeEmbedding::embed(double s, double* out) const {
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    out[k] = std::sin(frequencies[k] * s);
    out[half + k] = std::cos(frequencies[k] * s);
  }
}

void TimeEmbedding::embed_derivative(double s, double* out) const {
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const double w = frequencies[k];
    out[k] = w * std::cos(w * s);
    out[half + k] = -w * std::sin(w * s);
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += weights[l].size() + biases[l].size();
  }
  return n;
}

void MlpParams::validate() const {
  if (weights.empty() || weights.size() != biases.size()) {
    throw std::invalid_argument("mlp: weight/bias layer count mismatch");
  }
  if (data_dim <= 0) throw std::invalid_argument("mlp: data_dim must be >= 1");
  if (time_embedding.dim <= 0 ||
      time_embedding.frequencies.size() * 2 !=
          static_cast<std::size_t>(time_embedding.dim)) {
    throw std::invalid_argument("mlp: malformed time embedding");
  }
  Eigen::Index in = input_dim();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].cols() != in || biases[l].size() != weights[l].rows()) {
      throw std::invalid_argument("mlp: layer " + std::to_string(l) +
                                  " shape does not compose");
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw std::invalid_argument("mlp: non-finite parameter in layer " +
                                  std::to_string(l));
    }
    in = weights[l].rows();
  }
  if (in != output_dim()) {
    throw std::invalid_argument("mlp: last layer width != data_dim");
  }
}

bool MlpParams::same_shape(const MlpParams& other) const {
  if (weights.size() != other.weights.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() ||
        weights[l].cols() != other.weights[l].cols() ||
        biases[l].size() != other.biases[l].size()) {
      return false;
    }
  }
  return true;
}

MlpParams init_mlp(const MlpShape& shape, Rng& rng) {
  if (shape.data_dim < 1 || shape.hidden_width < 1 || shape.hidden_layers < 0) {
    throw std::invalid_argument("mlp: invalid shape");
  }
  MlpParams p;
  p.activation = shape.activation;
  p.data_dim = shape.data_dim;
  p.time_embedding = TimeEmbedding::geometric(shape.time_embed_dim, 1.0, shape.time_embed_max_freq);

  std::vector<int> widths;
  widths.push_back(p.input_dim());
  for (int i = 0; i < shape.hidden_layers; ++i) widths.push_back(shape.hidden_width);
  widths.push_back(shape.data_dim);

  // Fan-in uniform, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), weights and biases.
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l];
    const int out = widths[l + 1];
    const double bound = 1.0 / std::sqrt(double(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(out, in);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    }
    Vector b(out);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = u(rng);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

MlpParams zeros_like(const MlpParams& like) {
  MlpParams z = like;
  for (auto& w : z.weights) w.setZero();
  for (auto& b : z.biases) b.setZero();
  return z;
}

std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> flat;
  flat.reserve(p.parameter_count());
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    flat.insert(flat.end(), p.weights[l].data(),
                p.weights[l].data() + p.weights[l].size());
    flat.insert(flat.end(), p.biases[l].data(),
                p.biases[l].data() + p.biases[l].size());
  }
  return flat;
}

void unflatten(std::span<const double> flat, MlpParams& p) {
  if (flat.size() != p.parameter_count()) {
    throw std::invalid_argument("unflatten: expected " +
                                std::to_string(p.parameter_count()) +
                                " values, got " + std::to_string(flat.size()));
  }
  std::size_t off = 0;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    std::copy_n(flat.data() + off, p.weights[l].size(), p.weights[l].data());
    off += p.weights[l].size();
    std::copy_n(flat.data() + off, p.biases[l].size(), p.biases[l].data());
    off += p.biases[l].size();
  }
}

namespace {

void check_batch(const MlpParams& p, const Matrix& x, std::span<const double> t,
                 std::span<const double> r) {
  if (x.rows() != p.data_dim) {
    throw std::invalid_argument("mlp: input has " + std::to_string(x.rows()) +
                                " rows, expected " + std::to_string(p.data_dim));
  }
  const auto n = static_cast<std::size_t>(x.cols());
  if (t.size() != n || r.size() != n) {
    throw std::invalid_argument("mlp: time arrays do not match batch size");
  }
  if (!x.allFinite()) throw std::invalid_argument("mlp: non-finite input point");
  for (std::size_t b = 0; b < n; ++b) {
    if (!std::isfinite(t[b]) || !std::isfinite(r[b])) {
      throw std::invalid_argument("mlp: non-finite time");
    }
    if (r[b] > t[b]) {
      throw std::invalid_argument("mlp: requires r <= t (got r=" +
                                  std::to_string(r[b]) + ", t=" +
                                  std::to_string(t[b]) + ")");
    }
  }
}

Matrix assemble_input(const MlpParams& p, const Matrix& x,
                      std::span<const double> t, std::span<const double> r) {
  const int d = p.data_dim;
  const int e = p.time_embedding.dim;
  Matrix z(p.input_dim(), x.cols());
  z.topRows(d) = x;
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    double* col = z.col(b).data();
    p.time_embedding.embed(t[b], col + d);
    p.time_embedding.embed(t[b] - r[b], col + d + e);
  }
  return z;
}

// Tangent of the assembled input along (dx, dt, dr). The second embedding
// sees h = t - r, so dh = dt - dr.
Matrix assemble_tangent(const MlpParams& p, const Matrix& dx,
                        std::span<const double> t, std::span<const double> r,
                        std::span<const double> dt, std::span<const double> dr) {
  const int d = p.data_dim;
  const int e = p.time_embedding.dim;
  Matrix dz(p.input_dim(), dx.cols());
  dz.topRows(d) = dx;
  std::vector<double> buf(e);
  for (Eigen::Index b = 0; b < dx.cols(); ++b) {
    double* col = dz.col(b).data();
    p.time_embedding.embed_derivative(t[b], buf.data());
    for (int k = 0; k < e; ++k) col[d + k] = buf[k] * dt[b];
    p.time_embedding.embed_derivative(t[b] - r[b], buf.data());
    const double dh = dt[b] - dr[b];
    for (int k = 0; k < e; ++k) col[d + e + k] = buf[k] * dh;
  }
  return dz;
}

Matrix affine(const Matrix& w, const Vector& b, const Matrix& a) {
  Matrix z = w * a;
  z.colwise() += b;
  return z;
}

// Writes act(z) into a and act'(z) into slope.
void activate(Activation act, const Matrix& z, Matrix& a, Matrix& slope) {
  a.resize(z.rows(), z.cols());
  slope.resize(z.rows(), z.cols());
  const Eigen::Index n = z.size();
  const double* zp = z.data();
  double* ap = a.data();
  double* sp = slope.data();
  switch (act) {
    case Activation::tanh:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double y = std::tanh(zp[i]);
        ap[i] = y;
        sp[i] = 1.0 - y * y;
      }
      break;
    case Activation::silu:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double s = 1.0 / (1.0 + std::exp(-zp[i]));
        ap[i] = zp[i] * s;
        sp[i] = s * (1.0 + zp[i] * (1.0 - s));
      }
      break;
    case Activation::relu:
      for (Eigen::Index i = 0; i < n; ++i) {
        ap[i] = zp[i] > 0.0 ? zp[i] : 0.0;
        sp[i] = zp[i] > 0.0 ? 1.0 : 0.0;
      }
      break;
  }
}

// Activations a_0..a_L and slopes act'(z_l) of the hidden layers.
struct ForwardCache {
  std::vector<Matrix> activations;
  std::vector<Matrix> slopes;
};

ForwardCache run_forward(const MlpParams& p, Matrix input) {
  ForwardCache c;
  const std::size_t L = p.layer_count();
  c.activations.reserve(L + 1);
  c.slopes.reserve(L - 1);
  c.activations.push_back(std::move(input));
  for (std::size_t l = 0; l < L; ++l) {
    Matrix z = affine(p.weights[l], p.biases[l], c.activations.back());
    if (l + 1 == L) {
      c.activations.push_back(std::move(z));
    } else {
      Matrix a, s;
      activate(p.activation, z, a, s);
      c.activations.push_back(std::move(a));
      c.slopes.push_back(std::move(s));
    }
  }
  return c;
}

}  // namespace

Matrix forward_batch(const MlpParams& p, const Matrix& x,
                     std::span<const double> t, std::span<const double> r) {
  check_batch(p, x, t, r);
  ForwardCache c = run_forward(p, assemble_input(p, x, t, r));
  return std::move(c.activations.back());
}

Vector forward(const MlpParams& p, const Vector& x, double t, double r) {
  const Matrix out = forward_batch(p, Matrix(x), std::span(&t, 1), std::span(&r, 1));
  return out.col(0);
}

DualTensor jvp_batch(const MlpParams& p, const Matrix& x,
                     std::span<const double> t, std::span<const double> r,
                     const Matrix& dx, std::span<const double> dt,
                     std::span<const double> dr) {
  check_batch(p, x, t, r);
  if (dx.rows() != x.rows() || dx.cols() != x.cols() ||
      dt.size() != t.size() || dr.size() != r.size()) {
    throw std::invalid_argument("jvp: tangent shape does not match primal");
  }
  if (!dx.allFinite()) throw std::invalid_argument("jvp: non-finite tangent");
  for (std::size_t b = 0; b < dt.size(); ++b) {
    if (!std::isfinite(dt[b]) || !std::isfinite(dr[b])) {
      throw std::invalid_argument("jvp: non-finite time tangent");
    }
  }

  Matrix a = assemble_input(p, x, t, r);
  Matrix da = assemble_tangent(p, dx, t, r, dt, dr);
  const std::size_t L = p.layer_count();
  for (std::size_t l = 0; l < L; ++l) {
    Matrix z = affine(p.weights[l], p.biases[l], a);
    Matrix dz = p.weights[l] * da;
    if (l + 1 == L) {
      a = std::move(z);
      da = std::move(dz);
    } else {
      Matrix s;
      activate(p.activation, z, a, s);
      da = s.cwiseProduct(dz);
    }
  }
  return DualTensor{std::move(a), std::move(da)};
}

DualTensor jvp(const MlpParams& p, const Vector& x, double t, double r,
               const Vector& dx, double dt, double dr) {
  if (dx.size() != x.size()) {
    throw std::invalid_argument("jvp: dx length does not match x");
  }
  return jvp_batch(p, Matrix(x), std::span(&t, 1), std::span(&r, 1), Matrix(dx),
                   std::span(&dt, 1), std::span(&dr, 1));
}

LossGradient loss_and_gradient(const MlpParams& p, const Matrix& x,
                               std::span<const double> t,
                               std::span<const double> r, const Matrix& targets,
                               std::span<const double> weights) {
  if (x.cols() == 0) throw std::invalid_argument("backward: empty batch");
  check_batch(p, x, t, r);
  if (targets.rows() != p.output_dim() || targets.cols() != x.cols()) {
    throw std::invalid_argument("backward: targets shape mismatch");
  }
  if (!weights.empty() && weights.size() != static_cast<std::size_t>(x.cols())) {
    throw std::invalid_argument("backward: weights length != batch size");
  }

  ForwardCache c = run_forward(p, assemble_input(p, x, t, r));
  const double inv_n = 1.0 / double(x.cols());
  Matrix residual = c.activations.back() - targets;

  LossGradient out;
  Eigen::VectorXd per_sample = residual.colwise().squaredNorm().transpose();
  Matrix delta = (2.0 * inv_n) * residual;
  if (!weights.empty()) {
    const Eigen::Map<const Vector> w(weights.data(), Eigen::Index(weights.size()));
    out.loss = inv_n * per_sample.dot(w);
    delta = delta * w.asDiagonal();
  } else {
    out.loss = inv_n * per_sample.sum();
  }

  out.grad = p;
  const std::size_t L = p.layer_count();
  for (std::size_t l = L; l-- > 0;) {
    out.grad.weights[l].noalias() = delta * c.activations[l].transpose();
    out.grad.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = p.weights[l].transpose() * delta;
      delta = back.cwiseProduct(c.slopes[l - 1]);
    }
  }
  return out;
}

AdamState AdamState::zeros_for(const MlpParams& p) {
  return AdamState{zeros_like(p), zeros_like(p), 0};
}

namespace {

template <class F>
void for_each_tensor(MlpParams& a, F&& f) {
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    f(a.weights[l].data(), a.weights[l].size(), l, true);
    f(a.biases[l].data(), a.biases[l].size(), l, false);
  }
}

const double* tensor_data(const MlpParams& p, std::size_t l, bool weight) {
  return weight ? p.weights[l].data() : p.biases[l].data();
}

}  // namespace

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) ||
      !params.same_shape(state.v)) {
    throw std::invalid_argument("adam: shape mismatch");
  }
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    if (!grads.weights[l].allFinite() || !grads.biases[l].allFinite()) {
      throw std::domain_error("adam: non-finite gradient in layer " +
                              std::to_string(l));
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for_each_tensor(params, [&](double* w, Eigen::Index n, std::size_t l, bool is_w) {
    const double* g = tensor_data(grads, l, is_w);
    double* m = is_w ? state.m.weights[l].data() : state.m.biases[l].data();
    double* v = is_w ? state.v.weights[l].data() : state.v.biases[l].data();
    for (Eigen::Index i = 0; i < n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  });
}

void ema_update(MlpParams& shadow, const MlpParams& live, double decay) {
  if (!shadow.same_shape(live)) throw std::invalid_argument("ema: shape mismatch");
  if (!(decay >= 0.0 && decay < 1.0)) {
    throw std::invalid_argument("ema: decay must lie in [0, 1)");
  }
  for_each_tensor(shadow, [&](double* s, Eigen::Index n, std::size_t l, bool is_w) {
    const double* x = tensor_data(live, l, is_w);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = decay * s[i] + (1.0 - decay) * x[i];
  });
}

}  // namespace otmf::nn
