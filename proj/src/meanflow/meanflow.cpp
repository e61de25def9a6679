#include "otmf/meanflow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "otmf/config.hpp"
#include "otmf/inference.hpp"

namespace otmf::meanflow {

std::string to_string(TimeSamplerKind k) {
  switch (k) {
    case TimeSamplerKind::uniform: return "uniform";
    case TimeSamplerKind::logit_normal: return "logit_normal";
    case TimeSamplerKind::constant: return "constant";
  }
  return "?";
}

TimeSamplerKind parse_time_sampler(const std::string& name) {
  if (name == "uniform") return TimeSamplerKind::uniform;
  if (name == "logit_normal" || name == "lognorm") return TimeSamplerKind::logit_normal;
  if (name == "constant") return TimeSamplerKind::constant;
  throw std::invalid_argument("unknown time sampler '" + name +
                              "' (uniform, logit_normal, constant)");
}

std::string to_string(LossWeighting w) {
  return w == LossWeighting::uniform ? "uniform" : "adaptive";
}

LossWeighting parse_loss_weighting(const std::string& name) {
  if (name == "uniform") return LossWeighting::uniform;
  if (name == "adaptive") return LossWeighting::adaptive;
  throw std::invalid_argument("unknown loss weighting '" + name + "' (uniform, adaptive)");
}

void TimeSamplerSpec::validate() const {
  if (!(equal_time_fraction >= 0.0 && equal_time_fraction <= 1.0)) {
    throw std::invalid_argument("equal_time_fraction must lie in [0, 1]");
  }
  if (kind == TimeSamplerKind::logit_normal && !(p_std > 0.0 && std::isfinite(p_mean))) {
    throw std::invalid_argument("logit-normal sampler needs finite p_mean and p_std > 0");
  }
  if (kind == TimeSamplerKind::constant && !(constant >= 0.0 && constant <= 1.0)) {
    throw std::invalid_argument("time_constant must lie in [0, 1]");
  }
}

namespace {

double base_draw(const TimeSamplerSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case TimeSamplerKind::uniform:
      return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    case TimeSamplerKind::logit_normal: {
      const double z = std::normal_distribution<double>(spec.p_mean, spec.p_std)(rng);
      return 1.0 / (1.0 + std::exp(-z));
    }
    case TimeSamplerKind::constant:
      return spec.constant;
  }
  return 0.0;
}

}  // namespace

TimeSample sample_times(const TimeSamplerSpec& spec, Rng& rng) {
  const double a = base_draw(spec, rng);
  const double b = base_draw(spec, rng);
  TimeSample s{std::max(a, b), std::min(a, b)};
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= spec.equal_time_fraction) s.r = s.t;
  return s;
}

Interpolant interpolate(const Vector& x0, const Vector& x1, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("interpolate: t outside [0, 1]");
  if (x0.size() != x1.size()) throw std::invalid_argument("interpolate: size mismatch");
  return {(1.0 - t) * x0 + t * x1, x1 - x0};
}

Matrix compute_u_target(const nn::MlpParams& params, const Matrix& x_r,
                        std::span<const double> t, std::span<const double> r, const Matrix& v) {
  const auto b = std::size_t(x_r.cols());
  const std::vector<double> dt(b, 0.0), dr(b, 1.0);
  const nn::DualTensor d = nn::jvp_batch(params, x_r, t, r, v, dt, dr);
  Matrix out = v;
  for (std::size_t k = 0; k < b; ++k) {
    const double h = t[k] - r[k];
    if (h != 0.0) out.col(Eigen::Index(k)) += h * d.tangent.col(Eigen::Index(k));
  }
  return out;
}

Vector compute_u_target(const nn::MlpParams& params, const Vector& x_r, double t, double r,
                        const Vector& v) {
  const double tt[1] = {t}, rr[1] = {r};
  return compute_u_target(params, Matrix(x_r), tt, rr, Matrix(v)).col(0);
}

void RunConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (!(adam.lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw std::invalid_argument("adam_eps must be > 0");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw std::invalid_argument("ema_decay must lie in [0, 1)");
  if (ema_period < 1) throw std::invalid_argument("ema_period must be >= 1");
  if (!(grad_clip >= 0.0)) throw std::invalid_argument("grad_clip must be >= 0");
  if (!(adaptive_power >= 0.0 && adaptive_c > 0.0)) {
    throw std::invalid_argument("adaptive weighting needs power >= 0 and c > 0");
  }
  if (log_every < 1) throw std::invalid_argument("log_every must be >= 1");
  if (eval_every < 0) throw std::invalid_argument("eval_every must be >= 0");
  if (eval_n < 1) throw std::invalid_argument("eval_n must be >= 1");
  if (eval_reps < 1) throw std::invalid_argument("eval_reps must be >= 1");
  if (mlp.hidden_width < 1 || mlp.hidden_layers < 1) {
    throw std::invalid_argument("hidden_width and hidden_layers must be >= 1");
  }
  if (mlp.time_embed_dim < 2 || mlp.time_embed_dim % 2 != 0) {
    throw std::invalid_argument("time_embed_dim must be even and >= 2");
  }
  if (!(mlp.time_embed_max_freq > 1.0)) throw std::invalid_argument("time_embed_max_freq must be > 1");
  for (const data::DatasetSpec* d : {&source, &target}) {
    if (!(d->scale > 0.0 && std::isfinite(d->scale))) throw std::invalid_argument("dataset scale must be > 0");
    if (d->kind == data::DatasetKind::file && d->path.empty()) {
      throw std::invalid_argument("file dataset needs a path");
    }
  }
  time.validate();
  coupling.validate();
}

TrainState init_state(const RunConfig& config) {
  config.validate();
  TrainState s;
  s.config = config;
  s.rng.seed(config.seed);
  nn::MlpShape shape = config.mlp;
  shape.data_dim = data::Sampler(config.source).dim();
  s.params = nn::init_mlp(shape, s.rng);
  s.ema = s.params;
  s.adam = nn::AdamState::zeros_for(s.params);
  return s;
}

nn::Checkpoint to_checkpoint(const TrainState& state) {
  nn::Checkpoint c;
  c.params = state.params;
  c.ema = state.ema;
  c.adam = state.adam;
  c.step = state.step;
  c.mode = state.config.mode;
  c.config_text = config::to_text(state.config);
  return c;
}

double step_on_pairs(TrainState& state, const Matrix& x0, const Matrix& x1,
                     const SampleWeighting& weighting) {
  if (x0.rows() != x1.rows() || x0.cols() != x1.cols() || x0.cols() == 0) {
    throw std::invalid_argument("step_on_pairs: x0 and x1 must have the same non-empty shape");
  }
  const RunConfig& cfg = state.config;
  const auto b = std::size_t(x0.cols());
  std::vector<double> t(b), r(b);
  Matrix x(x0.rows(), x0.cols());
  const Matrix v = x1 - x0;
  for (std::size_t k = 0; k < b; ++k) {
    TimeSample ts = sample_times(cfg.time, state.rng);
    if (cfg.mode == FlowMode::cfm) ts.r = ts.t;
    t[k] = ts.t;
    r[k] = ts.r;
    // Samples are anchored at the start of their interval.
    x.col(Eigen::Index(k)) = (1.0 - ts.r) * x0.col(Eigen::Index(k)) + ts.r * x1.col(Eigen::Index(k));
  }
  Matrix target;
  Matrix u;  // current prediction, needed for adaptive weights
  if (cfg.mode == FlowMode::meanflow) {
    const std::vector<double> dt(b, 0.0), dr(b, 1.0);
    nn::DualTensor d = nn::jvp_batch(state.params, x, t, r, v, dt, dr);
    target = v;
    for (std::size_t k = 0; k < b; ++k) {
      const double h = t[k] - r[k];
      if (h != 0.0) target.col(Eigen::Index(k)) += h * d.tangent.col(Eigen::Index(k));
    }
    u = std::move(d.value);
  } else {
    target = v;
    if (cfg.loss_weighting == LossWeighting::adaptive) u = nn::forward_batch(state.params, x, t, r);
  }
  std::vector<double> w;
  if (weighting) {
    w = weighting(x0, x1);
    if (w.size() != b) throw std::invalid_argument("sample weighting returned the wrong count");
  } else if (cfg.loss_weighting == LossWeighting::adaptive) {
    w.resize(b);
    for (std::size_t k = 0; k < b; ++k) {
      const double e = (u.col(Eigen::Index(k)) - target.col(Eigen::Index(k))).squaredNorm();
      w[k] = 1.0 / std::pow(e + cfg.adaptive_c, cfg.adaptive_power);
    }
  }

  auto diverged = [&](const std::string& why) {
    return TrainingDiverged("training diverged at step " + std::to_string(state.step + 1) + ": " + why,
                            to_checkpoint(state));
  };
  if (!target.allFinite()) throw diverged("non-finite regression target");
  nn::LossGradient lg = nn::loss_and_gradient(state.params, x, t, r, target, w);
  if (!w.empty()) lg.loss = u.size() > 0 ? (u - target).squaredNorm() / double(b) : lg.loss;
  if (!std::isfinite(lg.loss)) throw diverged("loss is " + std::to_string(lg.loss));
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (std::size_t l = 0; l < lg.grad.layer_count(); ++l) {
      sq += lg.grad.weights[l].squaredNorm() + lg.grad.biases[l].squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) {
      const double k = cfg.grad_clip / norm;
      for (std::size_t l = 0; l < lg.grad.layer_count(); ++l) {
        lg.grad.weights[l] *= k;
        lg.grad.biases[l] *= k;
      }
    }
  }
  try {
    nn::adam_step(state.params, lg.grad, state.adam, cfg.adam);
  } catch (const std::domain_error& e) {
    throw diverged(e.what());
  }
  ++state.step;
  if (state.step % cfg.ema_period == 0) {
    double decay = cfg.ema_decay;
    if (cfg.ema_warmup) {
      const double k = double(state.step / cfg.ema_period);
      decay = std::min(decay, (1.0 + k) / (10.0 + k));
    }
    nn::ema_update(state.ema, state.params, decay);
  }
  return lg.loss;
}

double train_step(TrainState& state, const data::Sampler& source, const data::Sampler& target,
                  const SampleWeighting& weighting) {
  const std::size_t b = state.config.batch_size;
  const PointBatch x0 = source.sample(b, state.rng);
  const PointBatch x1 = target.sample(b, state.rng);
  const coupling::TransportPlan plan = coupling::couple(state.config.coupling, x0, x1, state.rng);
  const auto pairs = coupling::sample_pairs(plan, b, state.rng);
  Matrix a(x0.dim(), Eigen::Index(pairs.size()));
  Matrix c(x1.dim(), Eigen::Index(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    a.col(Eigen::Index(k)) = x0.points.row(pairs[k].first).transpose();
    c.col(Eigen::Index(k)) = x1.points.row(pairs[k].second).transpose();
  }
  return step_on_pairs(state, a, c, weighting);
}

TrainResult train(const RunConfig& config) {
  TrainResult res{init_state(config), {}, 0.0, 0.0};
  TrainState& s = res.state;
  const data::Sampler source(config.source);
  const data::Sampler target(config.target);
  if (source.dim() != target.dim()) {
    throw std::invalid_argument("source and target dimensions differ");
  }
  Rng eval_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const int nfes[2] = {1, 2};

  using clock = std::chrono::steady_clock;
  double window_loss = 0.0, window_ms = 0.0, total_ms = 0.0;
  long window_steps = 0;
  for (long it = 1; it <= config.iterations; ++it) {
    const auto start = clock::now();
    window_loss += train_step(s, source, target);
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    window_ms += ms;
    total_ms += ms;
    ++window_steps;

    const bool last = it == config.iterations;
    const bool eval = last || (config.eval_every > 0 && it % config.eval_every == 0);
    if (eval || it % config.log_every == 0) {
      MetricsRow row;
      row.step = it;
      row.loss = window_loss / double(window_steps);
      row.ms_per_step = window_ms / double(window_steps);
      if (res.best_ms_per_step == 0.0 || row.ms_per_step < res.best_ms_per_step) {
        res.best_ms_per_step = row.ms_per_step;
      }
      if (eval) {
        const auto est = inference::estimate_w2(s.ema, config.mode, source, target, nfes,
                                                config.eval_n, config.eval_reps, eval_rng);
        row.w2_nfe1 = est[0].mean;
        row.w2_nfe2 = est[1].mean;
      }
      res.metrics.push_back(row);
      window_loss = window_ms = 0.0;
      window_steps = 0;
    }
  }
  if (config.iterations > 0) res.mean_ms_per_step = total_ms / double(config.iterations);
  return res;
}

void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "step,loss,w2_nfe1,w2_nfe2,ms_per_step\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.loss << ',';
    if (r.w2_nfe1) out << *r.w2_nfe1;
    out << ',';
    if (r.w2_nfe2) out << *r.w2_nfe2;
    out << ',' << r.ms_per_step << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace otmf::meanflow
