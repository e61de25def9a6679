#include "otmf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace otmf::config {

using meanflow::RunConfig;

ConfigError::ConfigError(const std::string& source, int line, const std::string& message)
    : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) +
                         ": " + message),
      line_(line) {}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("expected a number, got '" + v + "'");
  }
  return x;
}

template <class Int>
Int to_int(const std::string& v) {
  Int x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("expected an integer, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

std::string fmt(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

FlowMode parse_mode(const std::string& v) {
  if (v == "meanflow") return FlowMode::meanflow;
  if (v == "cfm") return FlowMode::cfm;
  throw std::invalid_argument("unknown mode '" + v + "' (meanflow, cfm)");
}

std::string mode_name(FlowMode m) { return m == FlowMode::meanflow ? "meanflow" : "cfm"; }

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"source", [](RunConfig& c, const std::string& v) { c.source.kind = data::parse_dataset_kind(v); }},
      {"target", [](RunConfig& c, const std::string& v) { c.target.kind = data::parse_dataset_kind(v); }},
      {"source_scale", [](RunConfig& c, const std::string& v) { c.source.scale = to_double(v); }},
      {"target_scale", [](RunConfig& c, const std::string& v) { c.target.scale = to_double(v); }},
      {"source_path", [](RunConfig& c, const std::string& v) { c.source.path = v; }},
      {"target_path", [](RunConfig& c, const std::string& v) { c.target.path = v; }},
      {"coupling", [](RunConfig& c, const std::string& v) { c.coupling.kind = coupling::parse_coupling_kind(v); }},
      {"sinkhorn_epsilon", [](RunConfig& c, const std::string& v) { c.coupling.sinkhorn.epsilon = to_double(v); }},
      {"sinkhorn_epsilon_relative", [](RunConfig& c, const std::string& v) { c.coupling.sinkhorn.epsilon_relative = to_bool(v); }},
      {"sinkhorn_max_iters", [](RunConfig& c, const std::string& v) { c.coupling.sinkhorn.max_iters = to_int<int>(v); }},
      {"sinkhorn_tol", [](RunConfig& c, const std::string& v) { c.coupling.sinkhorn.tol = to_double(v); }},
      {"lot_rank", [](RunConfig& c, const std::string& v) { c.coupling.lot_rank = to_int<std::size_t>(v); }},
      {"lot_pivot", [](RunConfig& c, const std::string& v) { c.coupling.pivot_method = coupling::parse_pivot_method(v); }},
      {"sliced_projections", [](RunConfig& c, const std::string& v) { c.coupling.sliced.num_projections = to_int<int>(v); }},
      {"sliced_aggregation", [](RunConfig& c, const std::string& v) { c.coupling.sliced.aggregation = coupling::parse_sliced_aggregation(v); }},
      {"sliced_temperature", [](RunConfig& c, const std::string& v) { c.coupling.sliced.temperature = to_double(v); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.batch_size = to_int<std::size_t>(v); }},
      {"iterations", [](RunConfig& c, const std::string& v) { c.iterations = to_int<long>(v); }},
      {"lr", [](RunConfig& c, const std::string& v) { c.adam.lr = to_double(v); }},
      {"adam_beta1", [](RunConfig& c, const std::string& v) { c.adam.beta1 = to_double(v); }},
      {"adam_beta2", [](RunConfig& c, const std::string& v) { c.adam.beta2 = to_double(v); }},
      {"adam_eps", [](RunConfig& c, const std::string& v) { c.adam.eps = to_double(v); }},
      {"grad_clip", [](RunConfig& c, const std::string& v) { c.grad_clip = to_double(v); }},
      {"ema_decay", [](RunConfig& c, const std::string& v) { c.ema_decay = to_double(v); }},
      {"ema_period", [](RunConfig& c, const std::string& v) { c.ema_period = to_int<long>(v); }},
      {"ema_warmup", [](RunConfig& c, const std::string& v) { c.ema_warmup = to_bool(v); }},
      {"time_sampler", [](RunConfig& c, const std::string& v) { c.time.kind = meanflow::parse_time_sampler(v); }},
      {"time_p_mean", [](RunConfig& c, const std::string& v) { c.time.p_mean = to_double(v); }},
      {"time_p_std", [](RunConfig& c, const std::string& v) { c.time.p_std = to_double(v); }},
      {"time_constant", [](RunConfig& c, const std::string& v) { c.time.constant = to_double(v); }},
      {"equal_time_fraction", [](RunConfig& c, const std::string& v) { c.time.equal_time_fraction = to_double(v); }},
      {"loss_weighting", [](RunConfig& c, const std::string& v) { c.loss_weighting = meanflow::parse_loss_weighting(v); }},
      {"adaptive_power", [](RunConfig& c, const std::string& v) { c.adaptive_power = to_double(v); }},
      {"adaptive_c", [](RunConfig& c, const std::string& v) { c.adaptive_c = to_double(v); }},
      {"mode", [](RunConfig& c, const std::string& v) { c.mode = parse_mode(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_int<std::uint64_t>(v); }},
      {"hidden_width", [](RunConfig& c, const std::string& v) { c.mlp.hidden_width = to_int<int>(v); }},
      {"hidden_layers", [](RunConfig& c, const std::string& v) { c.mlp.hidden_layers = to_int<int>(v); }},
      {"activation", [](RunConfig& c, const std::string& v) { c.mlp.activation = nn::parse_activation(v); }},
      {"time_embed_dim", [](RunConfig& c, const std::string& v) { c.mlp.time_embed_dim = to_int<int>(v); }},
      {"time_embed_max_freq", [](RunConfig& c, const std::string& v) { c.mlp.time_embed_max_freq = to_double(v); }},
      {"log_every", [](RunConfig& c, const std::string& v) { c.log_every = to_int<long>(v); }},
      {"eval_every", [](RunConfig& c, const std::string& v) { c.eval_every = to_int<long>(v); }},
      {"eval_n", [](RunConfig& c, const std::string& v) { c.eval_n = to_int<std::size_t>(v); }},
      {"eval_reps", [](RunConfig& c, const std::string& v) { c.eval_reps = to_int<int>(v); }},
  };
  return table;
}

}  // namespace

RunConfig parse(const std::string& text, const std::string& source) {
  RunConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source, line_no, "missing key");
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(source, line_no, "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(source, line_no, "duplicate key '" + key + "'");
    if (value.empty() && key != "source_path" && key != "target_path") {
      throw ConfigError(source, line_no, "empty value for '" + key + "'");
    }
    try {
      it->second(c, value);
    } catch (const std::exception& e) {
      throw ConfigError(source, line_no, key + ": " + e.what());
    }
  }
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(source, 0, e.what());
  }
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse(ss.str(), path.string());
  // Data files are looked up next to the config.
  for (data::DatasetSpec* d : {&c.source, &c.target}) {
    if (!d->path.empty() && std::filesystem::path(d->path).is_relative()) {
      d->path = (path.parent_path() / d->path).string();
    }
  }
  return c;
}

std::string to_text(const RunConfig& c) {
  std::ostringstream o;
  o << "source = " << data::to_string(c.source.kind) << '\n'
    << "source_scale = " << fmt(c.source.scale) << '\n'
    << "source_path = " << c.source.path << '\n'
    << "target = " << data::to_string(c.target.kind) << '\n'
    << "target_scale = " << fmt(c.target.scale) << '\n'
    << "target_path = " << c.target.path << '\n'
    << "coupling = " << coupling::to_string(c.coupling.kind) << '\n'
    << "sinkhorn_epsilon = " << fmt(c.coupling.sinkhorn.epsilon) << '\n'
    << "sinkhorn_epsilon_relative = " << (c.coupling.sinkhorn.epsilon_relative ? "true" : "false") << '\n'
    << "sinkhorn_max_iters = " << c.coupling.sinkhorn.max_iters << '\n'
    << "sinkhorn_tol = " << fmt(c.coupling.sinkhorn.tol) << '\n'
    << "lot_rank = " << c.coupling.lot_rank << '\n'
    << "lot_pivot = " << coupling::to_string(c.coupling.pivot_method) << '\n'
    << "sliced_projections = " << c.coupling.sliced.num_projections << '\n'
    << "sliced_aggregation = " << coupling::to_string(c.coupling.sliced.aggregation) << '\n'
    << "sliced_temperature = " << fmt(c.coupling.sliced.temperature) << '\n'
    << "batch_size = " << c.batch_size << '\n'
    << "iterations = " << c.iterations << '\n'
    << "lr = " << fmt(c.adam.lr) << '\n'
    << "adam_beta1 = " << fmt(c.adam.beta1) << '\n'
    << "adam_beta2 = " << fmt(c.adam.beta2) << '\n'
    << "adam_eps = " << fmt(c.adam.eps) << '\n'
    << "grad_clip = " << fmt(c.grad_clip) << '\n'
    << "ema_decay = " << fmt(c.ema_decay) << '\n'
    << "ema_period = " << c.ema_period << '\n'
    << "ema_warmup = " << (c.ema_warmup ? "true" : "false") << '\n'
    << "time_sampler = " << meanflow::to_string(c.time.kind) << '\n'
    << "time_p_mean = " << fmt(c.time.p_mean) << '\n'
    << "time_p_std = " << fmt(c.time.p_std) << '\n'
    << "time_constant = " << fmt(c.time.constant) << '\n'
    << "equal_time_fraction = " << fmt(c.time.equal_time_fraction) << '\n'
    << "loss_weighting = " << meanflow::to_string(c.loss_weighting) << '\n'
    << "adaptive_power = " << fmt(c.adaptive_power) << '\n'
    << "adaptive_c = " << fmt(c.adaptive_c) << '\n'
    << "mode = " << mode_name(c.mode) << '\n'
    << "seed = " << c.seed << '\n'
    << "hidden_width = " << c.mlp.hidden_width << '\n'
    << "hidden_layers = " << c.mlp.hidden_layers << '\n'
    << "activation = " << nn::to_string(c.mlp.activation) << '\n'
    << "time_embed_dim = " << c.mlp.time_embed_dim << '\n'
    << "time_embed_max_freq = " << fmt(c.mlp.time_embed_max_freq) << '\n'
    << "log_every = " << c.log_every << '\n'
    << "eval_every = " << c.eval_every << '\n'
    << "eval_n = " << c.eval_n << '\n'
    << "eval_reps = " << c.eval_reps << '\n';
  return o.str();
}

}  // namespace otmf::config
