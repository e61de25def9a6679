#include "otmf/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "otmf/config.hpp"
#include "otmf/inference.hpp"

#ifndef OTMF_BUILD_ID
#define OTMF_BUILD_ID "unknown"
#endif

namespace otmf::cli {

std::string build_id() { return OTMF_BUILD_ID; }

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream o;
  o << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return o.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory " + dir.string());
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

/// Config stored in a checkpoint; sampling settings for generate/eval come
/// from here.
meanflow::RunConfig checkpoint_config(const nn::Checkpoint& ck, const fs::path& path) {
  try {
    return config::parse(ck.config_text, path.string() + " (embedded config)");
  } catch (const config::ConfigError& e) {
    throw std::runtime_error(std::string("corrupt checkpoint: ") + e.what());
  }
}

int report(const std::string& command, const std::exception& e) {
  std::cerr << "otmf " << command << ": " << e.what() << '\n';
  return 1;
}

}  // namespace

void RunManifest::write(const fs::path& out_dir) const {
  std::ostringstream o;
  o << "command = " << command << '\n'
    << "build = " << build_id() << '\n'
    << "seed = " << seed << '\n'
    << "started = " << started << '\n'
    << "finished = " << finished << '\n';
  for (const auto& f : outputs) o << "output = " << f << '\n';
  if (!config_text.empty()) o << "\n[config]\n" << config_text;
  write_file(out_dir / "manifest.txt", o.str());
}

int cmd_train(const fs::path& config_path, const fs::path& out_dir,
              std::optional<std::uint64_t> seed) {
  try {
    meanflow::RunConfig cfg = config::load(config_path);
    if (seed) cfg.seed = *seed;
    ensure_dir(out_dir);
    RunManifest m;
    m.command = "train";
    m.config_text = config::to_text(cfg);
    m.seed = cfg.seed;
    m.started = utc_now();

    meanflow::TrainResult res;
    try {
      res = meanflow::train(cfg);
    } catch (const meanflow::TrainingDiverged& e) {
      nn::save_checkpoint(e.snapshot(), out_dir / "diverged.json");
      m.outputs = {"diverged.json"};
      m.finished = utc_now();
      m.write(out_dir);
      std::cerr << "otmf train: " << e.what() << " (state saved to "
                << (out_dir / "diverged.json").string() << ")\n";
      return 2;
    }

    nn::save_checkpoint(meanflow::to_checkpoint(res.state), out_dir / "checkpoint.json");
    meanflow::write_metrics_csv(res.metrics, out_dir / "metrics.csv");
    m.outputs = {"checkpoint.json", "metrics.csv"};

    std::vector<inference::MetricRow> rows;
    if (!res.metrics.empty() && res.metrics.back().w2_nfe1) {
      const auto& last = res.metrics.back();
      rows.push_back({"w2_squared", 1, *last.w2_nfe1, 0.0});
      rows.push_back({"w2_squared", 2, *last.w2_nfe2, 0.0});
    }
    rows.push_back({"ms_per_step", 0, res.mean_ms_per_step, 0.0});
    inference::write_metrics_csv(rows, out_dir / "eval.csv");
    m.outputs.push_back("eval.csv");

    const data::Sampler source(cfg.source), target(cfg.target);
    Rng rng(cfg.seed ^ 0x51ed270b27dULL);
    const std::size_t n = std::min<std::size_t>(cfg.eval_n, 2000);
    const auto gen = inference::generate(res.state.ema, cfg.mode, source.sample(n, rng), 1);
    inference::write_scatter_svg(gen, target.sample(n, rng), out_dir / "samples.svg");
    m.outputs.push_back("samples.svg");

    m.finished = utc_now();
    m.write(out_dir);
    std::cout << "trained " << cfg.iterations << " steps, " << res.mean_ms_per_step << " ms/step";
    if (!rows.empty() && rows[0].name == "w2_squared") {
      std::cout << ", W2^2@1 " << rows[0].value << ", W2^2@2 " << rows[1].value;
    }
    std::cout << '\n';
    return 0;
  } catch (const std::exception& e) {
    return report("train", e);
  }
}

int cmd_generate(const fs::path& checkpoint, const fs::path& out_dir, const GenerateOptions& opt) {
  try {
    const nn::Checkpoint ck = nn::load_checkpoint(checkpoint);
    const meanflow::RunConfig cfg = checkpoint_config(ck, checkpoint);
    inference::InferenceSpec spec{opt.nfe, opt.n, opt.use_ema, opt.seed};
    spec.validate();
    ensure_dir(out_dir);
    RunManifest m;
    m.command = "generate --checkpoint " + checkpoint.string() + " --nfe " +
                std::to_string(opt.nfe) + " --n " + std::to_string(opt.n) +
                (opt.use_ema ? " --ema" : " --no-ema");
    m.config_text = ck.config_text;
    m.seed = opt.seed;
    m.started = utc_now();

    const data::Sampler source(cfg.source), target(cfg.target);
    const auto& params = opt.use_ema ? ck.ema : ck.params;
    const auto gen = inference::generate(params, ck.mode, spec, source);
    data::save_csv(gen, out_dir / "generated.csv");
    Rng rng(opt.seed ^ 0x7f4a7c15ULL);
    inference::write_scatter_svg(gen, target.sample(opt.n, rng), out_dir / "generated.svg");
    m.outputs = {"generated.csv", "generated.svg"};
    m.finished = utc_now();
    m.write(out_dir);
    return 0;
  } catch (const std::exception& e) {
    return report("generate", e);
  }
}

int cmd_eval(const fs::path& checkpoint, const fs::path& out_dir, const EvalOptions& opt) {
  try {
    const nn::Checkpoint ck = nn::load_checkpoint(checkpoint);
    const meanflow::RunConfig cfg = checkpoint_config(ck, checkpoint);
    if (opt.nfes.empty()) throw std::invalid_argument("eval: no step counts given");
    for (int k : opt.nfes) {
      if (k < 1) throw std::invalid_argument("eval: nfe must be >= 1");
    }
    ensure_dir(out_dir);
    RunManifest m;
    m.command = "eval --checkpoint " + checkpoint.string() + (opt.use_ema ? " --ema" : " --no-ema");
    m.config_text = ck.config_text;
    m.seed = opt.seed;
    m.started = utc_now();

    const data::Sampler source(cfg.source), target(cfg.target);
    const auto& params = opt.use_ema ? ck.ema : ck.params;
    Rng rng(opt.seed);
    const auto est = inference::estimate_w2(params, ck.mode, source, target, opt.nfes, opt.n,
                                            opt.repetitions, rng);
    std::vector<inference::MetricRow> rows;
    for (const auto& e : est) {
      rows.push_back({"w2_squared", e.nfe, e.mean, e.wall_ms});
      std::cout << "W2^2@" << e.nfe << " = " << e.mean << '\n';
    }
    const auto start = std::chrono::steady_clock::now();
    const double s = inference::straightness(params, ck.mode, source.sample(opt.n, rng),
                                             opt.straightness_steps, 1.0);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    rows.push_back({"straightness", opt.straightness_steps, s, ms});
    inference::write_metrics_csv(rows, out_dir / "eval.csv");
    m.outputs = {"eval.csv"};
    m.finished = utc_now();
    m.write(out_dir);
    return 0;
  } catch (const std::exception& e) {
    return report("eval", e);
  }
}

std::vector<BenchRun> run_bench(const std::vector<fs::path>& configs, const fs::path& out_dir,
                                const BenchOptions& opt) {
  if (configs.empty()) throw std::invalid_argument("bench: no configs");
  if (opt.seeds < 1) throw std::invalid_argument("bench: seeds must be >= 1");
  std::vector<BenchRun> runs;
  for (const auto& path : configs) {
    const std::string name = path.stem().string();
    for (int k = 0; k < opt.seeds; ++k) {
      BenchRun run;
      run.config_name = name;
      run.replicate = k;
      try {
        meanflow::RunConfig cfg = config::load(path);
        if (opt.iterations) cfg.iterations = *opt.iterations;
        cfg.seed += std::uint64_t(k);
        run.seed = cfg.seed;
        run.pair = data::to_string(cfg.source.kind) + "->" + data::to_string(cfg.target.kind);
        run.coupling = cfg.mode == FlowMode::cfm ? "cfm/" + coupling::to_string(cfg.coupling.kind)
                                                 : coupling::to_string(cfg.coupling.kind);
        const auto res = meanflow::train(cfg);
        const fs::path dir = out_dir / "runs" / name / ("seed" + std::to_string(k));
        ensure_dir(dir);
        meanflow::write_metrics_csv(res.metrics, dir / "metrics.csv");
        const auto& last = res.metrics.back();
        run.w2_nfe1 = *last.w2_nfe1;
        run.w2_nfe2 = *last.w2_nfe2;
        run.ms_per_step = res.mean_ms_per_step;
        run.best_ms_per_step = res.best_ms_per_step;
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      if (!opt.quiet) {
        std::cerr << "[bench] " << name << " seed " << run.seed << ": ";
        if (run.ok) {
          std::cerr << "W2^2@1 " << run.w2_nfe1 << ", @2 " << run.w2_nfe2 << ", " << run.ms_per_step
                    << " ms/step\n";
        } else {
          std::cerr << "failed: " << run.error << '\n';
        }
      }
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

std::string format_bench_table(const std::vector<BenchRun>& runs) {
  // pair -> config -> runs, both in first-seen order
  std::vector<std::string> pairs;
  std::map<std::string, std::vector<std::string>> names;
  std::map<std::pair<std::string, std::string>, std::vector<const BenchRun*>> cells;
  for (const auto& r : runs) {
    const std::string pair = r.pair.empty() ? "unknown" : r.pair;
    if (std::find(pairs.begin(), pairs.end(), pair) == pairs.end()) pairs.push_back(pair);
    auto& n = names[pair];
    if (std::find(n.begin(), n.end(), r.config_name) == n.end()) n.push_back(r.config_name);
    cells[{pair, r.config_name}].push_back(&r);
  }
  auto stats = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / double(v.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };
  std::ostringstream o;
  o << std::setprecision(4);
  for (const auto& pair : pairs) {
    o << "## " << pair << "\n\n"
      << "| config | coupling | W2^2@1 mean | W2^2@1 std | W2^2@2 mean | W2^2@2 std | ms/step mean "
         "| ms/step std | best ms/step mean | best ms/step std |\n"
      << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& name : names[pair]) {
      const auto& rs = cells[{pair, name}];
      o << "| " << name << " | " << rs.front()->coupling << " |";
      bool failed = false;
      std::vector<double> a, b, c, d;
      for (const BenchRun* r : rs) {
        failed = failed || !r->ok;
        a.push_back(r->w2_nfe1);
        b.push_back(r->w2_nfe2);
        c.push_back(r->ms_per_step);
        d.push_back(r->best_ms_per_step);
      }
      if (failed) {
        o << " failed | failed | failed | failed | failed | failed | failed | failed |\n";
        continue;
      }
      for (const auto* v : {&a, &b, &c, &d}) {
        const auto [mean, sd] = stats(*v);
        o << ' ' << mean << " | " << sd << " |";
      }
      o << '\n';
    }
    o << '\n';
  }
  return o.str();
}

int cmd_bench(const fs::path& config_dir, const fs::path& out_dir, const BenchOptions& opt) {
  try {
    if (!fs::is_directory(config_dir)) {
      throw std::invalid_argument("bench: not a directory: " + config_dir.string());
    }
    std::vector<fs::path> configs;
    for (const auto& e : fs::directory_iterator(config_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".cfg") configs.push_back(e.path());
    }
    std::sort(configs.begin(), configs.end());
    if (configs.empty()) {
      throw std::invalid_argument("bench: no *.cfg files in " + config_dir.string());
    }
    ensure_dir(out_dir);
    RunManifest m;
    m.command = "bench --config " + config_dir.string() + " --seeds " + std::to_string(opt.seeds);
    m.started = utc_now();
    for (const auto& c : configs) {
      m.config_text += "# " + c.filename().string() + "\n" + read_file(c) + "\n";
    }

    const auto runs = run_bench(configs, out_dir, opt);
    write_file(out_dir / "bench.md", format_bench_table(runs));
    std::ostringstream csv;
    csv << std::setprecision(10)
        << "config,pair,coupling,seed,status,w2_nfe1,w2_nfe2,ms_per_step,best_ms_per_step,error\n";
    int failures = 0;
    for (const auto& r : runs) {
      std::string err = r.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      csv << r.config_name << ',' << r.pair << ',' << r.coupling << ',' << r.seed << ','
          << (r.ok ? "ok" : "failed") << ',';
      if (r.ok) csv << r.w2_nfe1 << ',' << r.w2_nfe2 << ',' << r.ms_per_step << ',' << r.best_ms_per_step;
      else csv << ",,,";
      csv << ',' << err << '\n';
      if (!r.ok) ++failures;
      if (r.ok) m.outputs.push_back("runs/" + r.config_name + "/seed" +
                                    std::to_string(r.replicate) + "/metrics.csv");
    }
    write_file(out_dir / "bench.csv", csv.str());
    m.outputs.insert(m.outputs.begin(), {"bench.md", "bench.csv"});
    m.finished = utc_now();
    m.write(out_dir);
    std::cout << format_bench_table(runs);
    if (failures > 0) {
      std::cerr << "otmf bench: " << failures << " run(s) failed\n";
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    return report("bench", e);
  }
}

}  // namespace otmf::cli
