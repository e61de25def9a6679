#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "otmf/meanflow.hpp"

namespace otmf::cli {

namespace fs = std::filesystem;

std::string build_id();

/// Provenance of one command invocation, written as manifest.txt.
struct RunManifest {
  std::string command;
  std::string config_text;
  std::uint64_t seed = 0;
  std::string started;   // UTC, ISO 8601
  std::string finished;
  std::vector<std::string> outputs;  // relative to the output directory

  void write(const fs::path& out_dir) const;
};

/// Each command returns a process exit status and reports problems on
/// stderr. Files are only ever written below out_dir.

/// Writes checkpoint.json, metrics.csv, eval.csv, samples.svg and
/// manifest.txt. A seed given here replaces the one in the config.
int cmd_train(const fs::path& config_path, const fs::path& out_dir,
              std::optional<std::uint64_t> seed = std::nullopt);

struct GenerateOptions {
  int nfe = 1;
  std::size_t n = 2000;
  bool use_ema = true;
  std::uint64_t seed = 0;
};

/// Writes generated.csv, generated.svg (against fresh target samples) and
/// manifest.txt.
int cmd_generate(const fs::path& checkpoint, const fs::path& out_dir, const GenerateOptions& opt);

struct EvalOptions {
  std::vector<int> nfes{1, 2};
  std::size_t n = 2000;
  int repetitions = 3;
  bool use_ema = true;
  std::uint64_t seed = 0;
  int straightness_steps = 8;
};

/// Writes eval.csv (W2^2 per step count, then straightness) and manifest.txt.
int cmd_eval(const fs::path& checkpoint, const fs::path& out_dir, const EvalOptions& opt);

struct BenchRun {
  std::string config_name;  // file stem
  std::string pair;         // "source->target"
  std::string coupling;
  std::uint64_t seed = 0;
  int replicate = 0;        // 0 .. seeds-1
  bool ok = false;
  std::string error;
  double w2_nfe1 = 0.0;
  double w2_nfe2 = 0.0;
  double ms_per_step = 0.0;
  double best_ms_per_step = 0.0;
};

struct BenchOptions {
  int seeds = 3;
  /// Replaces `iterations` in every config when set.
  std::optional<long> iterations;
  bool quiet = false;
};

/// Trains every config for each seed (config seed + 0, 1, ...). Per-run
/// metrics go to out_dir/runs/<name>/seed<k>/.
std::vector<BenchRun> run_bench(const std::vector<fs::path>& configs, const fs::path& out_dir,
                                const BenchOptions& opt);

/// Per dataset pair, one row per config: mean and sample std over seeds of
/// W2^2@1, W2^2@2 and ms/step. Rows with a failed seed read "failed".
std::string format_bench_table(const std::vector<BenchRun>& runs);

/// Runs every *.cfg file in config_dir (sorted by name) and writes
/// bench.md, bench.csv and manifest.txt. Nonzero when the directory holds no
/// configs or any run failed.
int cmd_bench(const fs::path& config_dir, const fs::path& out_dir, const BenchOptions& opt);

}  // namespace otmf::cli
