// otmf: train, sample and evaluate one-step mean-flow models on 2D toy data.
#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "otmf/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mean-flow training with mini-batch optimal transport couplings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", otmf::cli::build_id());

  std::string config, out, checkpoint;
  std::optional<std::uint64_t> seed;
  bool ema = true;
  int nfe = 1;
  std::size_t n = 2000;
  int reps = 3;
  int seeds = 3;
  std::optional<long> iterations;

  auto add_ema = [&](CLI::App* sub) {
    sub->add_flag("--ema,!--no-ema", ema, "Use EMA parameters (default) or the live ones");
  };

  auto* train = app.add_subcommand("train", "Train one model from a config file");
  train->add_option("--config", config, "Run config (key = value)")->required();
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--seed", seed, "Override the config seed");

  auto* gen = app.add_subcommand("generate", "Sample from a checkpoint");
  gen->add_option("--checkpoint", checkpoint, "checkpoint.json")->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--nfe", nfe, "Network evaluations")->check(CLI::PositiveNumber);
  gen->add_option("--n", n, "Number of points")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Sampling seed (default 0)");
  add_ema(gen);

  std::vector<int> nfes{1, 2};
  auto* eval = app.add_subcommand("eval", "W2^2 and straightness of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint.json")->required();
  eval->add_option("--out", out, "Output directory")->required();
  eval->add_option("--nfe", nfes, "Step counts to evaluate")->check(CLI::PositiveNumber);
  eval->add_option("--n", n, "Points per repetition")->check(CLI::PositiveNumber);
  eval->add_option("--reps", reps, "Repetitions")->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed, "Evaluation seed (default 0)");
  add_ema(eval);

  auto* bench = app.add_subcommand("bench", "Train a directory of configs over several seeds");
  bench->add_option("--config", config, "Directory of *.cfg files")->required();
  bench->add_option("--out", out, "Output directory")->required();
  bench->add_option("--seeds", seeds, "Seeds per config")->check(CLI::PositiveNumber);
  bench->add_option("--iterations", iterations, "Override iterations in every config");

  CLI11_PARSE(app, argc, argv);

  if (*train) return otmf::cli::cmd_train(config, out, seed);
  if (*gen) {
    return otmf::cli::cmd_generate(checkpoint, out, {nfe, n, ema, seed.value_or(0)});
  }
  if (*eval) {
    otmf::cli::EvalOptions opt;
    opt.nfes = nfes;
    opt.n = n;
    opt.repetitions = reps;
    opt.use_ema = ema;
    opt.seed = seed.value_or(0);
    return otmf::cli::cmd_eval(checkpoint, out, opt);
  }
  if (*bench) {
    otmf::cli::BenchOptions opt;
    opt.seeds = seeds;
    opt.iterations = iterations;
    return otmf::cli::cmd_bench(config, out, opt);
  }
  return 1;
}
