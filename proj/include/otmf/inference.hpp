#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "otmf/common.hpp"
#include "otmf/datasets.hpp"
#include "otmf/nn.hpp"

namespace otmf::inference {

using data::PointBatch;

struct InferenceSpec {
  int nfe = 1;
  std::size_t n = 2000;
  bool use_ema = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Euler steps over the uniform grid 0 = s_0 < ... < s_T = 1. In meanflow
/// mode step k moves x by (s_k - s_{k-1}) * u(x, s_k, s_{k-1}); in cfm mode
/// by the same factor times u(x, s_{k-1}, s_{k-1}). Throws std::domain_error
/// when the state stops being finite.
PointBatch generate(const nn::MlpParams& params, FlowMode mode, const PointBatch& x0, int nfe);

/// Draws spec.n source points with an engine seeded from spec.seed and
/// integrates them.
PointBatch generate(const nn::MlpParams& params, FlowMode mode, const InferenceSpec& spec,
                    const data::Sampler& source);

/// Exact empirical W2^2 between two equal-size uniform batches.
double w2_squared(const PointBatch& a, const PointBatch& b);

/// Mean over the probe points of ||x(nfe = k) - x(nfe = 1)|| divided by
/// data_scale.
double straightness(const nn::MlpParams& params, FlowMode mode, const PointBatch& probes,
                    int k, double data_scale);

struct W2Estimate {
  int nfe = 1;
  double mean = 0.0;
  std::vector<double> values;  // one per repetition
  double wall_ms = 0.0;        // total over repetitions
};

/// W2^2 between n generated points and n fresh target points, repeated.
/// Every repetition draws new source and target batches from `rng` and
/// shares them across the requested step counts.
std::vector<W2Estimate> estimate_w2(const nn::MlpParams& params, FlowMode mode,
                                    const data::Sampler& source, const data::Sampler& target,
                                    std::span<const int> nfes, std::size_t n, int repetitions,
                                    Rng& rng);

struct MetricRow {
  std::string name;
  int nfe = 1;
  double value = 0.0;
  double wall_ms = 0.0;
};

void write_metrics_csv(std::span<const MetricRow> rows, const std::filesystem::path& path);

/// Two-colour scatter: target points grey, generated points blue.
void write_scatter_svg(const PointBatch& generated, const PointBatch& target,
                       const std::filesystem::path& path);

}  // namespace otmf::inference
