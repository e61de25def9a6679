#include "otmf/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "otmf/coupling.hpp"

namespace otmf::inference {

void InferenceSpec::validate() const {
  if (nfe < 1) throw std::invalid_argument("inference: nfe must be >= 1");
  if (n < 1) throw std::invalid_argument("inference: n must be >= 1");
}

PointBatch generate(const nn::MlpParams& params, FlowMode mode, const PointBatch& x0, int nfe) {
  if (nfe < 1) throw std::invalid_argument("generate: nfe must be >= 1");
  x0.validate();
  if (x0.dim() != params.data_dim) {
    throw std::invalid_argument("generate: points have dimension " + std::to_string(x0.dim()) +
                                ", model expects " + std::to_string(params.data_dim));
  }
  const auto b = std::size_t(x0.size());
  Matrix x = x0.points.transpose();
  std::vector<double> t(b), r(b);
  for (int k = 1; k <= nfe; ++k) {
    const double s_prev = double(k - 1) / double(nfe);
    const double s_next = k == nfe ? 1.0 : double(k) / double(nfe);
    if (mode == FlowMode::meanflow) {
      std::fill(t.begin(), t.end(), s_next);
      std::fill(r.begin(), r.end(), s_prev);
    } else {
      std::fill(t.begin(), t.end(), s_prev);
      std::fill(r.begin(), r.end(), s_prev);
    }
    const Matrix u = nn::forward_batch(params, x, t, r);
    x += (s_next - s_prev) * u;
    if (!x.allFinite()) {
      throw std::domain_error("generate: state became non-finite at step " + std::to_string(k) +
                              " of " + std::to_string(nfe));
    }
  }
  return PointBatch(x.transpose());
}

PointBatch generate(const nn::MlpParams& params, FlowMode mode, const InferenceSpec& spec,
                    const data::Sampler& source) {
  spec.validate();
  Rng rng(spec.seed);
  return generate(params, mode, source.sample(spec.n, rng), spec.nfe);
}

double w2_squared(const PointBatch& a, const PointBatch& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("w2_squared: batch sizes differ (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
  if (a.dim() != b.dim()) throw std::invalid_argument("w2_squared: dimensions differ");
  a.validate();
  b.validate();
  const Matrix c = coupling::cost_matrix(a, b);
  const std::vector<int> perm = coupling::solve_assignment(c);
  double total = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) total += c(Eigen::Index(i), perm[i]);
  return total / double(perm.size());
}

double straightness(const nn::MlpParams& params, FlowMode mode, const PointBatch& probes, int k,
                    double data_scale) {
  if (!(data_scale > 0.0)) throw std::invalid_argument("straightness: data_scale must be > 0");
  const PointBatch one = generate(params, mode, probes, 1);
  const PointBatch many = generate(params, mode, probes, k);
  const double mean = (many.points - one.points).rowwise().norm().mean();
  return mean / data_scale;
}

std::vector<W2Estimate> estimate_w2(const nn::MlpParams& params, FlowMode mode,
                                    const data::Sampler& source, const data::Sampler& target,
                                    std::span<const int> nfes, std::size_t n, int repetitions,
                                    Rng& rng) {
  if (repetitions < 1) throw std::invalid_argument("estimate_w2: repetitions must be >= 1");
  std::vector<W2Estimate> out(nfes.size());
  for (std::size_t k = 0; k < nfes.size(); ++k) out[k].nfe = nfes[k];
  using clock = std::chrono::steady_clock;
  for (int rep = 0; rep < repetitions; ++rep) {
    const PointBatch x0 = source.sample(n, rng);
    const PointBatch y = target.sample(n, rng);
    for (auto& est : out) {
      const auto start = clock::now();
      est.values.push_back(w2_squared(generate(params, mode, x0, est.nfe), y));
      est.wall_ms += std::chrono::duration<double, std::milli>(clock::now() - start).count();
    }
  }
  for (auto& est : out) {
    double sum = 0.0;
    for (double v : est.values) sum += v;
    est.mean = sum / double(est.values.size());
  }
  return out;
}

void write_metrics_csv(std::span<const MetricRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "name,nfe,value,wall_ms\n";
  for (const auto& r : rows) out << r.name << ',' << r.nfe << ',' << r.value << ',' << r.wall_ms << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_scatter_svg(const PointBatch& generated, const PointBatch& target,
                       const std::filesystem::path& path) {
  if (generated.dim() < 2 || target.dim() < 2) {
    throw std::invalid_argument("scatter: need at least two coordinates");
  }
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x;
  double lo_y = lo_x, hi_y = -lo_x;
  for (const PointBatch* b : {&target, &generated}) {
    if (b->size() == 0) continue;
    lo_x = std::min(lo_x, b->points.col(0).minCoeff());
    hi_x = std::max(hi_x, b->points.col(0).maxCoeff());
    lo_y = std::min(lo_y, b->points.col(1).minCoeff());
    hi_y = std::max(hi_y, b->points.col(1).maxCoeff());
  }
  if (!(hi_x >= lo_x)) lo_x = hi_x = lo_y = hi_y = 0.0;
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
  const double size = 480.0, pad = 16.0;
  const double k = (size - 2 * pad) / span;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  auto dots = [&](const PointBatch& b, const char* colour) {
    out << "<g fill=\"" << colour << "\" fill-opacity=\"0.5\">\n";
    for (Eigen::Index i = 0; i < b.points.rows(); ++i) {
      const double px = pad + (b.points(i, 0) - lo_x) * k;
      const double py = size - pad - (b.points(i, 1) - lo_y) * k;
      out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"1.5\"/>\n";
    }
    out << "</g>\n";
  };
  dots(target, "#999999");
  dots(generated, "#1f5fbf");
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace otmf::inference
