#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "otmf/coupling.hpp"

namespace otmf::coupling {

namespace {

// Indices sorted by projected value, ties by index.
std::vector<int> sorted_order(const Vector& proj) {
  std::vector<int> order(std::size_t(proj.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return proj(a) < proj(b); });
  return order;
}

}  // namespace

TransportPlan solve_sliced(const PointBatch& source, const PointBatch& target,
                           const Matrix& directions, const SlicedOptions& opt) {
  source.validate();
  target.validate();
  if (source.size() != target.size()) {
    throw std::invalid_argument("sliced OT: batches must have equal size (" +
                                std::to_string(source.size()) + " vs " +
                                std::to_string(target.size()) + ")");
  }
  if (source.dim() != target.dim() || directions.cols() != source.dim()) {
    throw std::invalid_argument("sliced OT: dimension mismatch");
  }
  if (directions.rows() < 1) throw std::invalid_argument("sliced OT: need >= 1 direction");
  if (!(opt.temperature >= 0.0)) throw std::invalid_argument("sliced OT: temperature < 0");

  const std::size_t n = source.size();
  const Matrix c = cost_matrix(source, target);
  const auto L = std::size_t(directions.rows());
  std::vector<std::vector<int>> perms(L);
  std::vector<double> costs(L);
  for (std::size_t l = 0; l < L; ++l) {
    const Vector theta = directions.row(Eigen::Index(l)).transpose();
    const std::vector<int> os = sorted_order(source.points * theta);
    const std::vector<int> ot = sorted_order(target.points * theta);
    std::vector<int> perm(n);
    for (std::size_t k = 0; k < n; ++k) perm[std::size_t(os[k])] = ot[k];
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c(Eigen::Index(i), perm[i]);
    costs[l] = s / double(n);
    perms[l] = std::move(perm);
  }

  if (opt.aggregation == SlicedAggregation::min) {
    const auto best = std::size_t(std::min_element(costs.begin(), costs.end()) - costs.begin());
    return TransportPlan::from_permutation(std::move(perms[best]));
  }

  std::vector<double> w(L);
  if (opt.aggregation == SlicedAggregation::expect) {
    std::fill(w.begin(), w.end(), 1.0 / double(L));
  } else {
    const double lo = *std::min_element(costs.begin(), costs.end());
    double total = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      w[l] = std::exp(-opt.temperature * (costs[l] - lo));
      total += w[l];
    }
    for (double& x : w) x /= total;
  }
  Matrix plan = Matrix::Zero(Eigen::Index(n), Eigen::Index(n));
  const double inv_n = 1.0 / double(n);
  for (std::size_t l = 0; l < L; ++l) {
    const double mass = w[l] * inv_n;
    for (std::size_t i = 0; i < n; ++i) plan(Eigen::Index(i), perms[l][i]) += mass;
  }
  return TransportPlan::from_dense(std::move(plan), uniform_weights(n), uniform_weights(n));
}

TransportPlan solve_sliced(const PointBatch& source, const PointBatch& target,
                           const SlicedOptions& opt, Rng& rng) {
  if (opt.num_projections < 1) throw std::invalid_argument("sliced OT: num_projections < 1");
  const int d = source.dim();
  Matrix dirs(opt.num_projections, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index l = 0; l < dirs.rows(); ++l) {
    double norm = 0.0;
    do {
      for (int k = 0; k < d; ++k) dirs(l, k) = normal(rng);
      norm = dirs.row(l).norm();
    } while (!(norm > 1e-12));
    dirs.row(l) /= norm;
  }
  return solve_sliced(source, target, dirs, opt);
}

}  // namespace otmf::coupling
