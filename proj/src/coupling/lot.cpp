#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "otmf/coupling.hpp"

namespace otmf::coupling {

namespace {

Matrix stack(const PointBatch& a, const PointBatch& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("pivot: batches differ in dimension");
  Matrix u(a.points.rows() + b.points.rows(), a.points.cols());
  u << a.points, b.points;
  return u;
}

double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

PivotMeasure kmeans_pivot(const Matrix& pts, std::size_t r, Rng& rng) {
  const Eigen::Index n = pts.rows();
  const auto k = Eigen::Index(r);
  Matrix centers(k, pts.cols());

  // k-means++ seeding.
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = pts.row(first(rng));
  Vector d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = sq_dist(pts, i, centers, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double u = unif(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (u < acc && d2(i) > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centers.row(c) = pts.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), sq_dist(pts, i, centers, c));
  }

  // Lloyd iterations.
  std::vector<Eigen::Index> label(std::size_t(n), -1);
  std::vector<Eigen::Index> count(std::size_t(k), 0);
  constexpr int kMaxLloyd = 50;
  for (int iter = 0; iter < kMaxLloyd; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double dd = sq_dist(pts, i, centers, c);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      if (label[std::size_t(i)] != best) {
        label[std::size_t(i)] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    Matrix sums = Matrix::Zero(k, pts.cols());
    std::fill(count.begin(), count.end(), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(label[std::size_t(i)]) += pts.row(i);
      ++count[std::size_t(label[std::size_t(i)])];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (count[std::size_t(c)] > 0) {
        centers.row(c) = sums.row(c) / double(count[std::size_t(c)]);
      } else {
        // Re-seed an empty cluster at the point farthest from its centre.
        Eigen::Index far = 0;
        double fd = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double dd = sq_dist(pts, i, centers, label[std::size_t(i)]);
          if (dd > fd) {
            fd = dd;
            far = i;
          }
        }
        centers.row(c) = pts.row(far);
      }
    }
  }

  // Final labels against the final centres; empty clusters are dropped.
  std::fill(count.begin(), count.end(), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < k; ++c) {
      const double dd = sq_dist(pts, i, centers, c);
      if (dd < bd) {
        bd = dd;
        best = c;
      }
    }
    ++count[std::size_t(best)];
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < k; ++c) {
    if (count[std::size_t(c)] > 0) keep.push_back(c);
  }
  PivotMeasure pm;
  pm.atoms.resize(Eigen::Index(keep.size()), pts.cols());
  pm.masses.resize(Eigen::Index(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    pm.atoms.row(Eigen::Index(c)) = centers.row(keep[c]);
    pm.masses(Eigen::Index(c)) = double(count[std::size_t(keep[c])]) / double(n);
  }
  return pm;
}

PivotMeasure subsample_pivot(const Matrix& pts, std::size_t r, Rng& rng) {
  const auto n = std::size_t(pts.rows());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < r; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  PivotMeasure pm;
  pm.atoms.resize(Eigen::Index(r), pts.cols());
  for (std::size_t i = 0; i < r; ++i) pm.atoms.row(Eigen::Index(i)) = pts.row(Eigen::Index(idx[i]));
  pm.masses = uniform_weights(r);
  return pm;
}

void check_pivot(const PivotMeasure& pivot, int dim) {
  if (pivot.atoms.rows() == 0 || pivot.atoms.rows() != pivot.masses.size()) {
    throw std::invalid_argument("LOT: malformed pivot measure");
  }
  if (pivot.atoms.cols() != dim) throw std::invalid_argument("LOT: pivot dimension mismatch");
  if ((pivot.masses.array() <= 0.0).any()) {
    throw std::invalid_argument("LOT: pivot masses must all be positive");
  }
}

struct PivotPlans {
  // Per pivot atom: (index, mass) of its support in source / target.
  std::vector<std::vector<std::pair<int, double>>> src;
  std::vector<std::vector<std::pair<int, double>>> tgt;
};

PivotPlans pivot_plans(const PointBatch& source, const PointBatch& target,
                       const PivotMeasure& pivot) {
  source.validate();
  target.validate();
  check_pivot(pivot, source.dim());
  if (source.dim() != target.dim()) throw std::invalid_argument("LOT: dimension mismatch");
  const PointBatch atoms(pivot.atoms);
  const TransportPlan g1 =
      solve_exact(cost_matrix(atoms, source), pivot.masses, uniform_weights(source.size()));
  const TransportPlan g2 =
      solve_exact(cost_matrix(atoms, target), pivot.masses, uniform_weights(target.size()));
  PivotPlans pp;
  const auto r = std::size_t(pivot.masses.size());
  pp.src.resize(r);
  pp.tgt.resize(r);
  for (const auto& t : g1.to_triplets()) {
    if (t.mass > 0.0) pp.src[std::size_t(t.row)].emplace_back(t.col, t.mass);
  }
  for (const auto& t : g2.to_triplets()) {
    if (t.mass > 0.0) pp.tgt[std::size_t(t.row)].emplace_back(t.col, t.mass);
  }
  return pp;
}

}  // namespace

PivotMeasure build_pivot(const PointBatch& source, const PointBatch& target, std::size_t r,
                         PivotMethod method, Rng& rng) {
  source.validate();
  target.validate();
  const Matrix pts = stack(source, target);
  if (r == 0 || r > std::size_t(pts.rows())) {
    throw std::invalid_argument("build_pivot: rank " + std::to_string(r) +
                                " must lie in [1, " + std::to_string(pts.rows()) + "]");
  }
  return method == PivotMethod::kmeans ? kmeans_pivot(pts, r, rng)
                                       : subsample_pivot(pts, r, rng);
}

TransportPlan solve_lot_lr(const PointBatch& source, const PointBatch& target,
                           const PivotMeasure& pivot) {
  const PivotPlans pp = pivot_plans(source, target, pivot);
  const auto n = Eigen::Index(source.size());
  const auto m = Eigen::Index(target.size());
  Matrix plan = Matrix::Zero(n, m);
  for (std::size_t i = 0; i < pp.src.size(); ++i) {
    const double inv_sigma = 1.0 / pivot.masses(Eigen::Index(i));
    for (const auto& [y, wy] : pp.tgt[i]) {
      const double wy_s = wy * inv_sigma;
      for (const auto& [x, wx] : pp.src[i]) plan(x, y) += wx * wy_s;
    }
  }
  return TransportPlan::from_dense(std::move(plan), uniform_weights(source.size()),
                                   uniform_weights(target.size()));
}

TransportPlan solve_lot_hr(const PointBatch& source, const PointBatch& target,
                           const PivotMeasure& pivot) {
  const PivotPlans pp = pivot_plans(source, target, pivot);
  std::vector<Triplet> entries;
  for (std::size_t i = 0; i < pp.src.size(); ++i) {
    const auto& s1 = pp.src[i];
    const auto& s2 = pp.tgt[i];
    if (s1.empty() || s2.empty()) {
      throw std::runtime_error("LOT-HR: pivot atom " + std::to_string(i) +
                               " has an empty conditional support");
    }
    const double sigma = pivot.masses(Eigen::Index(i));
    Matrix block(Eigen::Index(s1.size()), Eigen::Index(s2.size()));
    Vector mu1(Eigen::Index(s1.size())), mu2(Eigen::Index(s2.size()));
    for (std::size_t a = 0; a < s1.size(); ++a) mu1(Eigen::Index(a)) = s1[a].second / sigma;
    for (std::size_t b = 0; b < s2.size(); ++b) mu2(Eigen::Index(b)) = s2[b].second / sigma;
    for (std::size_t b = 0; b < s2.size(); ++b) {
      for (std::size_t a = 0; a < s1.size(); ++a) {
        block(Eigen::Index(a), Eigen::Index(b)) =
            (source.points.row(s1[a].first) - target.points.row(s2[b].first)).squaredNorm();
      }
    }
    const TransportPlan local = solve_exact(block, mu1, mu2);
    for (const auto& t : local.to_triplets()) {
      if (t.mass > 0.0) {
        entries.push_back({s1[std::size_t(t.row)].first, s2[std::size_t(t.col)].first,
                           sigma * t.mass});
      }
    }
  }
  return TransportPlan::from_triplets(std::move(entries), uniform_weights(source.size()),
                                      uniform_weights(target.size()));
}

}  // namespace otmf::coupling
