#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "otmf/coupling.hpp"

namespace otmf::coupling {

Matrix cost_matrix(const PointBatch& a, const PointBatch& b) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("cost_matrix: dimension mismatch (" + std::to_string(a.dim()) +
                                " vs " + std::to_string(b.dim()) + ")");
  }
  const Eigen::Index n = a.points.rows();
  const Eigen::Index m = b.points.rows();
  const Eigen::Index d = a.points.cols();
  Matrix c(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = a.points(i, k) - b.points(j, k);
        s += diff * diff;
      }
      c(i, j) = s;
    }
  }
  return c;
}

Vector uniform_weights(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_weights: n must be >= 1");
  return Vector::Constant(Eigen::Index(n), 1.0 / double(n));
}

TransportPlan TransportPlan::from_permutation(std::vector<int> perm) {
  const auto n = perm.size();
  if (n == 0) throw std::invalid_argument("permutation plan must be non-empty");
  std::vector<char> seen(n, 0);
  for (int j : perm) {
    if (j < 0 || std::size_t(j) >= n || seen[std::size_t(j)]) {
      throw std::invalid_argument("not a permutation");
    }
    seen[std::size_t(j)] = 1;
  }
  TransportPlan plan;
  plan.kind_ = Kind::permutation;
  plan.perm_ = std::move(perm);
  plan.p_ = uniform_weights(n);
  plan.q_ = plan.p_;
  return plan;
}

TransportPlan TransportPlan::from_dense(Matrix mass, Vector p, Vector q) {
  if (mass.rows() != p.size() || mass.cols() != q.size()) {
    throw std::invalid_argument("dense plan: shape does not match marginals");
  }
  if (!mass.allFinite() || (mass.array() < 0.0).any()) {
    throw std::invalid_argument("dense plan: masses must be finite and >= 0");
  }
  TransportPlan plan;
  plan.kind_ = Kind::dense;
  plan.dense_ = std::move(mass);
  plan.p_ = std::move(p);
  plan.q_ = std::move(q);
  return plan;
}

TransportPlan TransportPlan::from_triplets(std::vector<Triplet> entries, Vector p, Vector q) {
  for (const auto& t : entries) {
    if (t.row < 0 || t.row >= p.size() || t.col < 0 || t.col >= q.size()) {
      throw std::invalid_argument("sparse plan: index out of range");
    }
    if (!(t.mass >= 0.0) || !std::isfinite(t.mass)) {
      throw std::invalid_argument("sparse plan: masses must be finite and >= 0");
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  // Merge duplicates (overlapping LOT-HR blocks add up).
  std::vector<Triplet> merged;
  merged.reserve(entries.size());
  for (const auto& t : entries) {
    if (!merged.empty() && merged.back().row == t.row && merged.back().col == t.col) {
      merged.back().mass += t.mass;
    } else {
      merged.push_back(t);
    }
  }
  TransportPlan plan;
  plan.kind_ = Kind::sparse;
  plan.sparse_ = std::move(merged);
  plan.p_ = std::move(p);
  plan.q_ = std::move(q);
  return plan;
}

const std::vector<int>& TransportPlan::permutation() const {
  if (kind_ != Kind::permutation) throw std::logic_error("plan is not a permutation");
  return perm_;
}

const Matrix& TransportPlan::dense() const {
  if (kind_ != Kind::dense) throw std::logic_error("plan is not dense");
  return dense_;
}

const std::vector<Triplet>& TransportPlan::triplets() const {
  if (kind_ != Kind::sparse) throw std::logic_error("plan is not sparse");
  return sparse_;
}

Matrix TransportPlan::to_dense() const {
  switch (kind_) {
    case Kind::dense: return dense_;
    case Kind::permutation: {
      Matrix m = Matrix::Zero(p_.size(), q_.size());
      const double w = 1.0 / double(perm_.size());
      for (std::size_t i = 0; i < perm_.size(); ++i) m(Eigen::Index(i), perm_[i]) = w;
      return m;
    }
    case Kind::sparse: {
      Matrix m = Matrix::Zero(p_.size(), q_.size());
      for (const auto& t : sparse_) m(t.row, t.col) += t.mass;
      return m;
    }
  }
  return {};
}

std::vector<Triplet> TransportPlan::to_triplets() const {
  switch (kind_) {
    case Kind::sparse: return sparse_;
    case Kind::permutation: {
      std::vector<Triplet> out;
      const double w = 1.0 / double(perm_.size());
      for (std::size_t i = 0; i < perm_.size(); ++i) out.push_back({int(i), perm_[i], w});
      return out;
    }
    case Kind::dense: {
      std::vector<Triplet> out;
      for (Eigen::Index i = 0; i < dense_.rows(); ++i) {
        for (Eigen::Index j = 0; j < dense_.cols(); ++j) {
          if (dense_(i, j) > 0.0) out.push_back({int(i), int(j), dense_(i, j)});
        }
      }
      return out;
    }
  }
  return {};
}

Vector TransportPlan::row_sums() const {
  if (kind_ == Kind::dense) return dense_.rowwise().sum();
  Vector s = Vector::Zero(p_.size());
  for (const auto& t : to_triplets()) s(t.row) += t.mass;
  return s;
}

Vector TransportPlan::col_sums() const {
  if (kind_ == Kind::dense) return dense_.colwise().sum().transpose();
  Vector s = Vector::Zero(q_.size());
  for (const auto& t : to_triplets()) s(t.col) += t.mass;
  return s;
}

double TransportPlan::cost(const Matrix& c) const {
  if (c.rows() != p_.size() || c.cols() != q_.size()) {
    throw std::invalid_argument("plan cost: cost matrix shape mismatch");
  }
  switch (kind_) {
    case Kind::permutation: {
      double s = 0.0;
      for (std::size_t i = 0; i < perm_.size(); ++i) s += c(Eigen::Index(i), perm_[i]);
      return s / double(perm_.size());
    }
    case Kind::dense: return dense_.cwiseProduct(c).sum();
    case Kind::sparse: {
      double s = 0.0;
      for (const auto& t : sparse_) s += t.mass * c(t.row, t.col);
      return s;
    }
  }
  return 0.0;
}

double TransportPlan::marginal_residual() const {
  return (row_sums() - p_).lpNorm<1>() + (col_sums() - q_).lpNorm<1>();
}

std::vector<std::pair<int, int>> sample_pairs(const TransportPlan& plan, std::size_t k, Rng& rng) {
  const std::size_t n = plan.rows();
  if (k == 0 || k > n) {
    throw std::invalid_argument("sample_pairs: k must lie in [1, " + std::to_string(n) + "]");
  }
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  if (k < n) {
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(rows[i], rows[pick(rng)]);
    }
    rows.resize(k);
    std::sort(rows.begin(), rows.end());
  }

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(k);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  auto zero_row = [](int i) {
    return std::invalid_argument("sample_pairs: row " + std::to_string(i) + " has zero mass");
  };

  switch (plan.kind()) {
    case TransportPlan::Kind::permutation: {
      const auto& perm = plan.permutation();
      for (int i : rows) pairs.emplace_back(i, perm[std::size_t(i)]);
      break;
    }
    case TransportPlan::Kind::dense: {
      const Matrix& g = plan.dense();
      for (int i : rows) {
        const double total = g.row(i).sum();
        if (!(total > 0.0)) throw zero_row(i);
        const double u = unif(rng) * total;
        double acc = 0.0;
        int chosen = -1;
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
          if (g(i, j) <= 0.0) continue;
          chosen = int(j);
          acc += g(i, j);
          if (u < acc) break;
        }
        pairs.emplace_back(i, chosen);
      }
      break;
    }
    case TransportPlan::Kind::sparse: {
      const auto& trip = plan.triplets();  // sorted by row
      std::vector<std::size_t> start(n + 1, 0);
      for (const auto& t : trip) ++start[std::size_t(t.row) + 1];
      std::partial_sum(start.begin(), start.end(), start.begin());
      for (int i : rows) {
        double total = 0.0;
        for (std::size_t e = start[std::size_t(i)]; e < start[std::size_t(i) + 1]; ++e) {
          total += trip[e].mass;
        }
        if (!(total > 0.0)) throw zero_row(i);
        const double u = unif(rng) * total;
        double acc = 0.0;
        int chosen = -1;
        for (std::size_t e = start[std::size_t(i)]; e < start[std::size_t(i) + 1]; ++e) {
          if (trip[e].mass <= 0.0) continue;
          chosen = trip[e].col;
          acc += trip[e].mass;
          if (u < acc) break;
        }
        pairs.emplace_back(i, chosen);
      }
      break;
    }
  }
  return pairs;
}

void write_plan_csv(const TransportPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plan file " + path.string());
  out.precision(17);
  out << "i,j,mass\n";
  for (const auto& t : plan.to_triplets()) {
    if (t.mass > 0.0) out << t.row << ',' << t.col << ',' << t.mass << '\n';
  }
}

std::string to_string(CouplingKind k) {
  switch (k) {
    case CouplingKind::independent: return "independent";
    case CouplingKind::exact: return "exact";
    case CouplingKind::sinkhorn: return "sinkhorn";
    case CouplingKind::lot_lr: return "lot_lr";
    case CouplingKind::lot_hr: return "lot_hr";
    case CouplingKind::sliced: return "sliced";
  }
  return "exact";
}

CouplingKind parse_coupling_kind(const std::string& name) {
  if (name == "independent" || name == "mf") return CouplingKind::independent;
  if (name == "exact" || name == "ot") return CouplingKind::exact;
  if (name == "sinkhorn") return CouplingKind::sinkhorn;
  if (name == "lot_lr") return CouplingKind::lot_lr;
  if (name == "lot_hr") return CouplingKind::lot_hr;
  if (name == "sliced") return CouplingKind::sliced;
  throw std::invalid_argument("unknown coupling '" + name + "'");
}

std::string to_string(SlicedAggregation a) {
  switch (a) {
    case SlicedAggregation::min: return "min";
    case SlicedAggregation::expect: return "expect";
    case SlicedAggregation::temp: return "temp";
  }
  return "min";
}

SlicedAggregation parse_sliced_aggregation(const std::string& name) {
  if (name == "min") return SlicedAggregation::min;
  if (name == "expect") return SlicedAggregation::expect;
  if (name == "temp") return SlicedAggregation::temp;
  throw std::invalid_argument("unknown sliced aggregation '" + name + "'");
}

std::string to_string(PivotMethod m) {
  return m == PivotMethod::kmeans ? "kmeans" : "subsample";
}

PivotMethod parse_pivot_method(const std::string& name) {
  if (name == "kmeans") return PivotMethod::kmeans;
  if (name == "subsample") return PivotMethod::subsample;
  throw std::invalid_argument("unknown pivot method '" + name + "'");
}

}  // namespace otmf::coupling
