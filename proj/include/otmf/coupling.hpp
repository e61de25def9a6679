#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "otmf/common.hpp"
#include "otmf/datasets.hpp"

namespace otmf::coupling {

using data::PointBatch;

/// Pairwise squared Euclidean distances, n x m.
Matrix cost_matrix(const PointBatch& a, const PointBatch& b);

Vector uniform_weights(std::size_t n);

struct Triplet {
  int row = 0;
  int col = 0;
  double mass = 0.0;
};

/// A coupling between a source batch (rows) and a target batch (columns).
class TransportPlan {
 public:
  enum class Kind { permutation, dense, sparse };

  /// Row i is matched to column perm[i]; every pair carries mass 1/n.
  static TransportPlan from_permutation(std::vector<int> perm);
  static TransportPlan from_dense(Matrix mass, Vector p, Vector q);
  static TransportPlan from_triplets(std::vector<Triplet> entries, Vector p, Vector q);

  Kind kind() const { return kind_; }
  std::size_t rows() const { return static_cast<std::size_t>(p_.size()); }
  std::size_t cols() const { return static_cast<std::size_t>(q_.size()); }
  const Vector& row_marginal() const { return p_; }
  const Vector& col_marginal() const { return q_; }

  const std::vector<int>& permutation() const;
  const Matrix& dense() const;
  const std::vector<Triplet>& triplets() const;

  Matrix to_dense() const;
  /// Non-zero entries in row-major order regardless of representation.
  std::vector<Triplet> to_triplets() const;
  Vector row_sums() const;
  Vector col_sums() const;
  /// <C, plan>
  double cost(const Matrix& c) const;
  /// L1 distance of the row and column sums from p and q, added.
  double marginal_residual() const;

 private:
  Kind kind_ = Kind::dense;
  std::vector<int> perm_;
  Matrix dense_;
  std::vector<Triplet> sparse_;
  Vector p_;
  Vector q_;
};

/// Minimum-cost perfect matching of a square cost matrix. Returns the column
/// assigned to every row. Shortest augmenting paths with column-reduction
/// start; ties go to the lowest index.
std::vector<int> solve_assignment(const Matrix& cost);

/// Exact transportation problem for arbitrary weights by the primal network
/// simplex on the bipartite graph. The plan is a basic (vertex) solution
/// with at most n + m - 1 non-zero entries.
TransportPlan solve_transport_simplex(const Matrix& cost, const Vector& p, const Vector& q);

/// Exact OT. Equal-size uniform problems go to solve_assignment; anything
/// else to the network simplex. Throws if the weights are not on the simplex
/// or their totals differ by more than 1e-9.
TransportPlan solve_exact(const Matrix& cost, const Vector& p, const Vector& q);

struct SinkhornOptions {
  double epsilon = 0.05;
  /// If true the effective regulariser is epsilon * mean(C).
  bool epsilon_relative = true;
  int max_iters = 1000;
  double tol = 1e-6;
};

struct SinkhornResult {
  TransportPlan plan;
  int iterations = 0;
  double residual = 0.0;  // L1 row-marginal error when the iterations stopped
  bool converged = false;
  double epsilon = 0.0;   // absolute regulariser used
};

/// Entropic OT, plan = diag(a) exp(-C/eps) diag(b). Runs in the log-stabilised
/// scaling form: dual potentials absorb the scalings whenever those grow
/// large. The scaled kernel is then rounded onto the plans with marginals
/// exactly p and q; `residual` and `converged` describe the iterations before
/// that. Throws std::domain_error if values become non-finite.
SinkhornResult solve_sinkhorn(const Matrix& cost, const Vector& p, const Vector& q,
                              const SinkhornOptions& opt);

enum class PivotMethod { kmeans, subsample };

struct PivotMeasure {
  Matrix atoms;   // r x d
  Vector masses;  // simplex vector, all > 0
};

/// Reference measure for linear OT. k-means runs Lloyd iterations on the
/// union of both batches (k-means++ seeding) and weights atoms by cluster
/// share; subsample draws r distinct points of the union with uniform mass.
PivotMeasure build_pivot(const PointBatch& source, const PointBatch& target, std::size_t r,
                         PivotMethod method, Rng& rng);

/// (g1)^T diag(1/sigma) g2 with g1 = OT(pivot, source), g2 = OT(pivot, target).
TransportPlan solve_lot_lr(const PointBatch& source, const PointBatch& target,
                           const PivotMeasure& pivot);

/// Block-wise exact OT between the conditionals of g1 and g2 at every pivot
/// atom, scaled by its mass. Overlapping blocks accumulate.
TransportPlan solve_lot_hr(const PointBatch& source, const PointBatch& target,
                           const PivotMeasure& pivot);

enum class SlicedAggregation { min, expect, temp };

struct SlicedOptions {
  int num_projections = 32;
  SlicedAggregation aggregation = SlicedAggregation::min;
  double temperature = 0.0;  // lambda >= 0, temp aggregation only
};

/// Monotone 1D matchings along random unit directions, aggregated.
TransportPlan solve_sliced(const PointBatch& source, const PointBatch& target,
                           const SlicedOptions& opt, Rng& rng);
/// Same, along the given directions (rows of `directions`, need not be unit).
TransportPlan solve_sliced(const PointBatch& source, const PointBatch& target,
                           const Matrix& directions, const SlicedOptions& opt);

/// Training pairs drawn from a plan. Permutations give their matched pairs;
/// other plans draw one column per source row from gamma(j | i). With k < n
/// a random subset of k rows is used.
std::vector<std::pair<int, int>> sample_pairs(const TransportPlan& plan, std::size_t k, Rng& rng);

enum class CouplingKind { independent, exact, sinkhorn, lot_lr, lot_hr, sliced };

std::string to_string(CouplingKind k);
CouplingKind parse_coupling_kind(const std::string& name);
std::string to_string(SlicedAggregation a);
SlicedAggregation parse_sliced_aggregation(const std::string& name);
std::string to_string(PivotMethod m);
PivotMethod parse_pivot_method(const std::string& name);

struct CouplingSpec {
  CouplingKind kind = CouplingKind::exact;
  SinkhornOptions sinkhorn;
  std::size_t lot_rank = 0;  // 0: ceil(sqrt(batch size))
  PivotMethod pivot_method = PivotMethod::kmeans;
  SlicedOptions sliced;

  void validate() const;
};

/// Builds the mini-batch plan for a source/target batch pair. Independent
/// coupling pairs rows in draw order.
TransportPlan couple(const CouplingSpec& spec, const PointBatch& source,
                     const PointBatch& target, Rng& rng);

/// "i,j,mass" rows with a header, non-zero entries only.
void write_plan_csv(const TransportPlan& plan, const std::filesystem::path& path);

}  // namespace otmf::coupling
