#include <cmath>
#include <numeric>
#include <stdexcept>

#include "otmf/coupling.hpp"

namespace otmf::coupling {

void CouplingSpec::validate() const {
  if (!(sinkhorn.epsilon > 0.0)) throw std::invalid_argument("coupling: epsilon must be > 0");
  if (sinkhorn.max_iters < 1) throw std::invalid_argument("coupling: sinkhorn max_iters < 1");
  if (!(sinkhorn.tol > 0.0)) throw std::invalid_argument("coupling: sinkhorn tol must be > 0");
  if (sliced.num_projections < 1) {
    throw std::invalid_argument("coupling: sliced num_projections must be >= 1");
  }
  if (!(sliced.temperature >= 0.0)) {
    throw std::invalid_argument("coupling: sliced temperature must be >= 0");
  }
}

TransportPlan couple(const CouplingSpec& spec, const PointBatch& source,
                     const PointBatch& target, Rng& rng) {
  const std::size_t n = source.size();
  const std::size_t m = target.size();
  switch (spec.kind) {
    case CouplingKind::independent: {
      if (n != m) throw std::invalid_argument("independent coupling needs equal batch sizes");
      std::vector<int> id(n);
      std::iota(id.begin(), id.end(), 0);
      return TransportPlan::from_permutation(std::move(id));
    }
    case CouplingKind::exact:
      return solve_exact(cost_matrix(source, target), uniform_weights(n), uniform_weights(m));
    case CouplingKind::sinkhorn:
      return solve_sinkhorn(cost_matrix(source, target), uniform_weights(n),
                            uniform_weights(m), spec.sinkhorn)
          .plan;
    case CouplingKind::lot_lr:
    case CouplingKind::lot_hr: {
      std::size_t r = spec.lot_rank;
      if (r == 0) r = std::size_t(std::ceil(std::sqrt(double(std::max(n, m)))));
      const PivotMeasure pivot = build_pivot(source, target, r, spec.pivot_method, rng);
      return spec.kind == CouplingKind::lot_lr ? solve_lot_lr(source, target, pivot)
                                               : solve_lot_hr(source, target, pivot);
    }
    case CouplingKind::sliced:
      return solve_sliced(source, target, spec.sliced, rng);
  }
  throw std::logic_error("unhandled coupling kind");
}

}  // namespace otmf::coupling
