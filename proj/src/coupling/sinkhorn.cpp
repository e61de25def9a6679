#include <cmath>
#include <stdexcept>
#include <string>

#include "otmf/coupling.hpp"

namespace otmf::coupling {

namespace {

// Scalings beyond e^{+-kAbsorb} are folded into the dual potentials.
constexpr double kAbsorb = 100.0;

[[noreturn]] void fail(const std::string& what, double eps) {
  throw std::domain_error("sinkhorn: " + what + " at epsilon=" + std::to_string(eps) +
                          "; increase epsilon");
}

// Scales rows and columns down to their targets, then puts the missing mass
// back as a rank-one product. The result has the exact marginals and stays
// within twice the marginal error of the input (L1).
void round_to_marginals(Matrix& plan, const Vector& p, const Vector& q) {
  const Vector rs = plan.rowwise().sum();
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    if (rs(i) > p(i)) plan.row(i) *= p(i) / rs(i);
  }
  const Vector cs = plan.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < plan.cols(); ++j) {
    if (cs(j) > q(j)) plan.col(j) *= q(j) / cs(j);
  }
  const Vector er = (p - plan.rowwise().sum()).cwiseMax(0.0);
  const Vector ec = (q - plan.colwise().sum().transpose()).cwiseMax(0.0);
  const double total = er.sum();
  if (total > 0.0) plan.noalias() += er * ec.transpose() / total;
}

}  // namespace

SinkhornResult solve_sinkhorn(const Matrix& cost, const Vector& p, const Vector& q,
                              const SinkhornOptions& opt) {
  const Eigen::Index n = cost.rows();
  const Eigen::Index m = cost.cols();
  if (n == 0 || m == 0 || p.size() != n || q.size() != m) {
    throw std::invalid_argument("sinkhorn: shape mismatch");
  }
  if (!cost.allFinite()) throw std::invalid_argument("sinkhorn: non-finite cost");
  if (!(opt.epsilon > 0.0) || opt.max_iters < 1 || !(opt.tol > 0.0)) {
    throw std::invalid_argument("sinkhorn: need epsilon > 0, max_iters >= 1, tol > 0");
  }
  if ((p.array() <= 0.0).any() || (q.array() <= 0.0).any()) {
    throw std::invalid_argument("sinkhorn: weights must be positive");
  }
  if (std::abs(p.sum() - q.sum()) > 1e-9) {
    throw std::invalid_argument("sinkhorn: weight totals differ");
  }

  double eps = opt.epsilon;
  if (opt.epsilon_relative) {
    const double mean = cost.mean();
    eps *= mean > 0.0 ? mean : 1.0;
  }
  if (!(eps > 0.0) || !std::isfinite(1.0 / eps)) fail("regulariser underflows", eps);

  // c-transform start: every row and column of the kernel holds a 1.
  Vector f = cost.rowwise().minCoeff();
  Vector g = (cost.colwise() - f).colwise().minCoeff().transpose();
  Matrix kernel(n, m);
  auto rebuild = [&] {
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        kernel(i, j) = std::exp((f(i) + g(j) - cost(i, j)) / eps);
      }
    }
    if (!kernel.allFinite()) fail("kernel overflow", eps);
  };
  rebuild();

  Vector a = Vector::Ones(n);
  Vector b = Vector::Ones(m);
  Vector kb(n), kta(m);

  SinkhornResult out;
  out.epsilon = eps;
  int it = 0;
  double residual = 0.0;
  for (;; ++it) {
    kb.noalias() = kernel * b;
    if (it > 0) {
      // Columns are exact after the b-update; rows carry the error.
      residual = (a.cwiseProduct(kb) - p).lpNorm<1>();
      if (residual < opt.tol) {
        out.converged = true;
        break;
      }
    }
    if (it == opt.max_iters) break;
    a = p.cwiseQuotient(kb);
    kta.noalias() = kernel.transpose() * a;
    b = q.cwiseQuotient(kta);
    if (!a.allFinite() || !b.allFinite()) fail("scaling became non-finite", eps);
    if ((a.array() <= 0.0).any() || (b.array() <= 0.0).any()) {
      fail("scaling underflowed to zero", eps);
    }
    const double la = a.array().log().abs().maxCoeff();
    const double lb = b.array().log().abs().maxCoeff();
    if (la > kAbsorb || lb > kAbsorb) {
      f += eps * a.array().log().matrix();
      g += eps * b.array().log().matrix();
      a.setOnes();
      b.setOnes();
      rebuild();
    }
  }

  Matrix plan = a.asDiagonal() * kernel * b.asDiagonal();
  if (!plan.allFinite()) fail("plan is non-finite", eps);
  round_to_marginals(plan, p, q);
  out.iterations = it;
  out.residual = residual;
  out.plan = TransportPlan::from_dense(std::move(plan), p, q);
  return out;
}

}  // namespace otmf::coupling
