#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "otmf/coupling.hpp"

using namespace otmf;
using namespace otmf::coupling;
using otmf::data::PointBatch;

namespace {

PointBatch random_batch(std::size_t n, int d, Rng& rng, double shift = 0.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(Eigen::Index(n), d);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (int k = 0; k < d; ++k) m(i, k) = g(rng) + shift;
  return PointBatch(m);
}

PointBatch points(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(Eigen::Index(rows.size()), Eigen::Index(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return PointBatch(m);
}

double brute_force_min(const Matrix& c) {
  std::vector<int> perm(std::size_t(c.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += c(Eigen::Index(i), perm[i]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / double(c.rows());
}

// Column matched to every row by sorting both 1D batches.
std::vector<int> sorted_matching(const PointBatch& a, const PointBatch& b) {
  const auto n = a.size();
  std::vector<int> ia(n), ib(n), out(n);
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), 0);
  std::sort(ia.begin(), ia.end(), [&](int x, int y) { return a.points(x, 0) < a.points(y, 0); });
  std::sort(ib.begin(), ib.end(), [&](int x, int y) { return b.points(x, 0) < b.points(y, 0); });
  for (std::size_t k = 0; k < n; ++k) out[std::size_t(ia[k])] = ib[k];
  return out;
}

Matrix perm_matrix(const std::vector<int>& perm) {
  return TransportPlan::from_permutation(perm).to_dense();
}

}  // namespace

TEST_SUITE("coupling") {

TEST_CASE("cost matrix") {
  Rng rng(1);
  const PointBatch a = random_batch(4, 2, rng);
  const Matrix self = cost_matrix(a, a);
  CHECK(self.diagonal().isZero(0.0));
  CHECK(self == self.transpose());
  CHECK(cost_matrix(points({{0, 0}}), points({{3, 4}}))(0, 0) == 25.0);

  const PointBatch x = random_batch(5, 3, rng), y = random_batch(7, 3, rng);
  const Matrix c = cost_matrix(x, y);
  REQUIRE(c.rows() == 5);
  REQUIRE(c.cols() == 7);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 7; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += (x.points(i, k) - y.points(j, k)) * (x.points(i, k) - y.points(j, k));
      CHECK(std::abs(c(i, j) - s) < 1e-12);
    }
  CHECK_THROWS_AS(cost_matrix(x, random_batch(3, 2, rng)), std::invalid_argument);
}

TEST_CASE("exact: zero diagonal gives the identity") {
  Matrix c = Matrix::Constant(5, 5, 2.0);
  c.diagonal().setZero();
  const TransportPlan plan = solve_exact(c, uniform_weights(5), uniform_weights(5));
  REQUIRE(plan.kind() == TransportPlan::Kind::permutation);
  for (int i = 0; i < 5; ++i) CHECK(plan.permutation()[std::size_t(i)] == i);
  CHECK(plan.cost(c) == 0.0);
}

TEST_CASE("exact equals the brute-force minimum on small uniform instances") {
  Rng rng(2);
  std::uniform_int_distribution<int> size(1, 6);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = std::size_t(size(rng));
    const PointBatch a = random_batch(n, 2, rng), b = random_batch(n, 2, rng);
    const Matrix c = cost_matrix(a, b);
    const TransportPlan plan = solve_exact(c, uniform_weights(n), uniform_weights(n));
    CHECK(std::abs(plan.cost(c) - brute_force_min(c)) <= 1e-12);
  }
}

TEST_CASE("exact in 1D is the sorted matching") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const PointBatch a = random_batch(12, 1, rng), b = random_batch(12, 1, rng, 0.5);
    const TransportPlan plan = solve_exact(cost_matrix(a, b), uniform_weights(12), uniform_weights(12));
    CHECK(plan.permutation() == sorted_matching(a, b));
  }
}

TEST_CASE("network simplex on unequal weights") {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 9, m = 3 + trial % 7;
    Matrix c(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) c(i, j) = u(rng);
    Vector p(n), q(m);
    for (int i = 0; i < n; ++i) p(i) = u(rng);
    for (int j = 0; j < m; ++j) q(j) = u(rng);
    p /= p.sum();
    q /= q.sum();
    const TransportPlan plan = solve_exact(c, p, q);
    CHECK(plan.marginal_residual() < 1e-9);
    CHECK(plan.to_triplets().size() <= std::size_t(n + m - 1));
    // A vertex of the transportation polytope is no worse than the
    // north-west corner start, the product plan, or Sinkhorn at small epsilon.
    const double opt = plan.cost(c);
    CHECK(opt <= (p * q.transpose()).cwiseProduct(c).sum() + 1e-12);
    SinkhornOptions so;
    so.epsilon = 1e-3;
    so.max_iters = 20000;
    CHECK(opt <= solve_sinkhorn(c, p, q, so).plan.cost(c) + 1e-12);
  }
}

TEST_CASE("network simplex reaches the assignment optimum on uniform problems") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 3 + std::size_t(trial % 20);
    const Matrix c = cost_matrix(random_batch(n, 2, rng), random_batch(n, 2, rng));
    const double a = solve_exact(c, uniform_weights(n), uniform_weights(n)).cost(c);
    const double s = solve_transport_simplex(c, uniform_weights(n), uniform_weights(n)).cost(c);
    CHECK(std::abs(a - s) < 1e-12);
  }
}

TEST_CASE("exact input validation") {
  const Matrix c = Matrix::Ones(2, 2);
  Vector bad(2);
  bad << 0.7, 0.7;
  CHECK_THROWS_AS(solve_exact(c, bad, uniform_weights(2)), std::invalid_argument);
  CHECK_THROWS_AS(solve_exact(c, uniform_weights(3), uniform_weights(2)), std::invalid_argument);
  Matrix nan = c;
  nan(0, 1) = NAN;
  CHECK_THROWS_AS(solve_exact(nan, uniform_weights(2), uniform_weights(2)), std::invalid_argument);
  CHECK_THROWS_AS(solve_assignment(Matrix(2, 3)), std::invalid_argument);
}

TEST_CASE("sinkhorn examples") {
  Rng rng(6);
  SinkhornOptions opt;
  const Matrix one = Matrix::Constant(1, 1, 3.0);
  for (double eps : {1e-3, 1.0, 1e3}) {
    opt.epsilon = eps;
    CHECK(solve_sinkhorn(one, uniform_weights(1), uniform_weights(1), opt).plan.to_dense()(0, 0) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }

  const Matrix c = cost_matrix(random_batch(4, 2, rng), random_batch(5, 2, rng));
  opt.epsilon = 1e6 * c.maxCoeff();
  opt.epsilon_relative = false;
  const Matrix prod = uniform_weights(4) * uniform_weights(5).transpose();
  CHECK((solve_sinkhorn(c, uniform_weights(4), uniform_weights(5), opt).plan.to_dense() - prod)
            .cwiseAbs()
            .maxCoeff() < 1e-4);

  for (int trial = 0; trial < 20; ++trial) {
    const Matrix c3 = cost_matrix(random_batch(3, 2, rng), random_batch(3, 2, rng));
    SinkhornOptions o;
    o.epsilon = 0.01;
    o.max_iters = 100000;
    const SinkhornResult res = solve_sinkhorn(c3, uniform_weights(3), uniform_weights(3), o);
    const double exact = solve_exact(c3, uniform_weights(3), uniform_weights(3)).cost(c3);
    CHECK(res.plan.cost(c3) <= 1.05 * exact + 1e-12);
  }
}

TEST_CASE("sinkhorn marginals and stabilisation at small epsilon") {
  Rng rng(7);
  const Matrix c = cost_matrix(random_batch(64, 2, rng), random_batch(64, 2, rng, 3.0));
  SinkhornOptions opt;
  opt.epsilon = 1e-3;
  opt.max_iters = 50000;
  const SinkhornResult res = solve_sinkhorn(c, uniform_weights(64), uniform_weights(64), opt);
  CHECK(res.converged);
  CHECK(res.plan.marginal_residual() < 1e-6);
  CHECK(res.plan.to_dense().allFinite());
  CHECK(res.plan.cost(c) >= solve_exact(c, uniform_weights(64), uniform_weights(64)).cost(c) - 1e-12);

  opt.epsilon = 1e-320;
  opt.epsilon_relative = false;
  CHECK_THROWS_WITH_AS(solve_sinkhorn(c, uniform_weights(64), uniform_weights(64), opt),
                       doctest::Contains("increase epsilon"), std::domain_error);
}

TEST_CASE("pivot measures") {
  Rng rng(8);
  const PointBatch a = random_batch(10, 2, rng), b = random_batch(10, 2, rng, 1.0);
  const PivotMeasure one = build_pivot(a, b, 1, PivotMethod::kmeans, rng);
  REQUIRE(one.atoms.rows() == 1);
  CHECK(one.masses(0) == doctest::Approx(1.0));
  Matrix all(20, 2);
  all << a.points, b.points;
  CHECK((one.atoms.row(0) - all.colwise().mean()).norm() < 1e-12);

  const PivotMeasure sub = build_pivot(a, a, 20, PivotMethod::subsample, rng);
  std::vector<int> used(10, 0);
  for (Eigen::Index k = 0; k < sub.atoms.rows(); ++k) {
    for (Eigen::Index i = 0; i < 10; ++i)
      if (sub.atoms.row(k) == a.points.row(i)) ++used[std::size_t(i)];
  }
  for (int u : used) CHECK(u == 2);  // the union holds every point twice

  Rng r1(9), r2(9);
  const PivotMeasure p1 = build_pivot(a, b, 4, PivotMethod::kmeans, r1);
  const PivotMeasure p2 = build_pivot(a, b, 4, PivotMethod::kmeans, r2);
  CHECK(p1.atoms == p2.atoms);
  CHECK(p1.masses == p2.masses);
  CHECK(p1.masses.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((p1.masses.array() > 0.0).all());
  CHECK_THROWS_AS(build_pivot(a, b, 0, PivotMethod::kmeans, rng), std::invalid_argument);
  CHECK_THROWS_AS(build_pivot(a, b, 21, PivotMethod::kmeans, rng), std::invalid_argument);
}

TEST_CASE("linear OT with the batch itself as pivot") {
  Rng rng(10);
  const PointBatch a = random_batch(6, 2, rng);
  const PivotMeasure self{a.points, uniform_weights(6)};
  const Matrix diag = Matrix(uniform_weights(6).asDiagonal());
  CHECK((solve_lot_lr(a, a, self).to_dense() - diag).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((solve_lot_hr(a, a, self).to_dense() - diag).cwiseAbs().maxCoeff() < 1e-12);

  // Well separated clusters: the pivot plans are forced, so LR recovers the
  // exact plan.
  const PointBatch src = points({{0, 0}, {10, 0}, {0, 10}, {10, 10}});
  const PointBatch tgt = points({{10.5, 10}, {0.5, 0}, {10.5, 0}, {0.5, 10}});
  const PivotMeasure piv{src.points, uniform_weights(4)};
  const Matrix exact =
      solve_exact(cost_matrix(src, tgt), uniform_weights(4), uniform_weights(4)).to_dense();
  CHECK((solve_lot_lr(src, tgt, piv).to_dense() - exact).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((solve_lot_hr(src, tgt, piv).to_dense() - exact).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("LOT-HR with a single atom is exact OT") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const PointBatch a = random_batch(9, 2, rng), b = random_batch(9, 2, rng, 1.0);
    const PivotMeasure piv = build_pivot(a, b, 1, PivotMethod::kmeans, rng);
    const Matrix c = cost_matrix(a, b);
    const Matrix hr = solve_lot_hr(a, b, piv).to_dense();
    const Matrix ex = solve_exact(c, uniform_weights(9), uniform_weights(9)).to_dense();
    CHECK((hr - ex).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("LOT-HR with source pivot composes the target conditionals") {
  // Hand composition on four points: each source point is its own pivot atom,
  // so gamma1 = diag(1/4) and the block at atom i is the conditional of
  // gamma2 at i, scaled back by 1/4.
  const PointBatch src = points({{0, 0}, {1, 0}, {0, 1}, {1, 1}});
  const PointBatch tgt = points({{0.1, 1.2}, {1.3, 1.1}, {0.2, -0.1}, {0.9, 0.1}});
  const PivotMeasure piv{src.points, uniform_weights(4)};
  const Matrix g2 = solve_exact(cost_matrix(src, tgt), uniform_weights(4), uniform_weights(4)).to_dense();
  const Matrix hr = solve_lot_hr(src, tgt, piv).to_dense();
  CHECK((hr - g2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cost ordering and marginals over random instances") {
  Rng rng(12);
  std::uniform_int_distribution<int> size(4, 24);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = std::size_t(size(rng));
    const PointBatch a = random_batch(n, 2, rng), b = random_batch(n, 2, rng, 0.7);
    const Matrix c = cost_matrix(a, b);
    const PivotMeasure piv = build_pivot(a, b, std::size_t(std::ceil(std::sqrt(double(n)))),
                                         trial % 2 ? PivotMethod::kmeans : PivotMethod::subsample, rng);
    const TransportPlan ex = solve_exact(c, uniform_weights(n), uniform_weights(n));
    const TransportPlan hr = solve_lot_hr(a, b, piv);
    const TransportPlan lr = solve_lot_lr(a, b, piv);
    const TransportPlan sk = solve_sinkhorn(c, uniform_weights(n), uniform_weights(n), {}).plan;
    CHECK(ex.cost(c) <= hr.cost(c) + 1e-12);
    CHECK(hr.cost(c) <= lr.cost(c) + 1e-12);
    CHECK(ex.cost(c) <= sk.cost(c) + 1e-12);
    CHECK(ex.marginal_residual() < 1e-9);
    CHECK(hr.marginal_residual() < 1e-9);
    CHECK(lr.marginal_residual() < 1e-9);
    CHECK(sk.marginal_residual() < 1e-6);
  }
}

TEST_CASE("mini-batch OT is cheaper than the independent pairing") {
  Rng rng(13);
  const CouplingSpec exact{CouplingKind::exact, {}, 0, PivotMethod::kmeans, {}};
  const CouplingSpec indep{CouplingKind::independent, {}, 0, PivotMethod::kmeans, {}};
  double ot = 0.0, ind = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const PointBatch a = random_batch(32, 2, rng), b = random_batch(32, 2, rng, 1.0);
    const Matrix c = cost_matrix(a, b);
    const double e = couple(exact, a, b, rng).cost(c);
    const double i = couple(indep, a, b, rng).cost(c);
    CHECK(e <= i + 1e-12);
    ot += e;
    ind += i;
  }
  CHECK(ot < ind);
}

TEST_CASE("sliced: 1D batches give the sorted matching for every aggregation") {
  Rng rng(14);
  const PointBatch a = random_batch(10, 1, rng), b = random_batch(10, 1, rng, 2.0);
  const Matrix expected = perm_matrix(sorted_matching(a, b));
  for (auto agg : {SlicedAggregation::min, SlicedAggregation::expect, SlicedAggregation::temp}) {
    SlicedOptions o;
    o.aggregation = agg;
    o.num_projections = 8;
    o.temperature = 3.0;
    CHECK((solve_sliced(a, b, o, rng).to_dense() - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  SinkhornOptions so;
  so.epsilon = 1e-3;
  so.max_iters = 100000;
  const Matrix sk = solve_sinkhorn(cost_matrix(a, b), uniform_weights(10), uniform_weights(10), so).plan.to_dense();
  for (int i = 0; i < 10; ++i) {
    Eigen::Index j = 0;
    sk.row(i).maxCoeff(&j);
    CHECK(expected(i, j) > 0.0);
  }
  // Collinear 2D points behave like 1D.
  Matrix line_a(6, 2), line_b(6, 2);
  for (int i = 0; i < 6; ++i) {
    const double s = a.points(i, 0), t = b.points(i, 0);
    line_a.row(i) << s, 2 * s;
    line_b.row(i) << t, 2 * t;
  }
  SlicedOptions o;
  o.aggregation = SlicedAggregation::expect;
  const PointBatch la(line_a), lb(line_b);
  const PointBatch a6(a.points.topRows(6)), b6(b.points.topRows(6));
  CHECK((solve_sliced(la, lb, o, rng).to_dense() - perm_matrix(sorted_matching(a6, b6))).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("sliced temperature limits") {
  Rng rng(15);
  const PointBatch a = random_batch(8, 2, rng), b = random_batch(8, 2, rng, 1.0);
  Matrix dirs(5, 2);
  std::normal_distribution<double> g;
  for (int k = 0; k < 5; ++k) dirs.row(k) << g(rng), g(rng);
  SlicedOptions o;
  o.aggregation = SlicedAggregation::expect;
  const Matrix expect = solve_sliced(a, b, dirs, o).to_dense();
  o.aggregation = SlicedAggregation::temp;
  o.temperature = 0.0;
  CHECK(solve_sliced(a, b, dirs, o).to_dense() == expect);
  o.temperature = 1e6;
  const Matrix hot = solve_sliced(a, b, dirs, o).to_dense();
  o.aggregation = SlicedAggregation::min;
  const Matrix min = solve_sliced(a, b, dirs, o).to_dense();
  CHECK((hot - min).cwiseAbs().sum() < 1e-6);
  CHECK(solve_sliced(a, b, dirs, o).kind() == TransportPlan::Kind::permutation);
}

TEST_CASE("sample_pairs") {
  Rng rng(16);
  std::vector<int> id(5);
  std::iota(id.begin(), id.end(), 0);
  const auto pairs = sample_pairs(TransportPlan::from_permutation(id), 5, rng);
  for (int i = 0; i < 5; ++i) CHECK(pairs[std::size_t(i)] == std::make_pair(i, i));

  const TransportPlan prod =
      TransportPlan::from_dense(Matrix::Constant(2, 2, 0.25), uniform_weights(2), uniform_weights(2));
  int hits = 0;
  const int draws = 100000;
  for (int k = 0; k < draws / 2; ++k) {
    for (const auto& [i, j] : sample_pairs(prod, 2, rng)) hits += j == 0;
  }
  CHECK(std::abs(hits / double(draws) - 0.5) < 0.01);

  const auto some = sample_pairs(TransportPlan::from_permutation({2, 0, 1}), 2, rng);
  CHECK(some.size() == 2);
  CHECK(some[0].first != some[1].first);
  CHECK_THROWS_AS(sample_pairs(prod, 3, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_pairs(prod, 0, rng), std::invalid_argument);
}

TEST_CASE("sinkhorn pairs on separated clusters follow the exact plan") {
  Rng rng(17);
  Matrix a(16, 2), b(16, 2);
  std::normal_distribution<double> g(0.0, 0.05);
  for (int i = 0; i < 16; ++i) {
    const double cx = 4.0 * (i % 4), cy = 4.0 * (i / 4);
    a.row(i) << cx + g(rng), cy + g(rng);
    b.row(15 - i) << cx + 1.0 + g(rng), cy + g(rng);
  }
  const PointBatch pa(a), pb(b);
  const Matrix c = cost_matrix(pa, pb);
  const std::vector<int> perm = solve_exact(c, uniform_weights(16), uniform_weights(16)).permutation();
  SinkhornOptions so;
  so.epsilon = 0.01;
  const TransportPlan sk = solve_sinkhorn(c, uniform_weights(16), uniform_weights(16), so).plan;
  int agree = 0, total = 0;
  for (int rep = 0; rep < 200; ++rep) {
    for (const auto& [i, j] : sample_pairs(sk, 16, rng)) {
      agree += perm[std::size_t(i)] == j;
      ++total;
    }
  }
  CHECK(agree >= 0.99 * total);
}

TEST_CASE("couple: single pair batches coincide for every kind") {
  Rng rng(18);
  const PointBatch a = random_batch(1, 2, rng), b = random_batch(1, 2, rng);
  for (auto k : {CouplingKind::independent, CouplingKind::exact, CouplingKind::sinkhorn,
                 CouplingKind::lot_lr, CouplingKind::lot_hr, CouplingKind::sliced}) {
    CAPTURE(to_string(k));
    CouplingSpec s;
    s.kind = k;
    CHECK(couple(s, a, b, rng).to_dense()(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(parse_coupling_kind(to_string(k)) == k);
  }
  CouplingSpec s;
  s.kind = CouplingKind::independent;
  CHECK_THROWS_AS(couple(s, a, random_batch(2, 2, rng), rng), std::invalid_argument);
  s.sinkhorn.epsilon = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

}  // TEST_SUITE
