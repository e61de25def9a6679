#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "otmf/inference.hpp"

using namespace otmf;
using namespace otmf::inference;

namespace {

nn::MlpParams small_net(Rng& rng) {
  nn::MlpShape s;
  s.hidden_width = 16;
  s.time_embed_dim = 8;
  return nn::init_mlp(s, rng);
}

// Every weight zero, output bias c.
nn::MlpParams constant_net(const nn::MlpParams& like, double c0, double c1) {
  nn::MlpParams p = nn::zeros_like(like);
  p.biases.back() << c0, c1;
  return p;
}

PointBatch random_batch(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g;
  Matrix m(Eigen::Index(n), 2);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) << g(rng), g(rng);
  return PointBatch(m);
}

double brute_w2(const PointBatch& a, const PointBatch& b) {
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i)
      s += (a.points.row(Eigen::Index(i)) - b.points.row(perm[i])).squaredNorm();
    best = std::min(best, s / double(perm.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("zero and constant networks") {
  Rng rng(1);
  const nn::MlpParams net = small_net(rng);
  const PointBatch x0 = random_batch(20, rng);
  for (auto mode : {FlowMode::meanflow, FlowMode::cfm}) {
    for (int nfe : {1, 2, 3, 7}) {
      CAPTURE(nfe);
      CHECK(generate(nn::zeros_like(net), mode, x0, nfe).points == x0.points);
      const PointBatch out = generate(constant_net(net, 0.5, -2.0), mode, x0, nfe);
      Matrix want = x0.points;
      want.col(0).array() += 0.5;
      want.col(1).array() -= 2.0;
      CHECK((out.points - want).cwiseAbs().maxCoeff() < 1e-14);
    }
  }
}

TEST_CASE("one step is a single forward evaluation at (x0, 1, 0)") {
  Rng rng(2);
  const nn::MlpParams net = small_net(rng);
  const PointBatch x0 = random_batch(10, rng);
  const PointBatch out = generate(net, FlowMode::meanflow, x0, 1);
  const std::vector<double> ones(10, 1.0), zeros(10, 0.0);
  const Matrix x = x0.points.transpose();
  const Matrix want = x + nn::forward_batch(net, x, ones, zeros);
  CHECK(out.points.transpose() == want);
  // Two steps of 1/2: meanflow evaluates u(x, s_k, s_{k-1}), cfm u(x, s_{k-1}, s_{k-1}).
  const PointBatch two = generate(net, FlowMode::meanflow, x0, 2);
  const Vector a = x0.points.row(0).transpose();
  const Vector mid = a + 0.5 * nn::forward(net, a, 0.5, 0.0);
  const Vector end = mid + 0.5 * nn::forward(net, mid, 1.0, 0.5);
  CHECK((two.points.row(0).transpose() - end).norm() < 1e-12);
  const PointBatch cfm = generate(net, FlowMode::cfm, x0, 2);
  const Vector cmid = a + 0.5 * nn::forward(net, a, 0.0, 0.0);
  const Vector cend = cmid + 0.5 * nn::forward(net, cmid, 0.5, 0.5);
  CHECK((cfm.points.row(0).transpose() - cend).norm() < 1e-12);
}

TEST_CASE("generation errors") {
  Rng rng(3);
  const nn::MlpParams net = small_net(rng);
  const PointBatch x0 = random_batch(4, rng);
  CHECK_THROWS_AS(generate(net, FlowMode::meanflow, x0, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate(constant_net(net, INFINITY, 0.0), FlowMode::meanflow, x0, 1), std::domain_error);
  InferenceSpec spec;
  spec.n = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("seeded generation") {
  Rng rng(4);
  const nn::MlpParams net = small_net(rng);
  const data::Sampler src({data::DatasetKind::gaussian, 1.0, {}});
  InferenceSpec spec;
  spec.n = 50;
  spec.seed = 11;
  const PointBatch a = generate(net, FlowMode::meanflow, spec, src);
  const PointBatch b = generate(net, FlowMode::meanflow, spec, src);
  CHECK(a.points == b.points);
  CHECK(a.size() == 50);
}

TEST_CASE("W2 examples") {
  Rng rng(5);
  const PointBatch a = random_batch(30, rng);
  CHECK(w2_squared(a, a) == 0.0);
  Matrix shuffled = a.points.colwise().reverse();
  CHECK(w2_squared(a, PointBatch(shuffled)) == 0.0);

  Matrix p(2, 2), q(2, 2);
  p << 0, 0, 1, 0;
  q << 0, 1, 1, 1;
  CHECK(w2_squared(PointBatch(p), PointBatch(q)) == 1.0);

  for (int trial = 0; trial < 20; ++trial) {
    const PointBatch x = random_batch(5, rng), y = random_batch(5, rng);
    CHECK(std::abs(w2_squared(x, y) - brute_w2(x, y)) <= 1e-12);
  }

  const PointBatch x = random_batch(40, rng), y = random_batch(40, rng);
  const double base = w2_squared(x, y);
  for (double s : {0.5, 3.0}) {
    const double scaled = w2_squared(PointBatch(s * x.points), PointBatch(s * y.points));
    CHECK(std::abs(scaled - s * s * base) <= 1e-9);
  }
  CHECK_THROWS_AS(w2_squared(x, random_batch(39, rng)), std::invalid_argument);
}

TEST_CASE("straightness") {
  Rng rng(6);
  const nn::MlpParams net = small_net(rng);
  const PointBatch probes = random_batch(25, rng);
  CHECK(straightness(constant_net(net, 1.0, 3.0), FlowMode::meanflow, probes, 8, 1.0) < 1e-14);
  CHECK(straightness(net, FlowMode::meanflow, probes, 1, 1.0) == 0.0);
  CHECK(straightness(net, FlowMode::meanflow, probes, 4, 1.0) > 0.0);
}

TEST_CASE("estimate_w2 shares draws across step counts") {
  Rng rng(7);
  const nn::MlpParams zero = nn::zeros_like(small_net(rng));
  const data::Sampler g({data::DatasetKind::gaussian, 1.0, {}});
  const data::Sampler m({data::DatasetKind::moons, 1.0, {}});
  const int nfes[] = {1, 2, 4};
  Rng e(8);
  const auto est = estimate_w2(zero, FlowMode::meanflow, g, m, nfes, 200, 2, e);
  REQUIRE(est.size() == 3);
  for (const auto& r : est) {
    CHECK(r.values.size() == 2);
    CHECK(r.values == est[0].values);  // a zero network does not depend on the step count
    CHECK(r.mean == doctest::Approx((r.values[0] + r.values[1]) / 2));
  }
}

}  // TEST_SUITE
