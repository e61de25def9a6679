#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "otmf/coupling.hpp"

namespace otmf::coupling {

namespace {

// Primal network simplex on the complete bipartite transportation graph.
// The basis is a spanning tree of n + m - 1 cells over n row nodes and m
// column nodes (node ids: rows 0..n-1, columns n..n+m-1), kept rooted at
// node 0 with parent links so a pivot only touches the cycle and the subtree
// that gets re-hung.
class TransportSimplex {
 public:
  TransportSimplex(const Matrix& cost, const Vector& p, const Vector& q)
      : c_(cost), n_(int(cost.rows())), m_(int(cost.cols())) {
    tol_ = 1e-11 * (1.0 + c_.cwiseAbs().maxCoeff());
    initial_basis(p, q);
    build_tree();
  }

  std::vector<Triplet> solve() {
    const long max_iters = 2000L * (n_ + m_) + 10000L;
    const long bland_after = n_ + m_;
    long degenerate_streak = 0;
    for (long it = 0; it < max_iters; ++it) {
      const bool bland = degenerate_streak > bland_after;
      int ei = -1, ej = -1;
      if (!(bland ? price_bland(ei, ej) : price_block(ei, ej))) return result();
      const bool degenerate = pivot(ei, ej, bland);
      degenerate_streak = degenerate ? degenerate_streak + 1 : 0;
    }
    throw std::runtime_error("transport simplex: iteration limit reached");
  }

 private:
  struct Cell {
    int row;
    int col;
    double flow;
  };

  // North-west corner rule over columns sorted by their cheapest row. The
  // staircase always yields a spanning tree with n + m - 1 cells.
  void initial_basis(const Vector& p, const Vector& q) {
    std::vector<int> order(static_cast<std::size_t>(m_));
    std::iota(order.begin(), order.end(), 0);
    std::vector<int> best_row(static_cast<std::size_t>(m_));
    std::vector<double> best_cost(static_cast<std::size_t>(m_));
    for (int j = 0; j < m_; ++j) {
      Eigen::Index r = 0;
      best_cost[std::size_t(j)] = c_.col(j).minCoeff(&r);
      best_row[std::size_t(j)] = int(r);
    }
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return best_row[std::size_t(a)] != best_row[std::size_t(b)]
                 ? best_row[std::size_t(a)] < best_row[std::size_t(b)]
                 : best_cost[std::size_t(a)] < best_cost[std::size_t(b)];
    });

    std::vector<double> supply(p.data(), p.data() + n_);
    std::vector<double> demand(q.data(), q.data() + m_);
    adj_.assign(std::size_t(n_ + m_), {});
    cells_.reserve(std::size_t(n_ + m_ - 1));
    int i = 0, k = 0;
    while (true) {
      const int j = order[std::size_t(k)];
      const double x = std::min(supply[std::size_t(i)], demand[std::size_t(j)]);
      add_cell(i, j, x);
      if (i == n_ - 1 && k == m_ - 1) break;
      supply[std::size_t(i)] -= x;
      demand[std::size_t(j)] -= x;
      if (k == m_ - 1 || (i < n_ - 1 && supply[std::size_t(i)] <= demand[std::size_t(j)])) {
        ++i;
      } else {
        ++k;
      }
    }
  }

  void add_cell(int i, int j, double x) {
    const int id = int(cells_.size());
    cells_.push_back({i, j, x});
    adj_[std::size_t(i)].push_back(id);
    adj_[std::size_t(n_ + j)].push_back(id);
  }

  int other_end(const Cell& c, int node) const { return node < n_ ? n_ + c.col : c.row; }

  double cell_cost(const Cell& c) const { return c_(c.row, c.col); }

  void build_tree() {
    const std::size_t nodes = std::size_t(n_ + m_);
    parent_.assign(nodes, -1);
    pcell_.assign(nodes, -1);
    depth_.assign(nodes, 0);
    pot_.assign(nodes, 0.0);
    hang(0, -1, -1);
  }

  // Re-roots the component of `top` under `parent` (through cell `via`) and
  // refreshes depth and potentials there. u_i + v_j = c_ij on basic cells.
  void hang(int top, int parent, int via) {
    parent_[std::size_t(top)] = parent;
    pcell_[std::size_t(top)] = via;
    if (parent >= 0) {
      depth_[std::size_t(top)] = depth_[std::size_t(parent)] + 1;
      pot_[std::size_t(top)] = cell_cost(cells_[std::size_t(via)]) - pot_[std::size_t(parent)];
    } else {
      depth_[std::size_t(top)] = 0;
      pot_[std::size_t(top)] = 0.0;
    }
    stack_.clear();
    stack_.push_back(top);
    while (!stack_.empty()) {
      const int node = stack_.back();
      stack_.pop_back();
      for (int id : adj_[std::size_t(node)]) {
        if (id == pcell_[std::size_t(node)]) continue;
        const Cell& c = cells_[std::size_t(id)];
        const int next = other_end(c, node);
        parent_[std::size_t(next)] = node;
        pcell_[std::size_t(next)] = id;
        depth_[std::size_t(next)] = depth_[std::size_t(node)] + 1;
        pot_[std::size_t(next)] = cell_cost(c) - pot_[std::size_t(node)];
        stack_.push_back(next);
      }
    }
  }

  double reduced(int i, int j) const {
    return c_(i, j) - pot_[std::size_t(i)] - pot_[std::size_t(n_ + j)];
  }

  // Block search pricing: scan blocks of cells round-robin and take the most
  // negative reduced cost within the first block that has one.
  bool price_block(int& ei, int& ej) {
    const long total = long(n_) * long(m_);
    const long block = std::max<long>(long(std::sqrt(double(total))), 16);
    double best = -tol_;
    long scanned = 0;
    long in_block = 0;
    for (long s = 0; s < total; ++s) {
      long idx = cursor_ + s;
      if (idx >= total) idx -= total;
      const int j = int(idx / n_);
      const int i = int(idx - long(j) * n_);
      const double rc = reduced(i, j);
      if (rc < best) {
        best = rc;
        ei = i;
        ej = j;
      }
      ++scanned;
      if (++in_block == block) {
        in_block = 0;
        if (ei >= 0) break;
      }
    }
    cursor_ = (cursor_ + scanned) % total;
    return ei >= 0;
  }

  // Bland's rule: lowest-index eligible cell.
  bool price_bland(int& ei, int& ej) {
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < m_; ++j) {
        if (reduced(i, j) < -tol_) {
          ei = i;
          ej = j;
          return true;
        }
      }
    }
    return false;
  }

  // Returns true for a degenerate (zero step) pivot.
  bool pivot(int ei, int ej, bool bland) {
    // Cycle = entering cell + tree paths from both ends up to their common
    // ancestor. Cells adjacent to the row end at even distance lose flow, and
    // so do cells adjacent to the column end at even distance.
    up_row_.clear();
    up_col_.clear();
    int a = ei, b = n_ + ej;
    while (a != b) {
      if (depth_[std::size_t(a)] >= depth_[std::size_t(b)]) {
        up_row_.push_back(pcell_[std::size_t(a)]);
        a = parent_[std::size_t(a)];
      } else {
        up_col_.push_back(pcell_[std::size_t(b)]);
        b = parent_[std::size_t(b)];
      }
    }

    int leave = -1;
    bool leave_on_row_side = true;
    double theta = 0.0;
    auto consider = [&](int id, bool row_side) {
      const Cell& c = cells_[std::size_t(id)];
      bool take = leave < 0 || c.flow < theta;
      if (!take && bland && c.flow == theta) {
        const Cell& l = cells_[std::size_t(leave)];
        take = c.row < l.row || (c.row == l.row && c.col < l.col);
      }
      if (take) {
        leave = id;
        theta = c.flow;
        leave_on_row_side = row_side;
      }
    };
    for (std::size_t k = 0; k < up_row_.size(); k += 2) consider(up_row_[k], true);
    for (std::size_t k = 0; k < up_col_.size(); k += 2) consider(up_col_[k], false);
    for (std::size_t k = 0; k < up_row_.size(); ++k) {
      cells_[std::size_t(up_row_[k])].flow += (k % 2 == 0) ? -theta : theta;
    }
    for (std::size_t k = 0; k < up_col_.size(); ++k) {
      cells_[std::size_t(up_col_[k])].flow += (k % 2 == 0) ? -theta : theta;
    }

    // Swap the leaving cell for the entering one, reusing its id, then hang
    // the detached subtree from the entering cell.
    Cell& out = cells_[std::size_t(leave)];
    erase_id(adj_[std::size_t(out.row)], leave);
    erase_id(adj_[std::size_t(n_ + out.col)], leave);
    out = Cell{ei, ej, theta};
    adj_[std::size_t(ei)].push_back(leave);
    adj_[std::size_t(n_ + ej)].push_back(leave);
    if (leave_on_row_side) {
      hang(ei, n_ + ej, leave);
    } else {
      hang(n_ + ej, ei, leave);
    }
    return theta == 0.0;
  }

  static void erase_id(std::vector<int>& v, int id) {
    const auto it = std::find(v.begin(), v.end(), id);
    *it = v.back();
    v.pop_back();
  }

  std::vector<Triplet> result() const {
    std::vector<Triplet> out;
    out.reserve(cells_.size());
    for (const auto& c : cells_) {
      if (c.flow > 0.0) out.push_back({c.row, c.col, c.flow});
    }
    return out;
  }

  const Matrix& c_;
  int n_;
  int m_;
  double tol_ = 0.0;
  long cursor_ = 0;
  std::vector<Cell> cells_;
  std::vector<std::vector<int>> adj_;
  std::vector<int> parent_;
  std::vector<int> pcell_;
  std::vector<int> depth_;
  std::vector<double> pot_;
  std::vector<int> stack_;
  std::vector<int> up_row_;
  std::vector<int> up_col_;
};

void check_weights(const Matrix& cost, const Vector& p, const Vector& q) {
  if (cost.rows() == 0 || cost.cols() == 0) throw std::invalid_argument("OT: empty problem");
  if (p.size() != cost.rows() || q.size() != cost.cols()) {
    throw std::invalid_argument("OT: weight lengths do not match cost matrix");
  }
  if (!cost.allFinite()) throw std::invalid_argument("OT: non-finite cost");
  if (!p.allFinite() || !q.allFinite() || (p.array() < 0.0).any() || (q.array() < 0.0).any()) {
    throw std::invalid_argument("OT: weights must be finite and non-negative");
  }
  const double sp = p.sum();
  const double sq = q.sum();
  if (!(sp > 0.0)) throw std::invalid_argument("OT: weights have zero total mass");
  if (std::abs(sp - sq) > 1e-9) {
    throw std::invalid_argument("OT: weight totals differ (" + std::to_string(sp) + " vs " +
                                std::to_string(sq) + ")");
  }
}

bool is_uniform(const Vector& w, double value) {
  return ((w.array() - value).abs() <= 1e-12 * value).all();
}

}  // namespace

TransportPlan solve_transport_simplex(const Matrix& cost, const Vector& p, const Vector& q) {
  check_weights(cost, p, q);
  TransportSimplex solver(cost, p, q);
  return TransportPlan::from_triplets(solver.solve(), p, q);
}

TransportPlan solve_exact(const Matrix& cost, const Vector& p, const Vector& q) {
  check_weights(cost, p, q);
  const auto n = cost.rows();
  if (n == cost.cols()) {
    const double w = 1.0 / double(n);
    if (is_uniform(p, w) && is_uniform(q, w)) {
      TransportPlan plan = TransportPlan::from_permutation(solve_assignment(cost));
      if (p == plan.row_marginal() && q == plan.col_marginal()) return plan;
      // Near-uniform weights: keep the caller's marginals on a sparse plan.
      std::vector<Triplet> t = plan.to_triplets();
      for (auto& e : t) e.mass = p(e.row);
      return TransportPlan::from_triplets(std::move(t), p, q);
    }
  }
  TransportSimplex solver(cost, p, q);
  return TransportPlan::from_triplets(solver.solve(), p, q);
}

}  // namespace otmf::coupling
