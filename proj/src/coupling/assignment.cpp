#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "otmf/coupling.hpp"

namespace otmf::coupling {

std::vector<int> solve_assignment(const Matrix& cost) {
  const auto n = static_cast<int>(cost.rows());
  if (n == 0 || cost.cols() != cost.rows()) {
    throw std::invalid_argument("assignment: cost must be square and non-empty");
  }
  if (!cost.allFinite()) throw std::invalid_argument("assignment: non-finite cost");

  // Rows are scanned in the inner loop, so keep them contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> c = cost;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n, 0.0), v(n, 0.0);
  std::vector<int> row_of(n, -1), col_of(n, -1);

  // Column reduction: v_j = min_i c_ij keeps (u = 0, v) dual feasible, and
  // every row that is the strict first minimiser of a free column takes it.
  for (int j = 0; j < n; ++j) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
      if (cost(i, j) < cost(best, j)) best = i;
    }
    v[j] = cost(best, j);
    if (col_of[best] < 0) {
      col_of[best] = j;
      row_of[j] = best;
    }
  }

  // Shortest augmenting path (Dijkstra on reduced costs) for every free row.
  std::vector<double> minv(n);
  std::vector<int> way(n);
  std::vector<char> used(n);
  std::vector<int> used_cols;
  used_cols.reserve(n);
  for (int free_row = 0; free_row < n; ++free_row) {
    if (col_of[free_row] >= 0) continue;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    used_cols.clear();

    int i0 = free_row;
    int j0 = -1;  // virtual column holding the free row
    while (true) {
      double delta = kInf;
      int j1 = -1;
      const double ui = u[i0];
      const double* row = c.data() + std::size_t(i0) * std::size_t(n);
      for (int j = 0; j < n; ++j) {
        if (used[j]) continue;
        const double cur = row[j] - ui - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      u[free_row] += delta;
      for (int j : used_cols) {
        u[row_of[j]] += delta;
        v[j] -= delta;
      }
      for (int j = 0; j < n; ++j) {
        if (!used[j]) minv[j] -= delta;
      }
      j0 = j1;
      used[j0] = 1;
      used_cols.push_back(j0);
      if (row_of[j0] < 0) break;
      i0 = row_of[j0];
    }
    // Flip the alternating path back to the free row.
    while (j0 >= 0) {
      const int prev = way[j0];
      const int row = prev < 0 ? free_row : row_of[prev];
      row_of[j0] = row;
      col_of[row] = j0;
      j0 = prev;
    }
  }
  return col_of;
}

}  // namespace otmf::coupling
