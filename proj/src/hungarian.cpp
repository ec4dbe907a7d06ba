#include "egoflow/hungarian.hpp"

#include <limits>

namespace egoflow {

namespace {

// Shortest augmenting path with potentials; requires rows <= cols and finite costs.
std::vector<int> solve_wide(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n + 1), 0.0), v(static_cast<size_t>(m + 1), 0.0);
  std::vector<int> p(static_cast<size_t>(m + 1), 0), way(static_cast<size_t>(m + 1), 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(m + 1), inf);
    std::vector<char> used(static_cast<size_t>(m + 1), 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = a(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[static_cast<size_t>(j)] != 0) row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
  }
  return row_to_col;
}

}  // namespace

std::vector<int> solve_assignment(const Matrix& cost) {
  const Eigen::Index n = cost.rows();
  const Eigen::Index m = cost.cols();
  if (n == 0 || m == 0) return std::vector<int>(static_cast<size_t>(n), -1);

  // Forbidden pairs get a penalty larger than any finite assignment total.
  double finite_sum = 0.0;
  bool any_forbidden = false;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < m; ++c) {
      const double x = cost(r, c);
      if (std::isnan(x) || x < 0.0) throw Error("assignment costs must be non-negative");
      if (std::isinf(x)) {
        any_forbidden = true;
      } else {
        finite_sum += x;
      }
    }
  }
  Matrix work = cost;
  if (any_forbidden) {
    const double penalty = 1.0 + 2.0 * finite_sum;
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < m; ++c) {
        if (std::isinf(work(r, c))) work(r, c) = penalty;
      }
    }
  }

  std::vector<int> result;
  if (n <= m) {
    result = solve_wide(work);
  } else {
    const std::vector<int> col_to_row = solve_wide(work.transpose());
    result.assign(static_cast<size_t>(n), -1);
    for (size_t c = 0; c < col_to_row.size(); ++c) {
      if (col_to_row[c] >= 0) result[static_cast<size_t>(col_to_row[c])] = static_cast<int>(c);
    }
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    const int c = result[static_cast<size_t>(r)];
    if (c >= 0 && std::isinf(cost(r, c))) result[static_cast<size_t>(r)] = -1;
  }
  return result;
}

double assignment_cost(const Matrix& cost, const std::vector<int>& assignment) {
  double total = 0.0;
  for (size_t r = 0; r < assignment.size(); ++r) {
    if (assignment[r] >= 0) total += cost(static_cast<Eigen::Index>(r), assignment[r]);
  }
  return total;
}

}  // namespace egoflow
