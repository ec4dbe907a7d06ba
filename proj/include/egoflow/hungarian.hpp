#pragma once

#include "egoflow/common.hpp"

#include <vector>

namespace egoflow {

// Minimum-cost assignment on a rectangular cost matrix (rows to columns).
// Infinite entries are forbidden pairs: the solver first maximizes the
// number of finite pairs, then minimizes their total cost. Returns, per row,
// the assigned column or -1.
std::vector<int> solve_assignment(const Matrix& cost);

// Sum of cost(r, assignment[r]) over assigned rows, in row order.
double assignment_cost(const Matrix& cost, const std::vector<int>& assignment);

}  // namespace egoflow
