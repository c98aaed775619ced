#pragma once

#include <vector>

#include "saeaudit/matrix.hpp"

namespace saeaudit {

struct AssignmentResult {
  std::vector<int> assignment;  // assignment[row] = column
  double total_cost = 0.0;      // sum of cost(row, assignment[row]), rows ascending
};

// Exact minimum-cost assignment on a square cost matrix via the
// Kuhn-Munkres potentials method, O(n^3). Costs may be negative.
AssignmentResult solve_assignment(const Matrix& cost);

}  // namespace saeaudit
