#pragma once

#include <cstdint>
#include <vector>

namespace stlab {

/// Minimum-cost rectangular assignment (Jonker-Volgenant style shortest
/// augmenting paths, O(rows^2 * cols)). Requires rows <= cols; every row is
/// assigned a distinct column. Returns the optimal total cost and fills
/// row_to_col.
double solve_assignment(const std::vector<double>& cost, int rows, int cols,
                        std::vector<int>& row_to_col);

}  // namespace stlab
