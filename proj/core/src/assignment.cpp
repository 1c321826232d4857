#include "stlab/assignment.hpp"

#include <limits>
#include <stdexcept>

namespace stlab {

double solve_assignment(const std::vector<double>& cost, int rows, int cols,
                        std::vector<int>& row_to_col) {
    if (rows > cols) throw std::invalid_argument("solve_assignment: rows must not exceed cols");
    if (static_cast<int64_t>(cost.size()) != static_cast<int64_t>(rows) * cols)
        throw std::invalid_argument("solve_assignment: cost size mismatch");
    row_to_col.assign(static_cast<size_t>(rows), -1);
    if (rows == 0) return 0.0;

    constexpr double kInf = std::numeric_limits<double>::infinity();
    // 1-based potentials; col_to_row[0] is the scratch slot of the scan
    std::vector<double> u(static_cast<size_t>(rows) + 1, 0.0);
    std::vector<double> v(static_cast<size_t>(cols) + 1, 0.0);
    std::vector<int> col_to_row(static_cast<size_t>(cols) + 1, 0);
    std::vector<int> way(static_cast<size_t>(cols) + 1, 0);

    for (int i = 1; i <= rows; ++i) {
        col_to_row[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(cols) + 1, kInf);
        std::vector<char> used(static_cast<size_t>(cols) + 1, 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            const int i0 = col_to_row[static_cast<size_t>(j0)];
            int j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= cols; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                const double cur = cost[static_cast<size_t>(i0 - 1) * cols + (j - 1)] -
                                   u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= cols; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(col_to_row[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (col_to_row[static_cast<size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<size_t>(j0)];
            col_to_row[static_cast<size_t>(j0)] = col_to_row[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    double total = 0.0;
    for (int j = 1; j <= cols; ++j) {
        const int i = col_to_row[static_cast<size_t>(j)];
        if (i > 0) {
            row_to_col[static_cast<size_t>(i - 1)] = j - 1;
            total += cost[static_cast<size_t>(i - 1) * cols + (j - 1)];
        }
    }
    return total;
}

}  // namespace stlab
