#pragma once

#include "rgbdpose/types.hpp"

#include <Eigen/Core>

#include <limits>
#include <vector>

namespace rgbdpose {

/// Exact rectangular assignment (rows <= cols) by shortest augmenting paths.
/// Returns the column chosen for each row; the total cost is the global
/// minimum. Scan order is fixed, so equal-cost alternatives resolve to the
/// lowest column index.
inline std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const int m = static_cast<int>(cost.cols());
    if (n == 0) return {};
    if (n > m)
        throw InputError("solve_assignment: more rows than columns");

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

inline double assignment_cost(const Eigen::MatrixXd& cost,
                              const std::vector<int>& row_to_col) {
    double total = 0.0;
    for (int i = 0; i < static_cast<int>(row_to_col.size()); ++i)
        total += cost(i, row_to_col[i]);
    return total;
}

}  // namespace rgbdpose
