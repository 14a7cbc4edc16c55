#pragma once

// Shared test utilities and independent oracles. Everything here stays
// naive (enumeration, brute force) so it cannot share a bug with the
// library implementations it checks.

#include "rgbdpose/rng.hpp"
#include "rgbdpose/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <vector>

namespace test_support {

using rgbdpose::Rng;

/// Brute-force minimum-cost injective assignment of rows to columns.
/// Enumerates every injective mapping; exponential, fine for n, m <= 5.
inline std::pair<double, std::vector<int>> brute_force_assignment(
    const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const int m = static_cast<int>(cost.cols());
    std::vector<int> cols(m);
    for (int j = 0; j < m; ++j) cols[j] = j;

    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_map(n, -1);
    std::vector<int> pick(n, -1);
    std::vector<bool> used(m, false);

    const auto recurse = [&](auto&& self, int row, double acc) -> void {
        if (acc >= best) return;
        if (row == n) {
            best = acc;
            best_map = pick;
            return;
        }
        for (int j = 0; j < m; ++j) {
            if (used[j]) continue;
            used[j] = true;
            pick[row] = j;
            self(self, row + 1, acc + cost(row, j));
            used[j] = false;
        }
    };
    recurse(recurse, 0, 0.0);
    return {best, best_map};
}

inline Eigen::Matrix3d random_rotation(Rng& rng, double max_angle_rad = M_PI) {
    // Rotation from a random axis and angle.
    Eigen::Vector3d axis{rng.gaussian(), rng.gaussian(), rng.gaussian()};
    while (axis.norm() < 1e-6)
        axis = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
    axis.normalize();
    const double angle = rng.uniform(0.0, max_angle_rad);
    return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

inline Eigen::Matrix3d rotation_about_z(double angle_rad) {
    return Eigen::AngleAxisd(angle_rad, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

inline Eigen::Vector3d random_point_in_box(Rng& rng, const Eigen::Vector3d& lo,
                                           const Eigen::Vector3d& hi) {
    return {rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
            rng.uniform(lo.z(), hi.z())};
}

inline Eigen::Matrix3d skew(const Eigen::Vector3d& t) {
    Eigen::Matrix3d s;
    s << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
    return s;
}

/// Difference between two matrices up to a global sign flip.
inline double sign_insensitive_distance(const Eigen::Matrix3d& a,
                                        const Eigen::Matrix3d& b) {
    return std::min((a - b).norm(), (a + b).norm());
}

}  // namespace test_support
