#pragma once

#include "rgbdpose/geometry.hpp"
#include "rgbdpose/pose.hpp"
#include "rgbdpose/types.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>
#include <vector>

namespace rgbdpose {

// ---------------------------------------------------------------------------
// Point-cloud utilities and trimmed ICP pose refinement.
// ---------------------------------------------------------------------------

/// Median-split kd-tree over 3D points; nearest-neighbour queries only.
class KdTree {
  public:
    explicit KdTree(std::vector<Eigen::Vector3d> points)
        : points_(std::move(points)) {
        indices_.resize(points_.size());
        std::iota(indices_.begin(), indices_.end(), 0);
        if (!points_.empty()) build(0, static_cast<int>(points_.size()), 0);
    }

    bool empty() const { return points_.empty(); }

    /// Index (into the constructor's point list) of the nearest stored point
    /// and its squared distance.
    std::pair<int, double> nearest(const Eigen::Vector3d& query) const {
        int best = -1;
        double best_sq = std::numeric_limits<double>::infinity();
        search(query, 0, static_cast<int>(points_.size()), 0, best, best_sq);
        return {best >= 0 ? indices_[best] : -1, best_sq};
    }

  private:
    void build(int lo, int hi, int axis) {
        if (hi - lo <= 1) return;
        const int mid = (lo + hi) / 2;
        std::nth_element(indices_.begin() + lo, indices_.begin() + mid,
                         indices_.begin() + hi, [&](int a, int b) {
                             return points_[a][axis] < points_[b][axis];
                         });
        build(lo, mid, (axis + 1) % 3);
        build(mid + 1, hi, (axis + 1) % 3);
    }

    void search(const Eigen::Vector3d& q, int lo, int hi, int axis, int& best,
                double& best_sq) const {
        if (lo >= hi) return;
        const int mid = (lo + hi) / 2;
        const Eigen::Vector3d& p = points_[indices_[mid]];
        const double d_sq = (p - q).squaredNorm();
        if (d_sq < best_sq) {
            best_sq = d_sq;
            best = mid;
        }
        const double delta = q[axis] - p[axis];
        const int next_axis = (axis + 1) % 3;
        if (delta < 0) {
            search(q, lo, mid, next_axis, best, best_sq);
            if (delta * delta < best_sq) search(q, mid + 1, hi, next_axis, best, best_sq);
        } else {
            search(q, mid + 1, hi, next_axis, best, best_sq);
            if (delta * delta < best_sq) search(q, lo, mid, next_axis, best, best_sq);
        }
    }

    std::vector<Eigen::Vector3d> points_;
    std::vector<int> indices_;
};

/// One representative point per voxel (the first seen, scan order fixed).
inline std::vector<Eigen::Vector3d> voxel_downsample(
    const std::vector<Eigen::Vector3d>& points, double voxel_mm) {
    std::unordered_map<std::uint64_t, bool> seen;
    seen.reserve(points.size());
    std::vector<Eigen::Vector3d> out;
    for (const auto& p : points) {
        const auto cell = [&](double x) {
            return static_cast<std::int64_t>(std::floor(x / voxel_mm)) + (1 << 20);
        };
        const std::uint64_t key = (static_cast<std::uint64_t>(cell(p.x())) << 42) ^
                                  (static_cast<std::uint64_t>(cell(p.y())) << 21) ^
                                  static_cast<std::uint64_t>(cell(p.z()));
        if (seen.emplace(key, true).second) out.push_back(p);
    }
    return out;
}

/// Back-project every measured pixel of a depth raster into its camera frame.
inline std::vector<Eigen::Vector3d> backproject_cloud(const DepthImage& depth) {
    std::vector<Eigen::Vector3d> out;
    out.reserve(depth.raster.size() / 4);
    for (int v = 0; v < depth.height; ++v)
        for (int u = 0; u < depth.width; ++u) {
            const float d = depth.at(u, v);
            if (d > 0.0f)
                out.push_back(backproject_pixel(u, v, d, depth.intrinsics));
        }
    return out;
}

struct IcpParams {
    double trim_fraction = 0.2;
    int max_iterations = 30;
    double convergence_mm = 0.01;  // stop when the trimmed residual stalls
    double voxel_mm = 50.0;
    int max_points = 6000;
    /// Outer passes: every view refines against a snapshot of the others,
    /// then the snapshot is rebuilt from the refined poses. Non-anchor views
    /// start misplaced, so one pass converges onto partially wrong targets;
    /// re-snapshotting contracts the shared error toward the pinned anchor.
    int rounds = 6;
};

namespace detail {

inline double trimmed_residual(const KdTree& target,
                               const std::vector<Eigen::Vector3d>& pts,
                               const RigidTransform& cam_to_world,
                               double trim_fraction) {
    std::vector<double> dists;
    dists.reserve(pts.size());
    for (const auto& p : pts)
        dists.push_back(std::sqrt(target.nearest(cam_to_world.apply(p)).second));
    std::sort(dists.begin(), dists.end());
    const size_t keep = std::max<size_t>(
        1, static_cast<size_t>(std::llround((1.0 - trim_fraction) * dists.size())));
    double sum = 0.0;
    for (size_t i = 0; i < keep && i < dists.size(); ++i) sum += dists[i];
    return sum / static_cast<double>(std::min(keep, dists.size()));
}

}  // namespace detail

/// Trimmed ICP refinement of per-view poses. Each non-anchor view is matched
/// against a snapshot of the other views' clouds merged in the anchor frame
/// under the initial poses; the worst trim_fraction of matches is discarded
/// before every rigid update. A view's pose is only replaced when its
/// trimmed residual did not get worse.
inline std::map<int, RigidTransform> icp_refine(
    const std::map<int, std::vector<Eigen::Vector3d>>& clouds,
    const std::map<int, RigidTransform>& initial, int anchor,
    const IcpParams& params = {}) {
    if (clouds.empty()) throw InputError("icp_refine: no clouds");
    for (const auto& [view, cloud] : clouds)
        if (cloud.empty())
            throw InputError("icp_refine: empty cloud for view " +
                             std::to_string(view));

    // Subsample once; clouds stay in their camera frames. Above the size cap
    // take a uniform stride so spatial coverage is preserved.
    std::map<int, std::vector<Eigen::Vector3d>> sampled;
    for (const auto& [view, cloud] : clouds) {
        auto pts = voxel_downsample(cloud, params.voxel_mm);
        if (static_cast<int>(pts.size()) > params.max_points) {
            std::vector<Eigen::Vector3d> strided;
            strided.reserve(params.max_points);
            const double step =
                static_cast<double>(pts.size()) / params.max_points;
            for (int i = 0; i < params.max_points; ++i)
                strided.push_back(pts[static_cast<size_t>(i * step)]);
            pts = std::move(strided);
        }
        sampled[view] = std::move(pts);
    }

    std::map<int, RigidTransform> refined = initial;
    for (int round = 0; round < params.rounds; ++round) {
        // World-frame snapshot under the poses entering this round.
        std::map<int, std::vector<Eigen::Vector3d>> world_snapshot;
        for (const auto& [view, pts] : sampled) {
            const RigidTransform cam_to_world = refined.at(view).inverse();
            auto& dst = world_snapshot[view];
            dst.reserve(pts.size());
            for (const auto& p : pts) dst.push_back(cam_to_world.apply(p));
        }

        std::map<int, RigidTransform> next = refined;
        for (const auto& [view, pts] : sampled) {
            if (view == anchor) continue;

            std::vector<Eigen::Vector3d> target_pts;
            for (const auto& [other, world_pts] : world_snapshot) {
                if (other == view) continue;
                target_pts.insert(target_pts.end(), world_pts.begin(),
                                  world_pts.end());
            }
            if (target_pts.empty()) continue;
            const KdTree target(target_pts);

            RigidTransform cam_to_world = refined.at(view).inverse();
            const double initial_residual = detail::trimmed_residual(
                target, pts, cam_to_world, params.trim_fraction);

            double prev_residual = std::numeric_limits<double>::infinity();
            for (int iter = 0; iter < params.max_iterations; ++iter) {
                struct Match {
                    Eigen::Vector3d src_world, dst;
                    double dist;
                };
                std::vector<Match> matches;
                matches.reserve(pts.size());
                for (const auto& p : pts) {
                    const Eigen::Vector3d q = cam_to_world.apply(p);
                    const auto [idx, d_sq] = target.nearest(q);
                    if (idx < 0) continue;
                    matches.push_back({q, target_pts[idx], std::sqrt(d_sq)});
                }
                std::sort(matches.begin(), matches.end(),
                          [](const Match& a, const Match& b) {
                              return a.dist < b.dist;
                          });
                const size_t keep = std::max<size_t>(
                    3, static_cast<size_t>(std::llround(
                           (1.0 - params.trim_fraction) * matches.size())));
                matches.resize(std::min(keep, matches.size()));

                double residual = 0.0;
                std::vector<Eigen::Vector3d> src, dst;
                src.reserve(matches.size());
                dst.reserve(matches.size());
                for (const auto& m : matches) {
                    src.push_back(m.src_world);
                    dst.push_back(m.dst);
                    residual += m.dist;
                }
                residual /= static_cast<double>(matches.size());

                RigidTransform update;
                try {
                    update = kabsch(src, dst);
                } catch (const Error&) {
                    break;  // degenerate match set; keep the current pose
                }
                cam_to_world = update * cam_to_world;

                if (std::abs(prev_residual - residual) < params.convergence_mm)
                    break;
                prev_residual = residual;
            }

            // Keep the update only when it buys a real improvement: near the
            // optimum the residual bowl is flat at the sampling floor and
            // chasing it just drags the pose around by the resampling bias.
            const double final_residual = detail::trimmed_residual(
                target, pts, cam_to_world, params.trim_fraction);
            const double margin = std::max(0.02 * initial_residual, 1.0);
            if (final_residual <= initial_residual - margin)
                next[view] = cam_to_world.inverse();
        }
        refined = std::move(next);
    }
    return refined;
}

}  // namespace rgbdpose
