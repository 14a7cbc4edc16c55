#pragma once

#include "rgbdpose/geometry.hpp"
#include "rgbdpose/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <optional>
#include <vector>

namespace rgbdpose {

// ---------------------------------------------------------------------------
// Pairwise triangulation with depth regularization, candidate fusion and
// bone-length / symmetry filtering.
// ---------------------------------------------------------------------------

/// A calibrated view: intrinsics plus the world -> camera extrinsics.
struct CalibratedCamera {
    CameraIntrinsics intrinsics;
    RigidTransform extrinsics;  // world -> camera, metric
};

struct TriangulatedPoint {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // world frame, mm
    bool in_front = true;  // positive depth in both cameras
};

/// One reconstruction of joint (identity, joint) from a single view pair.
struct JointCandidate {
    int identity = -1;
    int joint = -1;
    std::pair<int, int> view_pair{-1, -1};
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // world frame, mm
    std::optional<Eigen::Vector3d> depth_anchor;         // world frame, mm
    bool selected = false;  // anchor passed the gate and regularized the solve
    bool in_front = true;
};

struct BonePrior {
    std::vector<std::pair<int, int>> edges;  // (parent, child), a tree
    std::vector<std::pair<int, int>> symmetric_pairs;  // indices into edges
    double length_tolerance = 0.5;

    int joint_count() const {
        int n = 0;
        for (const auto& [a, b] : edges) n = std::max({n, a + 1, b + 1});
        return n;
    }
};

/// 13-joint body layout used throughout: neck plus left/right shoulders,
/// elbows, wrists, hips, knees, ankles.
namespace joints {
inline constexpr int kNeck = 0;
inline constexpr int kLShoulder = 1;
inline constexpr int kRShoulder = 2;
inline constexpr int kLElbow = 3;
inline constexpr int kRElbow = 4;
inline constexpr int kLWrist = 5;
inline constexpr int kRWrist = 6;
inline constexpr int kLHip = 7;
inline constexpr int kRHip = 8;
inline constexpr int kLKnee = 9;
inline constexpr int kRKnee = 10;
inline constexpr int kLAnkle = 11;
inline constexpr int kRAnkle = 12;
inline constexpr int kCount = 13;
}  // namespace joints

/// Tree over the 13-joint layout, rooted at the neck, with every limb bone
/// paired to its mirror.
inline BonePrior default_bone_prior(double tolerance = 0.5) {
    using namespace joints;
    BonePrior prior;
    prior.edges = {
        {kNeck, kLShoulder},   {kNeck, kRShoulder},  // 0, 1
        {kLShoulder, kLElbow}, {kRShoulder, kRElbow},  // 2, 3
        {kLElbow, kLWrist},    {kRElbow, kRWrist},   // 4, 5
        {kNeck, kLHip},        {kNeck, kRHip},       // 6, 7
        {kLHip, kLKnee},       {kRHip, kRKnee},      // 8, 9
        {kLKnee, kLAnkle},     {kRKnee, kRAnkle},    // 10, 11
    };
    prior.symmetric_pairs = {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}, {10, 11}};
    prior.length_tolerance = tolerance;
    return prior;
}

namespace detail {

/// Row-normalized 4x3 / 4x1 split of the two-view DLT system so the
/// homogeneous part reads A3 * P + a4 ~ 0 for P in world coordinates.
struct DltSystem {
    Eigen::Matrix<double, 4, 3> a3;
    Eigen::Vector4d a4;
    Eigen::Matrix4d full;
};

inline Eigen::Matrix<double, 3, 4> normalized_projection(
    const CalibratedCamera& cam) {
    Eigen::Matrix<double, 3, 4> p;
    p.leftCols<3>() = cam.extrinsics.rotation;
    p.col(3) = cam.extrinsics.translation;
    return p;
}

inline DltSystem build_dlt(const Eigen::Vector2d& x_i, const Eigen::Vector2d& x_j,
                           const CalibratedCamera& cam_i,
                           const CalibratedCamera& cam_j) {
    const Eigen::Vector3d xi_n{(x_i.x() - cam_i.intrinsics.cx) / cam_i.intrinsics.fx,
                               (x_i.y() - cam_i.intrinsics.cy) / cam_i.intrinsics.fy,
                               1.0};
    const Eigen::Vector3d xj_n{(x_j.x() - cam_j.intrinsics.cx) / cam_j.intrinsics.fx,
                               (x_j.y() - cam_j.intrinsics.cy) / cam_j.intrinsics.fy,
                               1.0};
    const auto pi = normalized_projection(cam_i);
    const auto pj = normalized_projection(cam_j);

    DltSystem sys;
    sys.full.row(0) = xi_n.x() * pi.row(2) - pi.row(0);
    sys.full.row(1) = xi_n.y() * pi.row(2) - pi.row(1);
    sys.full.row(2) = xj_n.x() * pj.row(2) - pj.row(0);
    sys.full.row(3) = xj_n.y() * pj.row(2) - pj.row(1);
    for (int r = 0; r < 4; ++r) {
        const double norm = sys.full.row(r).head<3>().norm();
        if (norm > 1e-15) sys.full.row(r) /= norm;
    }
    sys.a3 = sys.full.leftCols<3>();
    sys.a4 = sys.full.col(3);
    return sys;
}

inline double ray_angle_rad(const Eigen::Vector2d& x_i, const Eigen::Vector2d& x_j,
                            const CalibratedCamera& cam_i,
                            const CalibratedCamera& cam_j) {
    const Eigen::Vector3d ri =
        (cam_i.extrinsics.rotation.transpose() *
         Eigen::Vector3d((x_i.x() - cam_i.intrinsics.cx) / cam_i.intrinsics.fx,
                         (x_i.y() - cam_i.intrinsics.cy) / cam_i.intrinsics.fy, 1.0))
            .normalized();
    const Eigen::Vector3d rj =
        (cam_j.extrinsics.rotation.transpose() *
         Eigen::Vector3d((x_j.x() - cam_j.intrinsics.cx) / cam_j.intrinsics.fx,
                         (x_j.y() - cam_j.intrinsics.cy) / cam_j.intrinsics.fy, 1.0))
            .normalized();
    // sin of the angle catches both parallel and antiparallel rays.
    return std::asin(std::clamp(ri.cross(rj).norm(), 0.0, 1.0));
}

}  // namespace detail

/// Two-view DLT triangulation in world coordinates. Rays closer than 0.5
/// degrees (parallel or antiparallel) raise DegeneracyError; a point behind
/// either camera only clears the in_front flag.
inline TriangulatedPoint dlt_triangulate(const Eigen::Vector2d& x_i,
                                         const Eigen::Vector2d& x_j,
                                         const CalibratedCamera& cam_i,
                                         const CalibratedCamera& cam_j) {
    if (!cam_i.extrinsics.is_metric() || !cam_j.extrinsics.is_metric())
        throw InputError("dlt_triangulate: camera poses must be metric");
    if (detail::ray_angle_rad(x_i, x_j, cam_i, cam_j) < deg_to_rad(0.5))
        throw DegeneracyError("dlt_triangulate: rays nearly parallel (< 0.5 deg)");

    const auto sys = detail::build_dlt(x_i, x_j, cam_i, cam_j);
    Eigen::JacobiSVD<Eigen::Matrix4d> svd(sys.full, Eigen::ComputeFullV);
    const Eigen::Vector4d xh = svd.matrixV().col(3);
    if (std::abs(xh(3)) < 1e-15)
        throw DegeneracyError("dlt_triangulate: point at infinity");

    TriangulatedPoint out;
    out.position = xh.head<3>() / xh(3);
    const double zi = (cam_i.extrinsics.apply(out.position)).z();
    const double zj = (cam_j.extrinsics.apply(out.position)).z();
    out.in_front = zi > 0.0 && zj > 0.0;
    return out;
}

/// Per-joint depth anchor for a view pair: the mean of the camera-i lifted
/// point and the camera-j lifted point transformed into frame i; a single
/// valid side passes through, no valid side yields no anchor. Output is in
/// the camera-i frame.
inline std::vector<std::optional<Eigen::Vector3d>> depth_anchor(
    const Skeleton3D& lifted_i, const Skeleton3D& lifted_j,
    const RigidTransform& pose_ji) {
    if (!pose_ji.is_metric())
        throw InputError("depth_anchor: pose must be metric");
    const int num_joints =
        std::max(lifted_i.joint_count(), lifted_j.joint_count());
    std::vector<std::optional<Eigen::Vector3d>> out(num_joints);
    for (int d = 0; d < num_joints; ++d) {
        const bool vi = d < lifted_i.joint_count() && lifted_i.valid[d];
        const bool vj = d < lifted_j.joint_count() && lifted_j.valid[d];
        if (vi && vj)
            out[d] = 0.5 * (lifted_i.joints[d] + pose_ji.apply(lifted_j.joints[d]));
        else if (vi)
            out[d] = lifted_i.joints[d];
        else if (vj)
            out[d] = pose_ji.apply(lifted_j.joints[d]);
    }
    return out;
}

/// Depth-constrained triangulation of one joint from one view pair: the
/// plain DLT point stands unless an anchor exists within `threshold_mm` of
/// it, in which case the selection flag is set and the point is re-solved as
/// min ||A3 P + a4||^2 + lambda ||P - anchor||^2 on the row-normalized
/// system. With no anchor the result is exactly the DLT output.
inline JointCandidate depth_constrained_triangulate(
    const Eigen::Vector2d& x_i, const Eigen::Vector2d& x_j,
    const std::optional<Eigen::Vector3d>& anchor_world,
    const CalibratedCamera& cam_i, const CalibratedCamera& cam_j,
    double threshold_mm, double lambda = 1.0) {
    const TriangulatedPoint dlt = dlt_triangulate(x_i, x_j, cam_i, cam_j);

    JointCandidate cand;
    cand.position = dlt.position;
    cand.in_front = dlt.in_front;
    cand.depth_anchor = anchor_world;
    cand.selected = false;

    if (!anchor_world) return cand;
    if ((dlt.position - *anchor_world).norm() >= threshold_mm) return cand;

    cand.selected = true;
    const auto sys = detail::build_dlt(x_i, x_j, cam_i, cam_j);
    const Eigen::Matrix3d lhs =
        sys.a3.transpose() * sys.a3 + lambda * Eigen::Matrix3d::Identity();
    const Eigen::Vector3d rhs =
        -sys.a3.transpose() * sys.a4 + lambda * (*anchor_world);
    cand.position = lhs.ldlt().solve(rhs);
    return cand;
}

/// Fuse the per-pair candidates of one joint: the mean of candidates that
/// survive a median-absolute-deviation gate (with three or more candidates,
/// anything farther than 3x the MAD of the distances to the coordinate-wise
/// median is dropped). Summation order is canonical, so the result does not
/// depend on the input ordering.
inline std::optional<Eigen::Vector3d> fuse_candidates(
    const std::vector<JointCandidate>& candidates) {
    if (candidates.empty()) return std::nullopt;

    std::vector<Eigen::Vector3d> pts;
    pts.reserve(candidates.size());
    for (const auto& c : candidates) pts.push_back(c.position);

    if (pts.size() >= 3) {
        const auto coordinate_median = [&](int axis) {
            std::vector<double> vals;
            vals.reserve(pts.size());
            for (const auto& p : pts) vals.push_back(p[axis]);
            std::sort(vals.begin(), vals.end());
            const size_t n = vals.size();
            return n % 2 == 1 ? vals[n / 2]
                              : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
        };
        const Eigen::Vector3d med{coordinate_median(0), coordinate_median(1),
                                  coordinate_median(2)};
        std::vector<double> dists;
        dists.reserve(pts.size());
        for (const auto& p : pts) dists.push_back((p - med).norm());
        std::vector<double> sorted = dists;
        std::sort(sorted.begin(), sorted.end());
        const size_t n = sorted.size();
        const double mad = n % 2 == 1
                               ? sorted[n / 2]
                               : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        std::vector<Eigen::Vector3d> kept;
        for (size_t i = 0; i < pts.size(); ++i)
            if (dists[i] <= 3.0 * mad) kept.push_back(pts[i]);
        pts = std::move(kept);
    }

    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        if (a.x() != b.x()) return a.x() < b.x();
        if (a.y() != b.y()) return a.y() < b.y();
        return a.z() < b.z();
    });
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (const auto& p : pts) sum += p;
    return sum / static_cast<double>(pts.size());
}

/// Invalidate joints whose incident bone came out too long: a bone fails when
/// its length exceeds (1 + tolerance) times the reference — the symmetric
/// counterpart when measurable, the median of all measured bones otherwise.
/// Only the child endpoint of a failing bone is dropped; joints are never
/// moved. Passes repeat until nothing changes, which makes the filter
/// idempotent.
inline Skeleton3D apply_bone_prior(const Skeleton3D& sk, const BonePrior& prior) {
    Skeleton3D out = sk;
    const int num_edges = static_cast<int>(prior.edges.size());

    std::vector<int> counterpart(num_edges, -1);
    for (const auto& [e1, e2] : prior.symmetric_pairs) {
        counterpart[e1] = e2;
        counterpart[e2] = e1;
    }

    const auto measurable = [&](int e) {
        const auto& [a, b] = prior.edges[e];
        return a < out.joint_count() && b < out.joint_count() && out.valid[a] &&
               out.valid[b];
    };
    const auto length = [&](int e) {
        const auto& [a, b] = prior.edges[e];
        return (out.joints[a] - out.joints[b]).norm();
    };

    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<double> measured;
        for (int e = 0; e < num_edges; ++e)
            if (measurable(e)) measured.push_back(length(e));
        if (measured.empty()) break;
        std::sort(measured.begin(), measured.end());
        const size_t n = measured.size();
        const double median_len = n % 2 == 1
                                      ? measured[n / 2]
                                      : 0.5 * (measured[n / 2 - 1] + measured[n / 2]);

        std::vector<int> to_invalidate;
        for (int e = 0; e < num_edges; ++e) {
            if (!measurable(e)) continue;
            double reference = median_len;
            if (counterpart[e] >= 0 && measurable(counterpart[e])) {
                const double other = length(counterpart[e]);
                if (other > 1e-9) reference = other;
            }
            if (reference <= 1e-9) continue;
            if (length(e) > reference * (1.0 + prior.length_tolerance))
                to_invalidate.push_back(prior.edges[e].second);
        }
        for (int joint : to_invalidate) {
            if (out.valid[joint]) {
                out.valid[joint] = 0;
                changed = true;
            }
        }
    }
    return out;
}

}  // namespace rgbdpose
