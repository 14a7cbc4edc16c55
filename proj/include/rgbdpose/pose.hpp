#pragma once

#include "rgbdpose/geometry.hpp"
#include "rgbdpose/matching.hpp"
#include "rgbdpose/types.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

namespace rgbdpose {

// ---------------------------------------------------------------------------
// Pairwise relative pose estimation. Conventions:
//   * a pose T_ij maps camera-i-frame points to camera-j-frame points,
//     X_j = R_ij * X_i + t_ij;
//   * the essential matrix satisfies x_j^T E x_i = 0 on normalized image
//     coordinates, E ~ [t]x R;
//   * extrinsics stored per view are world -> camera, world = anchor frame.
// ---------------------------------------------------------------------------

/// One cross-view keypoint pair: pixels in both views, plus the depth-lifted
/// camera-frame points when both views measured depth there.
struct CorrespondenceSet {
    struct Entry {
        Eigen::Vector2d x_i, x_j;  // pixels
        std::optional<std::pair<Eigen::Vector3d, Eigen::Vector3d>> p3d;  // mm
        int identity = -1;
        int joint = -1;
    };
    std::vector<Entry> entries;

    int count2d() const { return static_cast<int>(entries.size()); }
    int count3d() const {
        int n = 0;
        for (const auto& e : entries) n += e.p3d ? 1 : 0;
        return n;
    }
};

/// Expand per-person correspondences into per-joint entries for one view
/// pair. A joint contributes iff its 2D point is valid in both views; the 3D
/// part additionally needs both lifted points.
inline CorrespondenceSet build_correspondence_set(
    const std::vector<PairCorrespondence>& pairs, int view_i, int view_j,
    int identity_offset = 0) {
    CorrespondenceSet out;
    for (const auto& pc : pairs) {
        if (pc.view_i != view_i || pc.view_j != view_j) continue;
        const int num_joints = pc.sk2_i.joint_count();
        for (int d = 0; d < num_joints; ++d) {
            if (!pc.sk2_i.valid[d] || !pc.sk2_j.valid[d]) continue;
            CorrespondenceSet::Entry e;
            e.x_i = pc.sk2_i.joints[d];
            e.x_j = pc.sk2_j.joints[d];
            e.identity = pc.identity + identity_offset;
            e.joint = d;
            const bool lifted =
                d < pc.sk3_i.joint_count() && d < pc.sk3_j.joint_count() &&
                pc.sk3_i.valid[d] && pc.sk3_j.valid[d];
            if (lifted) e.p3d = std::make_pair(pc.sk3_i.joints[d], pc.sk3_j.joints[d]);
            out.entries.push_back(std::move(e));
        }
    }
    return out;
}

struct EssentialEstimate {
    Eigen::Matrix3d E = Eigen::Matrix3d::Zero();  // ||vec(E)|| = 1
    /// Relative pose i -> j; unit translation, scale field 1 until resolved.
    /// Filled by decompose_essential / depth_guided_pose.
    RigidTransform pose;
    /// (identity, joint) of every correspondence the estimate kept.
    std::vector<std::pair<int, int>> inliers;
    /// Indices into the input entry list (same selection as `inliers`).
    std::vector<int> inlier_indices;
    double residual = 0.0;
    /// Combined residual after each selection iteration.
    std::vector<double> residual_trace;
};

inline Eigen::Vector3d normalized_coords(const Eigen::Vector2d& px,
                                         const CameraIntrinsics& intr) {
    return {(px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy, 1.0};
}

namespace detail {

/// Isotropic point conditioning: centroid to the origin, mean distance √2.
inline Eigen::Matrix3d conditioning_transform(
    const std::vector<Eigen::Vector3d>& pts) {
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    for (const auto& p : pts) centroid += p.head<2>();
    centroid /= static_cast<double>(pts.size());
    double mean_dist = 0.0;
    for (const auto& p : pts) mean_dist += (p.head<2>() - centroid).norm();
    mean_dist /= static_cast<double>(pts.size());
    const double s = mean_dist > 1e-15 ? std::sqrt(2.0) / mean_dist : 1.0;
    Eigen::Matrix3d t;
    t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
    return t;
}

/// Flip the sign so the largest-magnitude entry is positive; E is only
/// defined up to sign and a fixed choice keeps results reproducible.
inline void canonicalize_sign(Eigen::Matrix3d& e) {
    int r = 0, c = 0;
    e.cwiseAbs().maxCoeff(&r, &c);
    if (e(r, c) < 0.0) e = -e;
}

}  // namespace detail

/// Normalized eight-point estimate of the essential matrix from pixel
/// correspondences. The linear system is conditioned, solved by SVD (the
/// last right-singular vector), de-conditioned, then projected onto the
/// essential manifold (two equal singular values, third zero) and scaled to
/// unit Frobenius norm. The returned pose is identity; use
/// decompose_essential to extract it.
inline EssentialEstimate eight_point(const CorrespondenceSet& corr,
                                     const CameraIntrinsics& intr_i,
                                     const CameraIntrinsics& intr_j) {
    const int n = corr.count2d();
    if (n < 8)
        throw InsufficientDataError("eight_point: need at least 8 correspondences");

    std::vector<Eigen::Vector3d> xi(n), xj(n);
    for (int s = 0; s < n; ++s) {
        xi[s] = normalized_coords(corr.entries[s].x_i, intr_i);
        xj[s] = normalized_coords(corr.entries[s].x_j, intr_j);
    }
    const Eigen::Matrix3d ti = detail::conditioning_transform(xi);
    const Eigen::Matrix3d tj = detail::conditioning_transform(xj);

    Eigen::MatrixXd a(n, 9);
    for (int s = 0; s < n; ++s) {
        const Eigen::Vector3d pi = ti * xi[s];
        const Eigen::Vector3d pj = tj * xj[s];
        a.row(s) << pj.x() * pi.x(), pj.x() * pi.y(), pj.x(),
                    pj.y() * pi.x(), pj.y() * pi.y(), pj.y(),
                    pi.x(), pi.y(), 1.0;
    }

    // Full V: with exactly 8 rows the thin decomposition would not carry the
    // null-space column.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sing = svd.singularValues();
    // Rank < 8 means the constraints admit a family of solutions (e.g. zero
    // baseline, where any [t]x R fits).
    if (sing(std::min<int>(7, n - 1)) <= 1e-9 * sing(0))
        throw DegeneracyError("eight_point: degenerate configuration (rank-deficient system)");

    const Eigen::VectorXd v = svd.matrixV().col(8);
    Eigen::Matrix3d e_cond;
    e_cond << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
    Eigen::Matrix3d e = tj.transpose() * e_cond * ti;

    // Project to the essential manifold.
    Eigen::JacobiSVD<Eigen::Matrix3d> esvd(
        e, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double sbar =
        0.5 * (esvd.singularValues()(0) + esvd.singularValues()(1));
    e = esvd.matrixU() * Eigen::Vector3d(sbar, sbar, 0.0).asDiagonal() *
        esvd.matrixV().transpose();
    e /= e.norm();
    detail::canonicalize_sign(e);

    EssentialEstimate est;
    est.E = e;
    for (const auto& entry : corr.entries) {
        est.inliers.emplace_back(entry.identity, entry.joint);
    }
    est.inlier_indices.resize(n);
    for (int s = 0; s < n; ++s) est.inlier_indices[s] = s;
    return est;
}

namespace detail {

/// Linear two-view triangulation in normalized coordinates with cameras
/// [I|0] and [R|t]; used for the cheirality vote.
inline Eigen::Vector3d triangulate_normalized(const Eigen::Vector3d& xi,
                                              const Eigen::Vector3d& xj,
                                              const Eigen::Matrix3d& r,
                                              const Eigen::Vector3d& t) {
    Eigen::Matrix<double, 3, 4> p1 = Eigen::Matrix<double, 3, 4>::Zero();
    p1.leftCols<3>() = Eigen::Matrix3d::Identity();
    Eigen::Matrix<double, 3, 4> p2;
    p2.leftCols<3>() = r;
    p2.col(3) = t;

    Eigen::Matrix4d a;
    a.row(0) = xi.x() * p1.row(2) - p1.row(0);
    a.row(1) = xi.y() * p1.row(2) - p1.row(1);
    a.row(2) = xj.x() * p2.row(2) - p2.row(0);
    a.row(3) = xj.y() * p2.row(2) - p2.row(1);
    Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
    Eigen::Vector4d xh = svd.matrixV().col(3);
    if (std::abs(xh(3)) < 1e-15) return Eigen::Vector3d::Constant(1e18);
    return xh.head<3>() / xh(3);
}

}  // namespace detail

/// Pick the (R, ±t) candidate from an essential matrix placing the most
/// correspondences in front of both cameras. Translation comes out with unit
/// norm; the scale stays unresolved. A tied vote raises AmbiguityError.
inline RigidTransform decompose_essential(const Eigen::Matrix3d& e,
                                          const CorrespondenceSet& corr,
                                          const CameraIntrinsics& intr_i,
                                          const CameraIntrinsics& intr_j) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(
        e, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d v = svd.matrixV();
    if (u.determinant() < 0) u = -u;
    if (v.determinant() < 0) v = -v;

    Eigen::Matrix3d w;
    w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const Eigen::Matrix3d r1 = u * w * v.transpose();
    const Eigen::Matrix3d r2 = u * w.transpose() * v.transpose();
    const Eigen::Vector3d t = u.col(2);

    const std::array<std::pair<Eigen::Matrix3d, Eigen::Vector3d>, 4> candidates{
        {{r1, t}, {r1, -t}, {r2, t}, {r2, -t}}};

    std::array<int, 4> votes{0, 0, 0, 0};
    for (const auto& entry : corr.entries) {
        const Eigen::Vector3d xi = normalized_coords(entry.x_i, intr_i);
        const Eigen::Vector3d xj = normalized_coords(entry.x_j, intr_j);
        for (int c = 0; c < 4; ++c) {
            const Eigen::Vector3d point = detail::triangulate_normalized(
                xi, xj, candidates[c].first, candidates[c].second);
            const double zi = point.z();
            const double zj =
                (candidates[c].first * point + candidates[c].second).z();
            if (zi > 0 && zj > 0) ++votes[c];
        }
    }

    int best = 0;
    for (int c = 1; c < 4; ++c)
        if (votes[c] > votes[best]) best = c;
    int tied = 0;
    for (int c = 0; c < 4; ++c)
        if (votes[c] == votes[best]) ++tied;
    if (votes[best] == 0 || tied > 1)
        throw AmbiguityError("decompose_essential: cheirality vote is ambiguous");

    RigidTransform pose;
    pose.rotation = candidates[best].first;
    pose.translation = candidates[best].second;
    pose.scale = 1.0;
    return pose;
}

/// Least-squares rigid alignment of paired point sets: finds R, t minimizing
/// sum ||R * src_k + t - dst_k||^2 via SVD of the centered cross-covariance,
/// with the third column of V negated when the raw solution is a reflection.
inline RigidTransform kabsch(const std::vector<Eigen::Vector3d>& src,
                             const std::vector<Eigen::Vector3d>& dst) {
    const int n = static_cast<int>(src.size());
    if (n != static_cast<int>(dst.size()))
        throw InputError("kabsch: point lists differ in length");
    if (n < 3)
        throw InsufficientDataError("kabsch: need at least 3 point pairs");

    Eigen::Vector3d c_src = Eigen::Vector3d::Zero();
    Eigen::Vector3d c_dst = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) {
        c_src += src[i];
        c_dst += dst[i];
    }
    c_src /= n;
    c_dst /= n;

    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (int i = 0; i < n; ++i)
        h += (src[i] - c_src) * (dst[i] - c_dst).transpose();

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(
        h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sing = svd.singularValues();
    if (sing(1) <= 1e-9 * std::max(sing(0), 1e-300))
        throw DegeneracyError("kabsch: collinear or coincident point set");

    Eigen::Matrix3d v = svd.matrixV();
    Eigen::Matrix3d r = v * svd.matrixU().transpose();
    if (r.determinant() < 0) {
        v.col(2) *= -1.0;
        r = v * svd.matrixU().transpose();
    }

    RigidTransform out;
    out.rotation = r;
    out.translation = c_dst - r * c_src;
    out.scale = 1.0;
    return out;
}

namespace detail {

struct GuidedSolve {
    EssentialEstimate est;
    RigidTransform rigid;        // Kabsch transform on selected 3D pairs
    bool has_rigid = false;
    bool has_pose = false;       // false when the cheirality vote tied
    double algebraic = 0.0;      // RMS epipolar residual over the selection
    double angle = 0.0;          // rotation discrepancy, radians
    std::vector<double> per_entry_epi;
};

inline CorrespondenceSet subset(const CorrespondenceSet& corr,
                                const std::vector<int>& indices) {
    CorrespondenceSet out;
    out.entries.reserve(indices.size());
    for (int idx : indices) out.entries.push_back(corr.entries[idx]);
    return out;
}

inline GuidedSolve solve_selection(const CorrespondenceSet& corr,
                                   const std::vector<int>& selected,
                                   const CameraIntrinsics& intr_i,
                                   const CameraIntrinsics& intr_j) {
    GuidedSolve out;
    const CorrespondenceSet sel = subset(corr, selected);
    out.est = eight_point(sel, intr_i, intr_j);
    // A tied cheirality vote mid-search only penalizes the selection; the
    // search keeps dropping pairs and usually resolves it.
    try {
        out.est.pose = decompose_essential(out.est.E, sel, intr_i, intr_j);
        out.has_pose = true;
    } catch (const AmbiguityError&) {
        out.est.pose = RigidTransform::identity();
    }
    out.est.inlier_indices = selected;

    out.per_entry_epi.resize(selected.size());
    double sum_sq = 0.0;
    for (size_t s = 0; s < selected.size(); ++s) {
        const auto& entry = corr.entries[selected[s]];
        const Eigen::Vector3d xi = normalized_coords(entry.x_i, intr_i);
        const Eigen::Vector3d xj = normalized_coords(entry.x_j, intr_j);
        const double r = std::abs(xj.dot(out.est.E * xi));
        out.per_entry_epi[s] = r;
        sum_sq += r * r;
    }
    out.algebraic = std::sqrt(sum_sq / static_cast<double>(selected.size()));

    std::vector<Eigen::Vector3d> pi, pj;
    for (int idx : selected) {
        if (!corr.entries[idx].p3d) continue;
        pi.push_back(corr.entries[idx].p3d->first);
        pj.push_back(corr.entries[idx].p3d->second);
    }
    if (pi.size() >= 3) {
        try {
            out.rigid = kabsch(pi, pj);
            out.has_rigid = true;
        } catch (const DegeneracyError&) {
        }
    }
    if (!out.has_pose) {
        out.angle = M_PI;
    } else if (out.has_rigid) {
        out.angle = rotation_angle(out.est.pose.rotation *
                                   out.rigid.rotation.transpose());
    } else if (!pi.empty()) {
        // depth evidence exists but its rigid fit degenerated: penalize
        // rather than letting the guidance term silently vanish
        out.angle = M_PI;
    }
    return out;
}

/// Cloud radius used to bring per-pair rigid residuals (mm) onto the same
/// dimensionless footing as epipolar residuals.
inline double cloud_radius(const CorrespondenceSet& corr,
                           const std::vector<int>& selected) {
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    int n = 0;
    for (int idx : selected) {
        if (!corr.entries[idx].p3d) continue;
        centroid += corr.entries[idx].p3d->first;
        ++n;
    }
    if (n == 0) return 1.0;
    centroid /= n;
    double sum_sq = 0.0;
    for (int idx : selected) {
        if (!corr.entries[idx].p3d) continue;
        sum_sq += (corr.entries[idx].p3d->first - centroid).squaredNorm();
    }
    return std::max(std::sqrt(sum_sq / n), 1.0);
}

/// Dimensionless guidance penalty per identity, computed once from the full
/// correspondence set. Each identity with enough depth gets its own rigid
/// fit; a wrong-identity match pairs two different bodies, so either the fit
/// residual is large (incongruent poses) or the fitted transform disagrees
/// with the consensus of the other identities (same pose, different place).
/// The penalty is the mean over the whole identity: every pair of a bad
/// identity inherits the full mismatch, so individually-mild joints cannot
/// hide.
inline std::map<int, double> identity_guidance_penalties(
    const CorrespondenceSet& corr) {
    std::map<int, std::vector<const CorrespondenceSet::Entry*>> by_identity;
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    int n3d = 0;
    for (const auto& entry : corr.entries) {
        if (!entry.p3d) continue;
        by_identity[entry.identity].push_back(&entry);
        centroid += entry.p3d->first;
        ++n3d;
    }
    std::map<int, double> out;
    if (n3d == 0) return out;
    centroid /= n3d;
    double radius_sq = 0.0;
    for (const auto& entry : corr.entries)
        if (entry.p3d) radius_sq += (entry.p3d->first - centroid).squaredNorm();
    const double radius = std::max(std::sqrt(radius_sq / n3d), 1.0);

    struct Fit {
        RigidTransform transform;
        double mean_residual = 0.0;
    };
    std::map<int, Fit> fits;
    for (const auto& [identity, entries] : by_identity) {
        if (entries.size() < 3) continue;
        std::vector<Eigen::Vector3d> pi, pj;
        for (const auto* e : entries) {
            pi.push_back(e->p3d->first);
            pj.push_back(e->p3d->second);
        }
        try {
            Fit fit;
            fit.transform = kabsch(pi, pj);
            for (size_t s = 0; s < pi.size(); ++s)
                fit.mean_residual += (fit.transform.apply(pi[s]) - pj[s]).norm();
            fit.mean_residual /= static_cast<double>(pi.size());
            fits[identity] = fit;
        } catch (const Error&) {
        }
    }
    if (fits.empty()) return out;

    // Consensus transform: the medoid under rotation-angle distance, plus a
    // coordinate-wise median of the transform images at the cloud centroid.
    // Robust to a minority of wrong identities, unlike a least-squares fit
    // over the mixture; evaluating displacements at the centroid rather than
    // comparing raw translations avoids amplifying per-identity rotation
    // noise by the camera-origin lever arm.
    int medoid = -1;
    double medoid_cost = std::numeric_limits<double>::infinity();
    for (const auto& [ka, fa] : fits) {
        double cost = 0.0;
        for (const auto& [kb, fb] : fits)
            cost += rotation_angle(fa.transform.rotation *
                                   fb.transform.rotation.transpose());
        if (cost < medoid_cost) {
            medoid_cost = cost;
            medoid = ka;
        }
    }
    Eigen::Vector3d image_star;
    for (int axis = 0; axis < 3; ++axis) {
        std::vector<double> vals;
        for (const auto& [k, f] : fits)
            vals.push_back(f.transform.apply(centroid)[axis]);
        std::sort(vals.begin(), vals.end());
        const size_t n = vals.size();
        image_star[axis] = n % 2 == 1
                               ? vals[n / 2]
                               : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
    }
    const Eigen::Matrix3d r_star = fits.at(medoid).transform.rotation;

    for (const auto& [identity, fit] : fits) {
        out[identity] =
            (fit.mean_residual + (fit.transform.apply(centroid) - image_star).norm()) /
                radius +
            rotation_angle(fit.transform.rotation * r_star.transpose());
    }
    return out;
}

/// Per-entry drop scores: the epipolar residual under the current estimate,
/// plus the identity-internal rigidity penalty for entries with depth. The
/// identity residuals come from the full set so the signal survives even
/// when an identity's remaining selected pairs get sparse. Scores against
/// the whole-selection rigid fit serve only as a fallback — once outliers
/// dominate, that fit carries little signal.
inline std::vector<double> drop_scores(
    const CorrespondenceSet& corr, const std::vector<int>& selected,
    const GuidedSolve& solve,
    const std::map<int, double>& identity_penalty) {
    const double radius = cloud_radius(corr, selected);

    std::vector<double> scores(selected.size());
    for (size_t s = 0; s < selected.size(); ++s) {
        const auto& entry = corr.entries[selected[s]];
        double score = solve.per_entry_epi[s];
        // The identity penalty applies to every pair of the identity, with
        // or without its own depth: a wrong identity is wrong at all joints.
        const auto it = identity_penalty.find(entry.identity);
        if (it != identity_penalty.end()) {
            score += it->second;
        } else if (entry.p3d && solve.has_rigid) {
            score += (solve.rigid.apply(entry.p3d->first) - entry.p3d->second)
                         .norm() /
                     radius;
        }
        scores[s] = score;
    }
    return scores;
}

}  // namespace detail

/// Depth-guided relative pose: keep as many correspondences as possible while
/// the combined residual (RMS algebraic epipolar term plus the angle between
/// the essential-decomposed rotation and the rigid-alignment rotation of the
/// lifted 3D pairs) stays below `threshold`. Starting from all pairs, the
/// worst-scoring pair is dropped and the estimate re-solved until the
/// residual falls under the threshold; shrinking below 8 2D or 3 3D pairs
/// raises NoConsensusError.
inline EssentialEstimate depth_guided_pose(const CorrespondenceSet& corr,
                                           const CameraIntrinsics& intr_i,
                                           const CameraIntrinsics& intr_j,
                                           double threshold) {
    if (corr.count2d() < 8)
        throw InsufficientDataError("depth_guided_pose: need at least 8 correspondences");
    if (corr.count3d() < 3)
        throw InsufficientDataError("depth_guided_pose: need at least 3 lifted 3D pairs");

    std::vector<int> selected(corr.entries.size());
    for (size_t s = 0; s < selected.size(); ++s) selected[s] = static_cast<int>(s);

    const std::map<int, double> identity_penalty =
        detail::identity_guidance_penalties(corr);

    std::vector<double> trace;
    while (true) {
        detail::GuidedSolve solve =
            detail::solve_selection(corr, selected, intr_i, intr_j);
        const double combined = solve.algebraic + solve.angle;
        trace.push_back(combined);

        const std::vector<double> scores =
            detail::drop_scores(corr, selected, solve, identity_penalty);
        int worst = 0;
        for (size_t s = 1; s < selected.size(); ++s)
            if (scores[s] > scores[worst]) worst = static_cast<int>(s);

        // Accept only when the aggregate residual is under the threshold and
        // no retained pair individually stands far outside the bulk: a couple
        // of mild structured outliers can hide inside any aggregate of this
        // size. The bulk comparison is median-relative so the gate tracks
        // whatever noise floor the scene has.
        std::vector<double> sorted_scores = scores;
        std::nth_element(sorted_scores.begin(),
                         sorted_scores.begin() + sorted_scores.size() / 2,
                         sorted_scores.end());
        const double median_score = sorted_scores[sorted_scores.size() / 2];
        const double pair_gate = std::max(4.0 * median_score, 0.5 * threshold);
        if (combined < threshold && scores[worst] < pair_gate) {
            if (!solve.has_pose)
                // only reachable with very large thresholds
                solve.est.pose = decompose_essential(
                    solve.est.E, detail::subset(corr, selected), intr_i, intr_j);
            EssentialEstimate est = std::move(solve.est);
            est.residual = combined;
            est.residual_trace = std::move(trace);
            est.inliers.clear();
            for (int idx : selected)
                est.inliers.emplace_back(corr.entries[idx].identity,
                                         corr.entries[idx].joint);
            return est;
        }

        int n3d = 0;
        for (int idx : selected) n3d += corr.entries[idx].p3d ? 1 : 0;
        const bool drops_3d = corr.entries[selected[worst]].p3d.has_value();
        if (static_cast<int>(selected.size()) - 1 < 8 ||
            (drops_3d && n3d - 1 < 3))
            throw NoConsensusError(
                "depth_guided_pose: selection shrank below the solvable minimum");
        selected.erase(selected.begin() + worst);
    }
}

/// Recover the metric translation: magnitude from the rigid alignment of the
/// estimate's inlier 3D pairs, direction from the essential decomposition
/// (sign-flipped when it disagrees with the rigid translation).
inline RigidTransform resolve_scale(const EssentialEstimate& est,
                                    const CorrespondenceSet& corr) {
    std::vector<Eigen::Vector3d> pi, pj;
    for (int idx : est.inlier_indices) {
        const auto& entry = corr.entries[idx];
        if (!entry.p3d) continue;
        pi.push_back(entry.p3d->first);
        pj.push_back(entry.p3d->second);
    }
    if (pi.size() < 3)
        throw InsufficientDataError("resolve_scale: need at least 3 inlier 3D pairs");

    const RigidTransform rigid = kabsch(pi, pj);
    const double alpha = rigid.translation.norm();
    if (alpha < 1.0)
        throw ScaleError("resolve_scale: baseline below 1mm, scale indeterminate");

    Eigen::Vector3d dir = est.pose.translation.normalized();
    if (dir.dot(rigid.translation) < 0.0) dir = -dir;

    RigidTransform out;
    out.rotation = est.pose.rotation;
    out.translation = alpha * dir;
    out.scale = 1.0;
    return out;
}

// ---------------------------------------------------------------------------
// Pose graph chaining
// ---------------------------------------------------------------------------

struct PairwisePose {
    RigidTransform transform;  // camera i frame -> camera j frame, metric
    int inlier_count = 0;
    double residual = 0.0;
};

struct CycleResidual {
    int view_i = -1;
    int view_j = -1;
    double rotation_deg = 0.0;
    double translation_mm = 0.0;
};

struct ChainedPoses {
    /// World (= anchor camera frame) -> camera extrinsics per view.
    std::map<int, RigidTransform> extrinsics;
    /// Consistency of every non-tree edge against the chained poses.
    std::vector<CycleResidual> cycle_residuals;
};

/// Chain pairwise poses into a common frame anchored at `anchor` along a
/// maximum-inlier-weight spanning tree. Non-tree edges get a cycle residual
/// report; a disconnected graph raises ConnectivityError naming the
/// components.
inline ChainedPoses chain_poses(
    const std::map<std::pair<int, int>, PairwisePose>& pairwise, int anchor) {
    std::set<int> views{anchor};
    for (const auto& [key, unused] : pairwise) {
        (void)unused;
        views.insert(key.first);
        views.insert(key.second);
    }

    // Maximum-weight spanning tree, Prim from the anchor. Map order makes
    // ties resolve to the smallest (i, j).
    std::set<int> in_tree{anchor};
    std::set<std::pair<int, int>> tree_edges;
    while (in_tree.size() < views.size()) {
        const std::pair<int, int>* best_key = nullptr;
        int best_weight = -1;
        for (const auto& [key, edge] : pairwise) {
            const bool i_in = in_tree.count(key.first) > 0;
            const bool j_in = in_tree.count(key.second) > 0;
            if (i_in == j_in) continue;
            if (edge.inlier_count > best_weight) {
                best_weight = edge.inlier_count;
                best_key = &key;
            }
        }
        if (!best_key) {
            std::string msg = "chain_poses: pose graph disconnected; reached {";
            for (int v : in_tree) msg += std::to_string(v) + " ";
            msg += "} of {";
            for (int v : views) msg += std::to_string(v) + " ";
            msg += "}";
            throw ConnectivityError(msg);
        }
        in_tree.insert(best_key->first);
        in_tree.insert(best_key->second);
        tree_edges.insert(*best_key);
    }

    // Walk the tree outward from the anchor.
    ChainedPoses out;
    out.extrinsics[anchor] = RigidTransform::identity();
    std::vector<int> frontier{anchor};
    while (!frontier.empty()) {
        const int cur = frontier.back();
        frontier.pop_back();
        for (const auto& key : tree_edges) {
            const auto& edge = pairwise.at(key);
            if (key.first == cur && !out.extrinsics.count(key.second)) {
                out.extrinsics[key.second] = edge.transform * out.extrinsics[cur];
                frontier.push_back(key.second);
            } else if (key.second == cur && !out.extrinsics.count(key.first)) {
                out.extrinsics[key.first] =
                    edge.transform.inverse() * out.extrinsics[cur];
                frontier.push_back(key.first);
            }
        }
    }

    for (const auto& [key, edge] : pairwise) {
        if (tree_edges.count(key)) continue;
        const RigidTransform predicted =
            out.extrinsics[key.second] * out.extrinsics[key.first].inverse();
        const RigidTransform delta = edge.transform * predicted.inverse();
        CycleResidual res;
        res.view_i = key.first;
        res.view_j = key.second;
        res.rotation_deg = rad_to_deg(rotation_angle(delta.rotation));
        res.translation_mm = delta.translation.norm();
        out.cycle_residuals.push_back(res);
    }
    return out;
}

}  // namespace rgbdpose
