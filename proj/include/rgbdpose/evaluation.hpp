#pragma once

#include "rgbdpose/assignment.hpp"
#include "rgbdpose/geometry.hpp"
#include "rgbdpose/pose.hpp"
#include "rgbdpose/triangulation.hpp"
#include "rgbdpose/types.hpp"

#include <cmath>
#include <map>
#include <vector>

namespace rgbdpose {

// ---------------------------------------------------------------------------
// Metrics: camera rotation/translation error after gauge alignment, and the
// percentage of correctly estimated parts for 3D skeletons.
// ---------------------------------------------------------------------------

struct CameraError {
    struct PerView {
        double rotation_deg = 0.0;
        double translation_mm = 0.0;
    };
    std::map<int, PerView> per_view;
    double mean_rotation_deg = 0.0;
    double mean_translation_mm = 0.0;
};

struct PcpReport {
    std::vector<double> per_actor;  // percentage per ground-truth person
    double average = 0.0;
    std::vector<double> per_part;  // percentage per bone, across actors
};

inline Eigen::Vector3d camera_center(const RigidTransform& extrinsic) {
    return -(extrinsic.rotation.transpose() * extrinsic.translation) /
           extrinsic.scale;
}

/// Least-squares similarity src -> dst (scale * R * p + t) built on the rigid
/// alignment, scale from the singular-value trace. Rank-deficient center sets
/// (two cameras, collinear rigs) fall back to scaling by pairwise spread and
/// aligning camera optical axes as additional direction constraints.
inline RigidTransform align_similarity(
    const std::vector<Eigen::Vector3d>& src,
    const std::vector<Eigen::Vector3d>& dst,
    const std::vector<Eigen::Vector3d>* src_axes = nullptr,
    const std::vector<Eigen::Vector3d>* dst_axes = nullptr) {
    const int n = static_cast<int>(src.size());
    if (n != static_cast<int>(dst.size()) || n < 2)
        throw InputError("align_similarity: need two paired points at least");

    Eigen::Vector3d mu_s = Eigen::Vector3d::Zero(), mu_d = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) {
        mu_s += src[i];
        mu_d += dst[i];
    }
    mu_s /= n;
    mu_d /= n;

    double var_s = 0.0, dot = 0.0;
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (int i = 0; i < n; ++i) {
        h += (src[i] - mu_s) * (dst[i] - mu_d).transpose();
        var_s += (src[i] - mu_s).squaredNorm();
    }

    Eigen::Matrix3d r;
    bool degenerate = n < 3;
    if (!degenerate) {
        Eigen::JacobiSVD<Eigen::Matrix3d> svd(
            h, Eigen::ComputeFullU | Eigen::ComputeFullV);
        degenerate = svd.singularValues()(1) <= 1e-9 * svd.singularValues()(0);
    }

    double s = 1.0;
    if (!degenerate) {
        try {
            r = kabsch(src, dst).rotation;
        } catch (const Error&) {
            degenerate = true;
        }
    }
    if (degenerate) {
        if (!src_axes || !dst_axes)
            throw DegeneracyError("align_similarity: rank-deficient point set");
        // Scale from pairwise spread, rotation from centers plus axes.
        double spread_s = 0.0, spread_d = 0.0;
        for (int i = 0; i < n; ++i) {
            spread_s += (src[i] - mu_s).norm();
            spread_d += (dst[i] - mu_d).norm();
        }
        if (spread_s < 1e-9)
            throw DegeneracyError("align_similarity: coincident source points");
        s = spread_d / spread_s;
        std::vector<Eigen::Vector3d> a, b;
        constexpr double kAxisLength = 1000.0;
        for (int i = 0; i < n; ++i) {
            a.push_back(s * (src[i] - mu_s));
            b.push_back(dst[i] - mu_d);
            a.push_back(s * (src[i] - mu_s) + kAxisLength * (*src_axes)[i]);
            b.push_back(dst[i] - mu_d + kAxisLength * (*dst_axes)[i]);
        }
        r = kabsch(a, b).rotation;
        RigidTransform out;
        out.rotation = r;
        out.scale = s;
        out.translation = mu_d - s * (r * mu_s);
        return out;
    }

    for (int i = 0; i < n; ++i) dot += (dst[i] - mu_d).dot(r * (src[i] - mu_s));
    s = var_s > 1e-12 ? dot / var_s : 1.0;
    if (s <= 0.0)
        throw DegeneracyError("align_similarity: non-positive scale");

    RigidTransform out;
    out.rotation = r;
    out.scale = s;
    out.translation = mu_d - s * (r * mu_s);
    return out;
}

/// Rotation and translation error per view. Predicted and ground-truth poses
/// live in their own anchor frames, so by default the free similarity gauge
/// is removed with a camera-center alignment before comparing; `gauge_align
/// = false` compares the raw poses instead.
inline CameraError camera_error(const std::map<int, RigidTransform>& pred,
                                const std::map<int, RigidTransform>& gt,
                                bool gauge_align = true) {
    if (pred.size() != gt.size())
        throw InputError("camera_error: view sets differ in size");
    for (const auto& [v, unused] : pred) {
        (void)unused;
        if (!gt.count(v)) throw InputError("camera_error: view sets differ");
    }

    RigidTransform gauge = RigidTransform::identity();
    if (gauge_align) {
        std::vector<Eigen::Vector3d> c_pred, c_gt, ax_pred, ax_gt;
        for (const auto& [v, e] : pred) {
            c_pred.push_back(camera_center(e));
            c_gt.push_back(camera_center(gt.at(v)));
            // Optical axis in world coordinates (third rotation row).
            ax_pred.push_back(e.rotation.row(2).transpose());
            ax_gt.push_back(gt.at(v).rotation.row(2).transpose());
        }
        gauge = align_similarity(c_pred, c_gt, &ax_pred, &ax_gt);
    }

    CameraError out;
    double sum_rot = 0.0, sum_trans = 0.0;
    for (const auto& [v, e] : pred) {
        const Eigen::Matrix3d r_aligned = e.rotation * gauge.rotation.transpose();
        const double rot =
            rad_to_deg(rotation_angle_between(gt.at(v).rotation, r_aligned));
        const double trans =
            (camera_center(gt.at(v)) - gauge.apply(camera_center(e))).norm();
        out.per_view[v] = {rot, trans};
        sum_rot += rot;
        sum_trans += trans;
    }
    out.mean_rotation_deg = sum_rot / static_cast<double>(pred.size());
    out.mean_translation_mm = sum_trans / static_cast<double>(pred.size());
    return out;
}

namespace detail {

/// Mean joint distance over mutually valid joints; large constant when the
/// skeletons share no valid joint.
inline double skeleton_distance(const Skeleton3D& a, const Skeleton3D& b) {
    double sum = 0.0;
    int n = 0;
    const int joints = std::min(a.joint_count(), b.joint_count());
    for (int d = 0; d < joints; ++d) {
        if (!a.valid[d] || !b.valid[d]) continue;
        sum += (a.joints[d] - b.joints[d]).norm();
        ++n;
    }
    return n > 0 ? sum / n : 1e12;
}

}  // namespace detail

/// Percentage of correctly estimated parts. Predictions are matched to
/// ground-truth people by minimal mean joint distance; a part counts as
/// correct when both its predicted endpoints are valid and within
/// alpha * (ground-truth bone length) of the true joints. Missing or invalid
/// predictions score as incorrect parts.
inline PcpReport pcp(const std::vector<Skeleton3D>& pred,
                     const std::vector<Skeleton3D>& gt, const BonePrior& prior,
                     double alpha = 0.5) {
    for (const auto& sk : pred)
        if (!gt.empty() && sk.joint_count() != gt.front().joint_count())
            throw InputError("pcp: joint count mismatch");

    // Match predictions to ground truth (exact rectangular assignment).
    std::vector<int> gt_to_pred(gt.size(), -1);
    if (!pred.empty() && !gt.empty()) {
        if (gt.size() <= pred.size()) {
            Eigen::MatrixXd cost(gt.size(), pred.size());
            for (size_t g = 0; g < gt.size(); ++g)
                for (size_t p = 0; p < pred.size(); ++p)
                    cost(g, p) = detail::skeleton_distance(gt[g], pred[p]);
            const auto match = solve_assignment(cost);
            for (size_t g = 0; g < gt.size(); ++g) gt_to_pred[g] = match[g];
        } else {
            Eigen::MatrixXd cost(pred.size(), gt.size());
            for (size_t p = 0; p < pred.size(); ++p)
                for (size_t g = 0; g < gt.size(); ++g)
                    cost(p, g) = detail::skeleton_distance(gt[g], pred[p]);
            const auto match = solve_assignment(cost);
            for (size_t p = 0; p < pred.size(); ++p)
                gt_to_pred[match[p]] = static_cast<int>(p);
        }
    }

    PcpReport report;
    const int num_edges = static_cast<int>(prior.edges.size());
    std::vector<int> part_correct(num_edges, 0), part_total(num_edges, 0);

    for (size_t g = 0; g < gt.size(); ++g) {
        int correct = 0, total = 0;
        const Skeleton3D* p =
            gt_to_pred[g] >= 0 ? &pred[gt_to_pred[g]] : nullptr;
        for (int e = 0; e < num_edges; ++e) {
            const auto& [a, b] = prior.edges[e];
            if (!gt[g].valid[a] || !gt[g].valid[b]) continue;
            const double bone = (gt[g].joints[a] - gt[g].joints[b]).norm();
            ++total;
            ++part_total[e];
            if (!p || !p->valid[a] || !p->valid[b]) continue;
            const double err_a = (p->joints[a] - gt[g].joints[a]).norm();
            const double err_b = (p->joints[b] - gt[g].joints[b]).norm();
            if (err_a <= alpha * bone && err_b <= alpha * bone) {
                ++correct;
                ++part_correct[e];
            }
        }
        report.per_actor.push_back(total > 0 ? 100.0 * correct / total : 100.0);
    }

    double sum = 0.0;
    for (double v : report.per_actor) sum += v;
    report.average =
        report.per_actor.empty() ? 0.0 : sum / report.per_actor.size();
    report.per_part.resize(num_edges, 0.0);
    for (int e = 0; e < num_edges; ++e)
        report.per_part[e] =
            part_total[e] > 0 ? 100.0 * part_correct[e] / part_total[e] : 100.0;
    return report;
}

/// One-sided sign test: probability of at least `wins` successes in `n`
/// fair-coin trials.
inline double sign_test_p(int wins, int n) {
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        double log_c = 0.0;
        for (int i = 0; i < k; ++i)
            log_c += std::log(static_cast<double>(n - i)) -
                     std::log(static_cast<double>(i + 1));
        p += std::exp(log_c - n * std::log(2.0));
    }
    return std::min(p, 1.0);
}

}  // namespace rgbdpose
