#pragma once

#include "rgbdpose/evaluation.hpp"
#include "rgbdpose/geometry.hpp"
#include "rgbdpose/icp.hpp"
#include "rgbdpose/io.hpp"
#include "rgbdpose/matching.hpp"
#include "rgbdpose/pose.hpp"
#include "rgbdpose/simulator.hpp"
#include "rgbdpose/triangulation.hpp"
#include "rgbdpose/types.hpp"

#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rgbdpose {

// ---------------------------------------------------------------------------
// Five-stage pipeline: per-frame identity clustering, pooled pairwise camera
// pose estimation over a calibration window, pose chaining (+ optional
// trimmed-ICP refinement), per-frame depth-constrained triangulation, and
// evaluation. Stages are pure functions of (bundles, config); the CLI wraps
// them with file I/O.
// ---------------------------------------------------------------------------

inline void log_line(const char* level, const char* stage, int frame,
                     const std::string& msg) {
    std::fprintf(stderr, "level=%s stage=%s frame=%d msg=\"%s\"\n", level, stage,
                 frame, msg.c_str());
}

enum class TriangulationMode {
    constrained,    // anchor gate + regularized solve
    naive,          // plain DLT, no anchors
    force_anchors,  // every existing anchor regularizes, no distance gate
};

struct PipelineConfig {
    int num_people = -1;  // K; required
    int num_joints = 13;
    double pose_threshold = 0.01;
    double depth_anchor_threshold_mm = 100.0;
    double regularization_lambda = 1.0;
    bool use_depth_guide = true;
    bool use_icp = true;
    IcpParams icp;
    int calibration_window = 50;  // frames pooled for pose estimation
    int anchor_view = 0;
    bool apply_bone_filter = true;
    double bone_tolerance = 0.5;
    TriangulationMode triangulation = TriangulationMode::constrained;
    /// Skeleton tree for filtering and evaluation; the built-in 13-joint
    /// layout (at bone_tolerance) when unset.
    std::optional<BonePrior> custom_bone_prior;
    std::vector<int> views_used;  // empty = all views
    int max_cluster_iterations = 100;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_people < 1) throw InputError("PipelineConfig: num_people must be >= 1");
        if (pose_threshold <= 0.0)
            throw InputError("PipelineConfig: pose_threshold must be > 0");
        if (depth_anchor_threshold_mm <= 0.0)
            throw InputError("PipelineConfig: depth_anchor_threshold_mm must be > 0");
        if (calibration_window < 1)
            throw InputError("PipelineConfig: calibration_window must be >= 1");
    }
};

inline const char* to_string(TriangulationMode mode) {
    switch (mode) {
        case TriangulationMode::naive: return "naive";
        case TriangulationMode::force_anchors: return "force_anchors";
        default: return "constrained";
    }
}

inline TriangulationMode triangulation_mode_from_string(const std::string& s) {
    if (s == "naive") return TriangulationMode::naive;
    if (s == "force_anchors") return TriangulationMode::force_anchors;
    if (s == "constrained") return TriangulationMode::constrained;
    throw InputError("unknown triangulation mode: " + s);
}

inline json to_json(const PipelineConfig& cfg) {
    return json{{"num_people", cfg.num_people},
                {"num_joints", cfg.num_joints},
                {"pose_threshold", cfg.pose_threshold},
                {"depth_anchor_threshold_mm", cfg.depth_anchor_threshold_mm},
                {"regularization_lambda", cfg.regularization_lambda},
                {"use_depth_guide", cfg.use_depth_guide},
                {"use_icp", cfg.use_icp},
                {"icp_trim_fraction", cfg.icp.trim_fraction},
                {"icp_max_iterations", cfg.icp.max_iterations},
                {"icp_voxel_mm", cfg.icp.voxel_mm},
                {"icp_max_points", cfg.icp.max_points},
                {"icp_rounds", cfg.icp.rounds},
                {"calibration_window", cfg.calibration_window},
                {"anchor_view", cfg.anchor_view},
                {"apply_bone_filter", cfg.apply_bone_filter},
                {"bone_tolerance", cfg.bone_tolerance},
                {"triangulation", to_string(cfg.triangulation)},
                {"views_used", cfg.views_used},
                {"max_cluster_iterations", cfg.max_cluster_iterations},
                {"seed", cfg.seed},
                {"bone_prior", cfg.custom_bone_prior
                                   ? to_json(*cfg.custom_bone_prior)
                                   : json(nullptr)}};
}

inline void apply_config_json(PipelineConfig& cfg, const json& j) {
    cfg.num_people = j.value("num_people", cfg.num_people);
    cfg.num_joints = j.value("num_joints", cfg.num_joints);
    cfg.pose_threshold = j.value("pose_threshold", cfg.pose_threshold);
    cfg.depth_anchor_threshold_mm =
        j.value("depth_anchor_threshold_mm", cfg.depth_anchor_threshold_mm);
    cfg.regularization_lambda =
        j.value("regularization_lambda", cfg.regularization_lambda);
    cfg.use_depth_guide = j.value("use_depth_guide", cfg.use_depth_guide);
    cfg.use_icp = j.value("use_icp", cfg.use_icp);
    cfg.icp.trim_fraction = j.value("icp_trim_fraction", cfg.icp.trim_fraction);
    cfg.icp.max_iterations = j.value("icp_max_iterations", cfg.icp.max_iterations);
    cfg.icp.voxel_mm = j.value("icp_voxel_mm", cfg.icp.voxel_mm);
    cfg.icp.max_points = j.value("icp_max_points", cfg.icp.max_points);
    cfg.icp.rounds = j.value("icp_rounds", cfg.icp.rounds);
    cfg.calibration_window = j.value("calibration_window", cfg.calibration_window);
    cfg.anchor_view = j.value("anchor_view", cfg.anchor_view);
    cfg.apply_bone_filter = j.value("apply_bone_filter", cfg.apply_bone_filter);
    cfg.bone_tolerance = j.value("bone_tolerance", cfg.bone_tolerance);
    if (j.contains("triangulation"))
        cfg.triangulation =
            triangulation_mode_from_string(j.at("triangulation").get<std::string>());
    if (j.contains("views_used"))
        cfg.views_used = j.at("views_used").get<std::vector<int>>();
    if (j.contains("bone_prior") && !j.at("bone_prior").is_null())
        cfg.custom_bone_prior =
            bone_prior_from_json(j.at("bone_prior"), "config:bone_prior");
    cfg.max_cluster_iterations =
        j.value("max_cluster_iterations", cfg.max_cluster_iterations);
    cfg.seed = j.value("seed", cfg.seed);
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// Restrict a bundle to a view subset, re-indexed contiguously from 0.
inline FrameBundle filter_views(const FrameBundle& bundle,
                                const std::vector<int>& views_used) {
    if (views_used.empty()) return bundle;
    FrameBundle out;
    out.timestamp = bundle.timestamp;
    for (size_t new_v = 0; new_v < views_used.size(); ++new_v) {
        const int old_v = views_used[new_v];
        if (old_v < 0 || old_v >= bundle.view_count())
            throw InputError("filter_views: view index out of range");
        ViewData view = bundle.views[old_v];
        for (auto& det : view.detections) det.view = static_cast<int>(new_v);
        out.views.push_back(std::move(view));
    }
    return out;
}

/// Fill in missing depth lifts from the raster path: register the raw depth
/// raster to the RGB geometry, then sample it at each detection's keypoints.
/// Detections that already carry a lift keep it.
inline FrameBundle ensure_lifted(const FrameBundle& bundle) {
    FrameBundle out = bundle;
    for (auto& view : out.views) {
        bool missing = false;
        for (const auto& det : view.detections)
            if (!det.has_lift()) missing = true;
        if (!missing) continue;
        if (view.depth.raster.empty()) {
            for (auto& det : view.detections)
                if (!det.has_lift())
                    det.skeleton3d_lifted =
                        Skeleton3D::invalid(det.skeleton2d.joint_count());
            continue;
        }
        const DepthImage registered =
            register_depth_to_rgb(view.depth, view.rgb_intrinsics, view.depth_to_rgb);
        for (auto& det : view.detections)
            if (!det.has_lift())
                det.skeleton3d_lifted = lift_skeleton(det.skeleton2d, registered);
    }
    return out;
}

inline std::vector<Detection> flat_detections(const FrameBundle& bundle) {
    std::vector<Detection> out;
    for (const auto& view : bundle.views)
        for (const auto& det : view.detections) out.push_back(det);
    return out;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Stage: per-frame constrained clustering into identities.
inline std::vector<Assignment> match_stage(const std::vector<FrameBundle>& bundles,
                                           const PipelineConfig& cfg) {
    cfg.validate();
    std::vector<Assignment> out;
    out.reserve(bundles.size());
    for (const auto& raw : bundles) {
        const FrameBundle bundle = filter_views(raw, cfg.views_used);
        const auto detections = flat_detections(bundle);
        const auto result = cluster_features(
            detections, cfg.num_people, cfg.max_cluster_iterations,
            Rng::splitmix_combine(cfg.seed, static_cast<std::uint64_t>(raw.timestamp)));
        out.push_back(result.assignment);
    }
    return out;
}

struct CalibrationResult {
    std::map<int, RigidTransform> extrinsics;  // world (= anchor frame) -> camera
    std::map<int, int> inlier_counts;          // summed over incident pair edges
    std::map<int, double> residuals;           // mean over incident pair edges
    std::vector<CycleResidual> cycle_residuals;
    std::map<std::pair<int, int>, PairwisePose> pairwise;
};

/// Stage: pool correspondences over the calibration window, estimate every
/// pairwise pose, chain into the anchor frame, optionally refine with
/// trimmed ICP against the merged clouds.
inline CalibrationResult calibrate_stage(const std::vector<FrameBundle>& bundles,
                                         const std::vector<Assignment>& assignments,
                                         const PipelineConfig& cfg) {
    cfg.validate();
    if (bundles.empty()) throw InputError("calibrate_stage: no frames");
    if (assignments.size() != bundles.size())
        throw InputError("calibrate_stage: one assignment per frame required");

    const int window =
        std::min<int>(cfg.calibration_window, static_cast<int>(bundles.size()));

    // Pool per-pair correspondence sets across the window. Identity labels
    // are offset per frame so provenance stays unique.
    std::map<std::pair<int, int>, CorrespondenceSet> pooled;
    int num_views = 0;
    std::vector<FrameBundle> lifted_window;
    for (int t = 0; t < window; ++t) {
        const FrameBundle bundle =
            ensure_lifted(filter_views(bundles[t], cfg.views_used));
        num_views = std::max(num_views, bundle.view_count());
        const auto detections = flat_detections(bundle);
        const auto pairs = correspondences_from_assignment(assignments[t], detections);
        const int offset = t * (cfg.num_people + 1);
        for (int i = 0; i < bundle.view_count(); ++i) {
            for (int j = i + 1; j < bundle.view_count(); ++j) {
                CorrespondenceSet set = build_correspondence_set(pairs, i, j, offset);
                auto& dst = pooled[{i, j}];
                dst.entries.insert(dst.entries.end(), set.entries.begin(),
                                   set.entries.end());
            }
        }
        lifted_window.push_back(std::move(bundle));
    }

    // Pairwise metric poses.
    std::map<std::pair<int, int>, PairwisePose> pairwise;
    for (const auto& [key, corr] : pooled) {
        const auto& intr_i = lifted_window.front().views[key.first].rgb_intrinsics;
        const auto& intr_j = lifted_window.front().views[key.second].rgb_intrinsics;
        if (corr.count2d() < 8) {
            log_line("warn", "calibrate", -1,
                     "pair (" + std::to_string(key.first) + "," +
                         std::to_string(key.second) + ") has only " +
                         std::to_string(corr.count2d()) + " correspondences; skipped");
            continue;
        }
        try {
            EssentialEstimate est;
            bool guided = cfg.use_depth_guide && corr.count3d() >= 3;
            if (guided) {
                try {
                    est = depth_guided_pose(corr, intr_i, intr_j, cfg.pose_threshold);
                } catch (const Error& e) {
                    // fall back to the unguided estimate so one stubborn pair
                    // does not disconnect the pose graph
                    log_line("warn", "calibrate", -1,
                             "pair (" + std::to_string(key.first) + "," +
                                 std::to_string(key.second) +
                                 ") guidance failed (" + e.what() +
                                 "); using plain eight-point");
                    guided = false;
                }
            }
            if (!guided) {
                est = eight_point(corr, intr_i, intr_j);
                est.pose = decompose_essential(est.E, corr, intr_i, intr_j);
                est.residual = 0.0;
            }
            const RigidTransform metric = resolve_scale(est, corr);
            PairwisePose edge;
            edge.transform = metric;
            // Unguided fallback edges can still connect the graph but carry
            // no weight, so the spanning tree only uses them as a last
            // resort.
            edge.inlier_count =
                guided ? static_cast<int>(est.inlier_indices.size()) : 0;
            edge.residual = est.residual;
            pairwise[key] = edge;
        } catch (const Error& e) {
            log_line("warn", "calibrate", -1,
                     "pair (" + std::to_string(key.first) + "," +
                         std::to_string(key.second) + ") failed: " + e.what());
        }
    }
    if (pairwise.empty())
        throw DegeneracyError("calibrate_stage: no usable view pair");

    const ChainedPoses chained = chain_poses(pairwise, cfg.anchor_view);

    CalibrationResult result;
    result.extrinsics = chained.extrinsics;
    result.cycle_residuals = chained.cycle_residuals;
    result.pairwise = pairwise;
    for (const auto& [key, edge] : pairwise) {
        for (int v : {key.first, key.second}) {
            result.inlier_counts[v] += edge.inlier_count;
            result.residuals[v] += edge.residual;
        }
    }
    for (auto& [v, r] : result.residuals) {
        int incident = 0;
        for (const auto& [key, unused] : pairwise) {
            (void)unused;
            if (key.first == v || key.second == v) ++incident;
        }
        if (incident > 0) r /= incident;
    }

    if (cfg.use_icp) {
        std::map<int, std::vector<Eigen::Vector3d>> clouds;
        const FrameBundle& first = lifted_window.front();
        for (int v = 0; v < first.view_count(); ++v) {
            if (first.views[v].depth.raster.empty()) continue;
            const DepthImage registered = register_depth_to_rgb(
                first.views[v].depth, first.views[v].rgb_intrinsics,
                first.views[v].depth_to_rgb);
            clouds[v] = backproject_cloud(registered);
        }
        bool have_clouds = !result.extrinsics.empty();
        std::map<int, std::vector<Eigen::Vector3d>> used_clouds;
        for (const auto& [v, unused] : result.extrinsics) {
            (void)unused;
            const auto it = clouds.find(v);
            if (it == clouds.end() || it->second.empty()) {
                have_clouds = false;
                break;
            }
            used_clouds[v] = it->second;
        }
        if (have_clouds) {
            result.extrinsics =
                icp_refine(used_clouds, result.extrinsics, cfg.anchor_view, cfg.icp);
        } else {
            log_line("warn", "calibrate", -1,
                     "depth rasters missing; ICP refinement skipped");
        }
    }
    return result;
}

struct FrameSkeletons {
    int frame = 0;
    std::vector<int> ids;  // per-frame cluster ids
    std::vector<Skeleton3D> people;  // world (anchor-camera) frame
};

/// Stage: triangulate every frame against the fixed calibration, fuse the
/// per-pair candidates and filter with the bone prior.
inline std::vector<FrameSkeletons> triangulate_stage(
    const std::vector<FrameBundle>& bundles,
    const std::vector<Assignment>& assignments,
    const std::map<int, RigidTransform>& extrinsics, const PipelineConfig& cfg) {
    cfg.validate();
    if (assignments.size() != bundles.size())
        throw InputError("triangulate_stage: one assignment per frame required");

    const BonePrior prior = cfg.custom_bone_prior
                                ? *cfg.custom_bone_prior
                                : default_bone_prior(cfg.bone_tolerance);
    const double gate =
        cfg.triangulation == TriangulationMode::force_anchors
            ? std::numeric_limits<double>::infinity()
            : cfg.depth_anchor_threshold_mm;

    std::vector<FrameSkeletons> out;
    for (size_t t = 0; t < bundles.size(); ++t) {
        const FrameBundle bundle = ensure_lifted(filter_views(bundles[t], cfg.views_used));
        const auto detections = flat_detections(bundle);
        const auto pairs = correspondences_from_assignment(assignments[t], detections);

        FrameSkeletons frame;
        frame.frame = bundle.timestamp;

        // candidates[k][d]
        std::map<int, std::vector<std::vector<JointCandidate>>> cands;
        for (const auto& pc : pairs) {
            if (!extrinsics.count(pc.view_i) || !extrinsics.count(pc.view_j))
                continue;
            CalibratedCamera cam_i{bundle.views[pc.view_i].rgb_intrinsics,
                                   extrinsics.at(pc.view_i)};
            CalibratedCamera cam_j{bundle.views[pc.view_j].rgb_intrinsics,
                                   extrinsics.at(pc.view_j)};
            const RigidTransform pose_ji =
                cam_i.extrinsics * cam_j.extrinsics.inverse();
            const RigidTransform cam_i_to_world = cam_i.extrinsics.inverse();

            std::vector<std::optional<Eigen::Vector3d>> anchors;
            if (cfg.triangulation != TriangulationMode::naive)
                anchors = depth_anchor(pc.sk3_i, pc.sk3_j, pose_ji);

            auto& person_cands = cands[pc.identity];
            if (person_cands.empty()) person_cands.resize(cfg.num_joints);

            const int num_joints =
                std::min(pc.sk2_i.joint_count(), cfg.num_joints);
            for (int d = 0; d < num_joints; ++d) {
                if (!pc.sk2_i.valid[d] || !pc.sk2_j.valid[d]) continue;
                std::optional<Eigen::Vector3d> anchor_world;
                if (d < static_cast<int>(anchors.size()) && anchors[d])
                    anchor_world = cam_i_to_world.apply(*anchors[d]);
                try {
                    JointCandidate cand = depth_constrained_triangulate(
                        pc.sk2_i.joints[d], pc.sk2_j.joints[d], anchor_world,
                        cam_i, cam_j, gate, cfg.regularization_lambda);
                    if (!cand.in_front) continue;
                    cand.identity = pc.identity;
                    cand.joint = d;
                    cand.view_pair = {pc.view_i, pc.view_j};
                    person_cands[d].push_back(std::move(cand));
                } catch (const DegeneracyError&) {
                    // near-parallel rays; this pair contributes nothing here
                }
            }
        }

        for (const auto& [k, per_joint] : cands) {
            Skeleton3D sk = Skeleton3D::invalid(cfg.num_joints);
            bool any = false;
            for (int d = 0; d < cfg.num_joints; ++d) {
                const auto fused = fuse_candidates(per_joint[d]);
                if (!fused) continue;
                sk.joints[d] = *fused;
                sk.valid[d] = 1;
                any = true;
            }
            if (!any) continue;
            if (cfg.apply_bone_filter) sk = apply_bone_prior(sk, prior);
            frame.ids.push_back(k);
            frame.people.push_back(std::move(sk));
        }
        out.push_back(std::move(frame));
    }
    return out;
}

// ---------------------------------------------------------------------------
// End-to-end run
// ---------------------------------------------------------------------------

struct PipelineResult {
    std::vector<Assignment> assignments;
    CalibrationResult calibration;
    std::vector<FrameSkeletons> frames;
    json report;
};

/// Full run: cluster every frame, calibrate once from the pooled window,
/// triangulate every frame with the fixed calibration. Frames whose
/// clustering fails are skipped with a log line rather than aborting.
inline PipelineResult run_pipeline(const std::vector<FrameBundle>& bundles,
                                   const PipelineConfig& cfg) {
    cfg.validate();
    if (bundles.empty()) throw InputError("run_pipeline: no frames");

    PipelineResult result;

    std::vector<FrameBundle> usable;
    for (const auto& bundle : bundles) {
        try {
            auto assignments = match_stage({bundle}, cfg);
            result.assignments.push_back(std::move(assignments.front()));
            usable.push_back(bundle);
        } catch (const Error& e) {
            log_line("warn", "match", bundle.timestamp,
                     std::string("frame skipped: ") + e.what());
        }
    }
    if (usable.empty()) throw DegeneracyError("run_pipeline: no usable frame");

    result.calibration = calibrate_stage(usable, result.assignments, cfg);
    result.frames =
        triangulate_stage(usable, result.assignments, result.calibration.extrinsics, cfg);

    json pair_report = json::array();
    for (const auto& [key, edge] : result.calibration.pairwise)
        pair_report.push_back(json{{"view_i", key.first},
                                   {"view_j", key.second},
                                   {"inliers", edge.inlier_count},
                                   {"residual", edge.residual},
                                   {"baseline_mm", edge.transform.translation.norm()}});
    result.report = json{{"frames", usable.size()},
                         {"views", result.calibration.extrinsics.size()},
                         {"pairwise", pair_report},
                         {"config", to_json(cfg)}};
    return result;
}

}  // namespace rgbdpose
