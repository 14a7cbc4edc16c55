// Acceptance suite: one criterion per section, one PASS/FAIL line each.
// Exit code is the number of failed criteria.

#include "rgbdpose/ablation.hpp"
#include "rgbdpose/evaluation.hpp"
#include "rgbdpose/io.hpp"
#include "rgbdpose/pipeline.hpp"
#include "rgbdpose/simulator.hpp"
#include "sim_support.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <set>
#include <vector>

using namespace rgbdpose;

namespace {

int g_failures = 0;

void report(int criterion, const char* label, bool pass, const std::string& detail,
            double seconds) {
    std::printf("[%s] criterion %d: %-34s %s  (%.1fs)\n", pass ? "PASS" : "FAIL",
                criterion, label, detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

class Timer {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             start_)
            .count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Partition equality between an assignment and ground-truth identity labels
/// up to cluster relabeling.
bool clustering_exact(const Assignment& assignment,
                      const std::map<std::pair<int, int>, int>& labels) {
    if (assignment.w.size() != labels.size()) return false;
    std::map<int, int> cluster_to_label, label_to_cluster;
    for (const auto& [key, k] : assignment.w) {
        const auto it = labels.find(key);
        if (it == labels.end()) return false;
        if (cluster_to_label.count(k) && cluster_to_label[k] != it->second)
            return false;
        if (label_to_cluster.count(it->second) && label_to_cluster[it->second] != k)
            return false;
        cluster_to_label[k] = it->second;
        label_to_cluster[it->second] = k;
    }
    return true;
}

/// RMSE between gauge-aligned reconstructed joints and ground truth, matched
/// per person by mean distance.
double joint_rmse(const PipelineResult& result, const SimulatedFrame& frame) {
    const RigidTransform gauge = detail::reconstruction_gauge(
        result.calibration.extrinsics, frame.truth.extrinsics);
    double sum_sq = 0.0;
    int count = 0;
    for (const auto& person : result.frames.front().people) {
        Skeleton3D aligned = person;
        for (int d = 0; d < aligned.joint_count(); ++d)
            aligned.joints[d] = gauge.apply(aligned.joints[d]);
        int best = -1;
        double best_dist = 1e18;
        for (size_t g = 0; g < frame.truth.people.size(); ++g) {
            double dist = 0.0;
            int n = 0;
            for (int d = 0; d < aligned.joint_count(); ++d) {
                if (!aligned.valid[d]) continue;
                dist += (aligned.joints[d] - frame.truth.people[g].joints[d]).norm();
                ++n;
            }
            if (n > 0 && dist / n < best_dist) {
                best_dist = dist / n;
                best = static_cast<int>(g);
            }
        }
        if (best < 0) continue;
        for (int d = 0; d < aligned.joint_count(); ++d) {
            if (!aligned.valid[d]) continue;
            sum_sq +=
                (aligned.joints[d] - frame.truth.people[best].joints[d]).squaredNorm();
            ++count;
        }
    }
    return count > 0 ? std::sqrt(sum_sq / count) : 1e18;
}

// ---------------------------------------------------------------------------
// 1. Exact recovery on noiseless scenes
// ---------------------------------------------------------------------------

void criterion_1() {
    Timer timer;
    double worst_rot = 0.0, worst_trans = 0.0, worst_rmse = 0.0;
    bool clustering_ok = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SceneConfig scene;
        scene.seed = seed;
        scene.render_depth = false;  // the exact-recovery path needs no rasters
        const auto frames = generate_sequence(scene, 1);

        PipelineConfig cfg;
        cfg.num_people = 4;
        cfg.seed = seed;
        cfg.use_icp = false;  // point-to-point ICP has a resampling floor; the
                              // geometric path is checked exactly here and the
                              // refinement benefit is criterion 3's job
        const PipelineResult result = run_pipeline({frames[0].bundle}, cfg);

        const CameraError err =
            camera_error(result.calibration.extrinsics, frames[0].truth.extrinsics);
        worst_rot = std::max(worst_rot, err.mean_rotation_deg);
        worst_trans = std::max(worst_trans, err.mean_translation_mm);
        worst_rmse = std::max(worst_rmse, joint_rmse(result, frames[0]));
        if (!clustering_exact(result.assignments.front(), frames[0].truth.identity_of))
            clustering_ok = false;
    }
    const bool pass =
        worst_rot < 0.1 && worst_trans < 1.0 && worst_rmse < 1.0 && clustering_ok;
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "rot %.2e deg, trans %.2e mm, joint RMSE %.2e mm, clustering %s",
                  worst_rot, worst_trans, worst_rmse,
                  clustering_ok ? "100%" : "imperfect");
    report(1, "exact recovery (20 noiseless seeds)", pass, detail, timer.seconds());
}

// ---------------------------------------------------------------------------
// 2. Oracle equivalence
// ---------------------------------------------------------------------------

void criterion_2() {
    Timer timer;
    Rng rng(20240);
    bool ok = true;
    std::string detail = "all solver oracles agree";

    // assignment step vs brute force, 1000 trials
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        const int k_count = rng.uniform_int(1, 4);
        const int n_v = rng.uniform_int(1, k_count);
        Eigen::MatrixXd centroids(k_count, 4);
        for (int k = 0; k < k_count; ++k)
            centroids.row(k) = rng.gaussian_vector(4).transpose();
        std::vector<Detection> dets;
        for (int n = 0; n < n_v; ++n) {
            Detection d;
            d.view = 0;
            d.index_in_view = n;
            d.feature = rng.gaussian_vector(4);
            dets.push_back(d);
        }
        Eigen::MatrixXd cost(n_v, k_count);
        for (int n = 0; n < n_v; ++n)
            for (int k = 0; k < k_count; ++k)
                cost(n, k) =
                    (dets[n].feature - centroids.row(k).transpose()).squaredNorm();
        const Assignment got = assignment_step(dets, centroids);
        double got_cost = 0.0;
        for (const auto& d : dets)
            got_cost += cost(d.index_in_view, *got.cluster_of(0, d.index_in_view));
        const double best = test_support::brute_force_assignment(cost).first;
        if (std::abs(got_cost - best) > 1e-9 * (1.0 + best)) {
            ok = false;
            detail = "assignment_step disagrees with enumeration";
        }
    }

    // kabsch apply-then-recover, 1000 trials
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        const Eigen::Matrix3d r = test_support::random_rotation(rng);
        const Eigen::Vector3d t{rng.uniform(-2000, 2000), rng.uniform(-2000, 2000),
                                rng.uniform(-2000, 2000)};
        std::vector<Eigen::Vector3d> src, dst;
        const int n = rng.uniform_int(3, 12);
        for (int i = 0; i < n; ++i) {
            src.push_back(test_support::random_point_in_box(rng, {-800, -800, -800},
                                                            {800, 800, 800}));
            dst.push_back(r * src.back() + t);
        }
        try {
            const RigidTransform got = kabsch(src, dst);
            if ((got.rotation - r).norm() > 1e-9 ||
                (got.translation - t).norm() > 1e-9 * (1.0 + t.norm())) {
                ok = false;
                detail = "kabsch apply-then-recover exceeded 1e-9";
            }
        } catch (const DegeneracyError&) {
            // rare collinear draw; skip
        }
    }

    // eight_point + decompose on constructed poses, 200 trials
    const CameraIntrinsics intr{500.0, 500.0, 319.5, 239.5, 640, 480};
    for (int trial = 0; trial < 200 && ok; ++trial) {
        const Eigen::Matrix3d r = test_support::random_rotation(rng, M_PI / 6.0);
        Eigen::Vector3d t{rng.uniform(-2000, 2000), rng.uniform(-800, 800),
                          rng.uniform(-400, 400)};
        if (t.norm() < 600) t = {1500, 200, 0};
        CorrespondenceSet corr;
        int attempts = 0;
        while (corr.count2d() < 16 && attempts++ < 200000) {
            const Eigen::Vector3d p{rng.uniform(-1500, 1500), rng.uniform(-1000, 1000),
                                    rng.uniform(2500, 6000)};
            const Eigen::Vector3d q = r * p + t;
            if (q.z() < 500) continue;
            const Eigen::Vector2d xi = project_point(p, intr);
            const Eigen::Vector2d xj = project_point(q, intr);
            if (!intr.contains(xi.x(), xi.y()) || !intr.contains(xj.x(), xj.y()))
                continue;
            CorrespondenceSet::Entry e;
            e.x_i = xi;
            e.x_j = xj;
            corr.entries.push_back(e);
        }
        if (corr.count2d() < 16) continue;
        const auto est = eight_point(corr, intr, intr);
        const RigidTransform pose = decompose_essential(est.E, corr, intr, intr);
        if (rotation_angle_between(pose.rotation, r) > 1e-6 ||
            (pose.translation - t.normalized()).norm() > 1e-6) {
            ok = false;
            detail = "eight_point + decompose missed a constructed pose";
        }
    }

    // constrained triangulation without anchors is bitwise DLT
    {
        CalibratedCamera cam_i{intr, RigidTransform::identity()};
        CalibratedCamera cam_j{intr, RigidTransform::identity()};
        cam_j.extrinsics.rotation = test_support::rotation_about_z(0.1);
        cam_j.extrinsics.translation = {-900, 40, 60};
        for (int trial = 0; trial < 500 && ok; ++trial) {
            const Eigen::Vector3d world = test_support::random_point_in_box(
                rng, {-700, -500, 2500}, {700, 500, 5200});
            const Eigen::Vector2d xi =
                project_point(cam_i.extrinsics.apply(world), intr);
            const Eigen::Vector2d xj =
                project_point(cam_j.extrinsics.apply(world), intr);
            if (!intr.contains(xj.x(), xj.y())) continue;
            const auto plain = dlt_triangulate(xi, xj, cam_i, cam_j);
            const auto cand = depth_constrained_triangulate(xi, xj, std::nullopt,
                                                            cam_i, cam_j, 100.0);
            if (cand.position.x() != plain.position.x() ||
                cand.position.y() != plain.position.y() ||
                cand.position.z() != plain.position.z() || cand.selected) {
                ok = false;
                detail = "anchor-free triangulation deviates from DLT";
            }
        }
    }

    report(2, "oracle equivalence", ok, detail, timer.seconds());
}

// ---------------------------------------------------------------------------
// 3. Camera pose trend: depth guidance and ICP lower translation error
// ---------------------------------------------------------------------------

std::vector<SimulatedFrame> noisy_sequence(std::uint64_t seed, int n_frames,
                                           int swaps) {
    SceneConfig scene;
    scene.seed = seed;
    scene.num_views = 4;
    scene.num_people = 4;
    scene.pixel_noise = 2.0;
    scene.depth_noise = 20.0;
    scene.depth_dropout = 0.1;
    scene.detection_dropout = 0.1;
    auto frames = generate_sequence(scene, n_frames);
    if (swaps > 0) {
        auto [bundle, records] = corrupt_correspondences(
            frames[0].bundle, frames[0].truth, swaps,
            Rng::splitmix_combine(seed, 0xc0uLL));
        frames[0].bundle = std::move(bundle);
        frames[0].truth.corruptions = std::move(records);
    }
    return frames;
}

void criterion_3() {
    Timer timer;
    // Threshold matched to the scene noise: at sigma_px = 2 the eight-point
    // rotation and the depth-rigidity rotation agree no better than ~0.15
    // rad, so the near-exact default of 0.01 would reject everything.
    PipelineConfig base;
    base.num_people = 4;
    base.pose_threshold = 0.25;
    base.use_icp = false;
    base.icp.rounds = 3;
    base.icp.max_points = 4000;
    base.calibration_window = 2;

    AblationVariant guided_icp{"guided+icp", [](PipelineConfig cfg) {
                                   cfg.use_icp = true;
                                   return cfg;
                               }};
    const std::vector<AblationVariant> variants{
        variant_full(), variant_no_depth_guide(), guided_icp};

    AblationTable table;
    for (std::uint64_t s = 0; s < 20; ++s) table.seeds.push_back(3000 + s);
    for (const auto& v : variants) {
        table.variants.push_back(v.name);
        table.runs[v.name].resize(table.seeds.size());
    }
    for (size_t s = 0; s < table.seeds.size(); ++s) {
        const auto frames = noisy_sequence(table.seeds[s], 2, 2);
        for (const auto& v : variants) {
            PipelineConfig cfg = v.patch(base);
            cfg.seed = table.seeds[s];
            table.runs[v.name][s] = run_variant(frames, cfg);
        }
    }

    const double guided = table.mean("full", &AblationRun::translation_mm);
    const double unguided =
        table.mean("no-depth-guide", &AblationRun::translation_mm);
    const double with_icp = table.mean("guided+icp", &AblationRun::translation_mm);
    const auto cmp = table.compare("full", "no-depth-guide",
                                   &AblationRun::translation_mm, true);

    const bool pass = guided < unguided && cmp.p_value < 0.05 && with_icp < guided;
    char detail[200];
    std::snprintf(detail, sizeof(detail),
                  "translation mm: unguided %.0f > guided %.0f > +icp %.0f; "
                  "sign test %d/%d, p=%.4f",
                  unguided, guided, with_icp, cmp.wins, cmp.valid, cmp.p_value);
    report(3, "depth guidance + ICP trend", pass, detail, timer.seconds());
}

// ---------------------------------------------------------------------------
// 4. Triangulation trend: anchored >= naive, forced anchors hurt
// ---------------------------------------------------------------------------

/// PCP of one triangulation mode with the cameras held at ground truth,
/// isolating the reconstruction comparison from calibration noise (the
/// calibrated-cameras rows of the reference ablation).
double triangulation_pcp(const std::vector<SimulatedFrame>& frames,
                         TriangulationMode mode, std::uint64_t seed) {
    PipelineConfig cfg;
    cfg.num_people = 4;
    cfg.seed = seed;
    cfg.triangulation = mode;
    std::vector<FrameBundle> bundles;
    for (const auto& f : frames) bundles.push_back(f.bundle);
    const auto assignments = match_stage(bundles, cfg);
    const auto out =
        triangulate_stage(bundles, assignments, frames.front().truth.extrinsics, cfg);
    const BonePrior prior = default_bone_prior();
    double total = 0.0;
    for (size_t t = 0; t < out.size(); ++t)
        total += pcp(out[t].people, frames[t].truth.people, prior).average;
    return total / static_cast<double>(out.size());
}

void criterion_4() {
    Timer timer;
    // Anchored vs naive: moderate depth noise, where anchors carry signal.
    int wins_or_ties = 0, valid = 0;
    double sum_anchored = 0.0, sum_naive = 0.0;
    for (std::uint64_t seed = 4000; seed < 4020; ++seed) {
        SceneConfig scene;
        scene.seed = seed;
        scene.num_views = 4;
        scene.num_people = 4;
        scene.pixel_noise = 2.0;
        scene.depth_noise = 20.0;
        scene.depth_dropout = 0.1;
        scene.render_depth = false;
        const auto frames = generate_sequence(scene, 2);
        const double anchored =
            triangulation_pcp(frames, TriangulationMode::constrained, seed);
        const double naive = triangulation_pcp(frames, TriangulationMode::naive, seed);
        ++valid;
        if (anchored >= naive) ++wins_or_ties;
        sum_anchored += anchored;
        sum_naive += naive;
    }

    // Forced anchors under heavy depth noise score below naive.
    double sum_forced_heavy = 0.0, sum_naive_heavy = 0.0;
    for (std::uint64_t seed = 4100; seed < 4120; ++seed) {
        SceneConfig scene;
        scene.seed = seed;
        scene.num_views = 4;
        scene.num_people = 4;
        scene.pixel_noise = 2.0;
        scene.depth_noise = 100.0;
        scene.depth_dropout = 0.1;
        scene.render_depth = false;
        const auto frames = generate_sequence(scene, 2);
        sum_forced_heavy +=
            triangulation_pcp(frames, TriangulationMode::force_anchors, seed);
        sum_naive_heavy += triangulation_pcp(frames, TriangulationMode::naive, seed);
    }

    const double at_least = static_cast<double>(wins_or_ties) / valid;
    const bool pass = at_least >= 0.9 && sum_forced_heavy < sum_naive_heavy;
    char detail[220];
    std::snprintf(detail, sizeof(detail),
                  "PCP: anchored %.1f vs naive %.1f (>= in %.0f%%); heavy noise: "
                  "forced %.1f < naive %.1f",
                  sum_anchored / valid, sum_naive / valid, 100.0 * at_least,
                  sum_forced_heavy / 20.0, sum_naive_heavy / 20.0);
    report(4, "triangulation anchor trend", pass, detail, timer.seconds());
}

// ---------------------------------------------------------------------------
// 5. Camera-count sweep
// ---------------------------------------------------------------------------

void criterion_5() {
    Timer timer;
    SceneConfig scene;
    scene.num_views = 6;
    scene.num_people = 4;
    scene.pixel_noise = 2.0;
    scene.depth_noise = 20.0;
    scene.depth_dropout = 0.2;
    scene.detection_dropout = 0.15;

    PipelineConfig base;
    base.num_people = 4;
    base.pose_threshold = 0.25;
    base.use_icp = false;
    base.calibration_window = 2;

    std::vector<AblationVariant> variants;
    for (int v = 6; v >= 2; --v) variants.push_back(variant_camera_count(v));
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 20; ++s) seeds.push_back(5000 + s);
    const auto table = ablation_run(scene, base, seeds, variants, 2);

    std::vector<double> means;
    std::string series;
    for (int v = 6; v >= 2; --v) {
        means.push_back(table.mean("cameras-" + std::to_string(v),
                                   &AblationRun::pcp_average));
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s%.1f", v == 6 ? "" : " ", means.back());
        series += buf;
    }
    bool monotone = true;
    for (size_t i = 1; i < means.size(); ++i)
        if (means[i] > means[i - 1] + 1e-9) monotone = false;
    const double drop = means.front() - means.back();
    const bool pass = monotone && drop >= 3.0;
    char detail[200];
    std::snprintf(detail, sizeof(detail), "PCP 6..2 cameras: [%s], drop %.1f pts",
                  series.c_str(), drop);
    report(5, "camera-count sweep", pass, detail, timer.seconds());
}

// ---------------------------------------------------------------------------
// 6. Invariant suite
// ---------------------------------------------------------------------------

void criterion_6() {
    Timer timer;
    bool ok = true;
    std::string detail = "all module invariants hold";
    Rng rng(6000);

    // E-M objective monotonicity
    for (std::uint64_t seed : {6001u, 6002u, 6003u}) {
        std::vector<Detection> dets;
        Rng feat(seed);
        for (int v = 0; v < 5; ++v)
            for (int n = 0; n < 4; ++n) {
                Detection d;
                d.view = v;
                d.index_in_view = n;
                d.feature = feat.gaussian_vector(16);
                d.skeleton2d.joints.assign(13, {100, 100});
                d.skeleton2d.valid.assign(13, 1);
                dets.push_back(d);
            }
        const auto result = cluster_features(dets, 4, 100, seed);
        for (size_t i = 1; i < result.objective_trace.size(); ++i)
            if (result.objective_trace[i] >
                result.objective_trace[i - 1] +
                    1e-9 * (1.0 + result.objective_trace[i - 1])) {
                ok = false;
                detail = "E-M objective increased";
            }
    }

    // epipolar residual bound on returned inliers
    if (ok) {
        SceneConfig scene;
        scene.seed = 6004;
        scene.pixel_noise = 1.0;
        scene.depth_noise = 10.0;
        scene.render_depth = false;
        const auto frame = generate_frame(scene);
        const auto corr = test_support::truth_correspondences(frame, 0, 2);
        const auto& intr = frame.bundle.views[0].rgb_intrinsics;
        const double threshold = 0.1;
        const auto est = depth_guided_pose(corr, intr, intr, threshold);
        const double bound =
            threshold * std::sqrt(static_cast<double>(est.inlier_indices.size()));
        for (int idx : est.inlier_indices) {
            const Eigen::Vector3d xi =
                normalized_coords(corr.entries[idx].x_i, intr);
            const Eigen::Vector3d xj =
                normalized_coords(corr.entries[idx].x_j, intr);
            if (std::abs(xj.dot(est.E * xi)) > bound) {
                ok = false;
                detail = "epipolar residual bound violated";
            }
        }
    }

    // kabsch determinant, including reflected inputs
    for (int trial = 0; trial < 200 && ok; ++trial) {
        std::vector<Eigen::Vector3d> src, dst;
        const bool mirror = trial % 2 == 0;
        for (int i = 0; i < 6; ++i) {
            const auto p = test_support::random_point_in_box(rng, {-500, -500, -500},
                                                             {500, 500, 500});
            src.push_back(p);
            dst.push_back(mirror ? Eigen::Vector3d{-p.x(), p.y(), p.z()} : p);
        }
        try {
            if (std::abs(kabsch(src, dst).rotation.determinant() - 1.0) > 1e-9) {
                ok = false;
                detail = "kabsch returned a reflection";
            }
        } catch (const DegeneracyError&) {
        }
    }

    // triangulation gate exactness and lambda limits
    if (ok) {
        const CameraIntrinsics intr{500.0, 500.0, 319.5, 239.5, 640, 480};
        CalibratedCamera cam_i{intr, RigidTransform::identity()};
        CalibratedCamera cam_j{intr, RigidTransform::identity()};
        cam_j.extrinsics.rotation = test_support::rotation_about_z(-0.12);
        cam_j.extrinsics.translation = {1000, -50, 80};
        const Eigen::Vector3d world{120, -60, 3500};
        const Eigen::Vector2d xi = project_point(cam_i.extrinsics.apply(world), intr);
        const Eigen::Vector2d xj = project_point(cam_j.extrinsics.apply(world), intr);
        const auto plain = dlt_triangulate(xi, xj, cam_i, cam_j);
        for (int trial = 0; trial < 300 && ok; ++trial) {
            Eigen::Vector3d dir{rng.gaussian(), rng.gaussian(), rng.gaussian()};
            dir.normalize();
            const Eigen::Vector3d anchor =
                world + rng.uniform(0.0, 200.0) * dir;
            const auto cand = depth_constrained_triangulate(xi, xj, anchor, cam_i,
                                                            cam_j, 100.0);
            const bool expect = (plain.position - anchor).norm() < 100.0;
            if (cand.selected != expect) {
                ok = false;
                detail = "selection gate deviates from the distance test";
            }
        }
        if (ok) {
            const Eigen::Vector3d anchor = world + Eigen::Vector3d{30, -40, 20};
            const auto tiny = depth_constrained_triangulate(xi, xj, anchor, cam_i,
                                                            cam_j, 1e9, 1e-6);
            const auto huge = depth_constrained_triangulate(xi, xj, anchor, cam_i,
                                                            cam_j, 1e9, 1e6);
            if ((tiny.position - plain.position).norm() >
                    1e-3 * plain.position.norm() ||
                (huge.position - anchor).norm() > 1e-3 * anchor.norm()) {
                ok = false;
                detail = "lambda limits violated";
            }
        }
    }

    // gauge invariance of the camera metric; left-right symmetry of PCP
    if (ok) {
        SceneConfig scene;
        scene.seed = 6005;
        scene.render_depth = false;
        const auto frame = generate_frame(scene);
        auto pred = frame.truth.extrinsics;
        Rng noise(6006);
        for (auto& [v, e] : pred) {
            RigidTransform delta;
            delta.rotation =
                test_support::random_rotation(noise, deg_to_rad(2.0));
            delta.translation = {noise.gaussian(20.0), noise.gaussian(20.0),
                                 noise.gaussian(20.0)};
            e = delta * e;
        }
        const CameraError base = camera_error(pred, frame.truth.extrinsics);
        RigidTransform gauge;
        gauge.rotation = test_support::random_rotation(noise, 2.0);
        gauge.translation = {700, -400, 250};
        gauge.scale = 1.7;
        std::map<int, RigidTransform> rebased;
        for (const auto& [v, e] : pred) rebased[v] = e * gauge;
        const CameraError moved = camera_error(rebased, frame.truth.extrinsics);
        if (std::abs(moved.mean_translation_mm - base.mean_translation_mm) >
                1e-6 * (1.0 + base.mean_translation_mm) ||
            std::abs(moved.mean_rotation_deg - base.mean_rotation_deg) > 1e-6) {
            ok = false;
            detail = "camera metric is not gauge invariant";
        }
        if (pcp(frame.truth.people, frame.truth.people, default_bone_prior())
                .average != 100.0) {
            ok = false;
            detail = "perfect PCP is not 100";
        }
    }

    // simulator determinism, byte-for-byte through serialization
    if (ok) {
        SceneConfig scene;
        scene.seed = 6007;
        scene.pixel_noise = 2.0;
        scene.depth_noise = 20.0;
        scene.depth_dropout = 0.1;
        scene.feature_swaps = 1;
        const auto a = generate_frame(scene);
        const auto b = generate_frame(scene);
        json da = json::array(), db = json::array();
        for (int v = 0; v < a.bundle.view_count(); ++v)
            for (const auto& det : a.bundle.views[v].detections)
                da.push_back(to_json(det));
        for (int v = 0; v < b.bundle.view_count(); ++v)
            for (const auto& det : b.bundle.views[v].detections)
                db.push_back(to_json(det));
        bool same = da.dump() == db.dump();
        for (int v = 0; v < a.bundle.view_count() && same; ++v)
            same = a.bundle.views[v].depth.raster == b.bundle.views[v].depth.raster;
        if (!same) {
            ok = false;
            detail = "simulator is not deterministic";
        }
    }

    report(6, "invariant suite", ok, detail, timer.seconds());
}

// ---------------------------------------------------------------------------
// 7. Degradation: swapped correspondences are rejected
// ---------------------------------------------------------------------------

void criterion_7() {
    Timer timer;
    int trials = 0, success = 0;
    for (std::uint64_t seed = 7000; seed < 7010; ++seed) {
        SceneConfig scene;
        scene.seed = seed;
        scene.num_views = 4;
        scene.num_people = 6;
        scene.pixel_noise = 0.25;
        scene.depth_noise = 2.0;
        scene.render_depth = false;
        const auto frame = generate_frame(scene);

        for (std::uint64_t pattern = 0; pattern < 5; ++pattern) {
            ++trials;
            const auto [bundle, records] = corrupt_correspondences(
                frame.bundle, frame.truth, 1,
                Rng::splitmix_combine(seed, 900 + pattern));
            const auto& rec = records.front();

            std::vector<Detection> dets;
            for (const auto& view : bundle.views)
                for (const auto& det : view.detections) dets.push_back(det);
            const auto clustered =
                cluster_features(dets, scene.num_people, 100, seed);
            const auto pairs =
                correspondences_from_assignment(clustered.assignment, dets);

            std::set<int> corrupted_ids;
            for (const auto& [key, k] : clustered.assignment.w)
                if (key.first == rec.view &&
                    (key.second == rec.index_a || key.second == rec.index_b))
                    corrupted_ids.insert(k);

            // every view pair touching the swapped view must reject all
            // correspondences of the swapped identities
            bool all_rejected = true;
            const auto& intr = bundle.views[0].rgb_intrinsics;
            for (int other = 0; other < bundle.view_count(); ++other) {
                if (other == rec.view) continue;
                const int vi = std::min(rec.view, other);
                const int vj = std::max(rec.view, other);
                const auto corr = build_correspondence_set(pairs, vi, vj);
                if (corr.count2d() < 9 || corr.count3d() < 4) continue;
                try {
                    const auto est = depth_guided_pose(corr, intr, intr, 0.02);
                    for (const auto& [k, d] : est.inliers)
                        if (corrupted_ids.count(k)) all_rejected = false;
                } catch (const Error&) {
                    all_rejected = false;
                }
            }
            if (all_rejected) ++success;
        }
    }
    const double rate = static_cast<double>(success) / trials;
    const bool pass = rate >= 0.95;
    char detail[120];
    std::snprintf(detail, sizeof(detail), "%d/%d trials fully rejected (%.0f%%)",
                  success, trials, 100.0 * rate);
    report(7, "swap rejection degradation", pass, detail, timer.seconds());
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    std::printf("%d of 7 criteria passed\n", 7 - g_failures);
    return g_failures;
}
