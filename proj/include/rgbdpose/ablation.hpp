#pragma once

#include "rgbdpose/evaluation.hpp"
#include "rgbdpose/pipeline.hpp"
#include "rgbdpose/simulator.hpp"

#include <cstdio>
#include <functional>
#include <future>
#include <map>
#include <string>
#include <vector>

namespace rgbdpose {

// ---------------------------------------------------------------------------
// Ablation harness: run pipeline variants on identical seeded scenes and
// aggregate camera/PCP metrics with pairwise sign tests.
// ---------------------------------------------------------------------------

struct AblationVariant {
    std::string name;
    std::function<PipelineConfig(PipelineConfig)> patch;
};

inline AblationVariant variant_full() {
    return {"full", [](PipelineConfig cfg) { return cfg; }};
}

inline AblationVariant variant_no_depth_guide() {
    return {"no-depth-guide", [](PipelineConfig cfg) {
                cfg.use_depth_guide = false;
                return cfg;
            }};
}

inline AblationVariant variant_no_icp() {
    return {"no-icp", [](PipelineConfig cfg) {
                cfg.use_icp = false;
                return cfg;
            }};
}

inline AblationVariant variant_naive_triangulation() {
    return {"naive-triangulation", [](PipelineConfig cfg) {
                cfg.triangulation = TriangulationMode::naive;
                return cfg;
            }};
}

inline AblationVariant variant_force_anchors() {
    return {"force-anchors", [](PipelineConfig cfg) {
                cfg.triangulation = TriangulationMode::force_anchors;
                return cfg;
            }};
}

inline AblationVariant variant_camera_count(int views) {
    AblationVariant v;
    v.name = "cameras-" + std::to_string(views);
    v.patch = [views](PipelineConfig cfg) {
        cfg.views_used.clear();
        for (int i = 0; i < views; ++i) cfg.views_used.push_back(i);
        return cfg;
    };
    return v;
}

struct AblationRun {
    bool ok = false;
    std::string error;
    double rotation_deg = 0.0;
    double translation_mm = 0.0;
    double pcp_average = 0.0;
};

struct AblationTable {
    std::vector<std::string> variants;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, std::vector<AblationRun>> runs;  // variant -> per seed

    double mean(const std::string& variant,
                double AblationRun::*metric) const {
        double total = 0.0;
        int n = 0;
        for (const auto& run : runs.at(variant)) {
            if (!run.ok) continue;
            total += run.*metric;
            ++n;
        }
        return n > 0 ? total / n : std::numeric_limits<double>::quiet_NaN();
    }

    /// Seeds where variant `a` beats variant `b` on the metric; both runs
    /// must have succeeded to count.
    struct Comparison {
        int wins = 0;
        int ties = 0;
        int valid = 0;
        double p_value = 1.0;
    };
    Comparison compare(const std::string& a, const std::string& b,
                       double AblationRun::*metric, bool lower_wins) const {
        Comparison out;
        const auto& ra = runs.at(a);
        const auto& rb = runs.at(b);
        for (size_t s = 0; s < seeds.size(); ++s) {
            if (!ra[s].ok || !rb[s].ok) continue;
            ++out.valid;
            const double va = ra[s].*metric;
            const double vb = rb[s].*metric;
            if (va == vb)
                ++out.ties;
            else if ((va < vb) == lower_wins)
                ++out.wins;
        }
        // ties split evenly; the sign test runs on strict outcomes
        const int decisive = out.valid - out.ties;
        out.p_value = decisive > 0 ? sign_test_p(out.wins, decisive) : 1.0;
        return out;
    }

    json to_json() const {
        json variants_json;
        for (const auto& name : variants) {
            json per_seed = json::array();
            for (const auto& run : runs.at(name)) {
                per_seed.push_back(json{{"ok", run.ok},
                                        {"rotation_deg", run.rotation_deg},
                                        {"translation_mm", run.translation_mm},
                                        {"pcp", run.pcp_average}});
            }
            variants_json[name] = {
                {"mean_rotation_deg", mean(name, &AblationRun::rotation_deg)},
                {"mean_translation_mm", mean(name, &AblationRun::translation_mm)},
                {"mean_pcp", mean(name, &AblationRun::pcp_average)},
                {"per_seed", per_seed}};
        }
        return json{{"seeds", seeds}, {"variants", variants_json}};
    }

    void print(std::FILE* out) const {
        std::fprintf(out, "%-22s %12s %14s %10s\n", "variant", "rotation",
                     "translation", "pcp");
        for (const auto& name : variants)
            std::fprintf(out, "%-22s %9.3f deg %11.1f mm %9.2f\n", name.c_str(),
                         mean(name, &AblationRun::rotation_deg),
                         mean(name, &AblationRun::translation_mm),
                         mean(name, &AblationRun::pcp_average));
    }
};

namespace detail {

/// Gauge from the reconstruction frame to the ground-truth world via camera
/// centers and optical axes.
inline RigidTransform reconstruction_gauge(
    const std::map<int, RigidTransform>& pred,
    const std::map<int, RigidTransform>& gt) {
    std::vector<Eigen::Vector3d> c_pred, c_gt, ax_pred, ax_gt;
    for (const auto& [v, e] : pred) {
        c_pred.push_back(camera_center(e));
        c_gt.push_back(camera_center(gt.at(v)));
        ax_pred.push_back(e.rotation.row(2).transpose());
        ax_gt.push_back(gt.at(v).rotation.row(2).transpose());
    }
    return align_similarity(c_pred, c_gt, &ax_pred, &ax_gt);
}

}  // namespace detail

/// Run one pipeline variant over a simulated sequence and score it against
/// the ground truth.
inline AblationRun run_variant(const std::vector<SimulatedFrame>& frames,
                               const PipelineConfig& cfg, double pcp_alpha = 0.5) {
    AblationRun out;
    try {
        std::vector<FrameBundle> bundles;
        for (const auto& f : frames) bundles.push_back(f.bundle);
        const PipelineResult result = run_pipeline(bundles, cfg);

        // Map the (possibly re-indexed) pipeline views back to scene views.
        std::map<int, RigidTransform> gt_poses;
        for (const auto& [v, e] : result.calibration.extrinsics) {
            const int scene_view =
                cfg.views_used.empty() ? v : cfg.views_used.at(v);
            gt_poses[v] = frames.front().truth.extrinsics.at(scene_view);
        }

        const CameraError cam = camera_error(result.calibration.extrinsics, gt_poses);
        out.rotation_deg = cam.mean_rotation_deg;
        out.translation_mm = cam.mean_translation_mm;

        const RigidTransform gauge =
            detail::reconstruction_gauge(result.calibration.extrinsics, gt_poses);
        const BonePrior prior = default_bone_prior();
        double pcp_total = 0.0;
        int pcp_frames = 0;
        for (size_t t = 0; t < result.frames.size(); ++t) {
            std::vector<Skeleton3D> aligned = result.frames[t].people;
            for (auto& sk : aligned)
                for (int d = 0; d < sk.joint_count(); ++d)
                    sk.joints[d] = gauge.apply(sk.joints[d]);
            const PcpReport report =
                pcp(aligned, frames[t].truth.people, prior, pcp_alpha);
            pcp_total += report.average;
            ++pcp_frames;
        }
        out.pcp_average = pcp_frames > 0 ? pcp_total / pcp_frames : 0.0;
        out.ok = true;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

/// Evaluate every variant on identical seeded scenes; seeds run concurrently.
inline AblationTable ablation_run(const SceneConfig& base_scene,
                                  const PipelineConfig& base_cfg,
                                  const std::vector<std::uint64_t>& seeds,
                                  const std::vector<AblationVariant>& variants,
                                  int frames_per_seed = 1) {
    AblationTable table;
    table.seeds = seeds;
    for (const auto& v : variants) {
        table.variants.push_back(v.name);
        table.runs[v.name].resize(seeds.size());
    }

    std::vector<std::future<std::vector<AblationRun>>> futures;
    for (size_t s = 0; s < seeds.size(); ++s) {
        futures.push_back(std::async(std::launch::async, [&, s] {
            SceneConfig scene = base_scene;
            scene.seed = seeds[s];
            const auto frames = generate_sequence(scene, frames_per_seed);
            std::vector<AblationRun> per_variant;
            for (const auto& variant : variants)
                per_variant.push_back(run_variant(frames, variant.patch(base_cfg)));
            return per_variant;
        }));
    }
    for (size_t s = 0; s < seeds.size(); ++s) {
        auto per_variant = futures[s].get();
        for (size_t v = 0; v < variants.size(); ++v)
            table.runs[variants[v].name][s] = per_variant[v];
    }
    return table;
}

}  // namespace rgbdpose
