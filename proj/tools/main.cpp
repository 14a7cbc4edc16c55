// Command-line front end: simulate / match / calibrate / triangulate /
// evaluate / pipeline. Exit codes: 0 success, 2 ingestion error, 3 numerical
// failure.

#include "rgbdpose/evaluation.hpp"
#include "rgbdpose/io.hpp"
#include "rgbdpose/pipeline.hpp"
#include "rgbdpose/simulator.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

using namespace rgbdpose;

namespace {

json assignment_file_json(int frame, const Assignment& assignment) {
    json j = assignment_to_json(assignment);
    j["frame"] = frame;
    return j;
}

void write_assignments(const fs::path& out_dir,
                       const std::vector<FrameBundle>& bundles,
                       const std::vector<Assignment>& assignments) {
    fs::create_directories(out_dir / "assignments");
    for (size_t t = 0; t < assignments.size(); ++t)
        write_json_file(out_dir / "assignments" /
                            (frame_name(bundles[t].timestamp) + ".json"),
                        assignment_file_json(bundles[t].timestamp, assignments[t]));
}

std::vector<Assignment> read_assignments(const fs::path& dir,
                                         const std::vector<FrameBundle>& bundles) {
    std::vector<Assignment> out;
    for (const auto& bundle : bundles) {
        const fs::path path =
            dir / "assignments" / (frame_name(bundle.timestamp) + ".json");
        if (!fs::exists(path))
            throw IngestError("missing assignment file: " + path.string());
        out.push_back(assignment_from_json(read_json_file(path), path.string()));
    }
    return out;
}

void write_skeletons(const fs::path& out_dir,
                     const std::vector<FrameSkeletons>& frames) {
    fs::create_directories(out_dir / "skeletons");
    for (const auto& frame : frames) {
        json people = json::array();
        for (size_t i = 0; i < frame.people.size(); ++i) {
            json person = to_json(frame.people[i]);
            person["id"] = frame.ids[i];
            people.push_back(person);
        }
        write_json_file(out_dir / "skeletons" / (frame_name(frame.frame) + ".json"),
                        json{{"frame", frame.frame}, {"people", people}});
    }
}

void write_calibration(const fs::path& path, const CalibrationResult& calib,
                       int anchor) {
    write_json_file(path, calibration_to_json(calib.extrinsics, calib.inlier_counts,
                                              calib.residuals,
                                              calib.cycle_residuals, anchor));
}

std::uint64_t hash_directory(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& file : files) {
        h = fnv1a(fs::relative(file, dir).string(), h);
        std::ifstream in(file, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        h = fnv1a(bytes, h);
    }
    return h;
}

struct CommonOptions {
    std::string input_dir;
    std::string config_path;
    std::string bone_prior_path;
    PipelineConfig cfg;
};

void add_pipeline_flags(CLI::App* cmd, CommonOptions& opts, bool with_pose_flags,
                        bool with_triangulation_flags) {
    cmd->add_option("--in", opts.input_dir, "dataset directory")->required();
    cmd->add_option("--k", opts.cfg.num_people, "number of people (clusters)");
    cmd->add_option("--seed", opts.cfg.seed, "seed for the clustering stage");
    cmd->add_option("--config", opts.config_path,
                    "JSON config; values in the file override flags");
    if (with_pose_flags) {
        cmd->add_option("--threshold", opts.cfg.pose_threshold,
                        "pose selection residual threshold");
        cmd->add_option("--anchor", opts.cfg.anchor_view, "anchor view index");
        cmd->add_flag("--icp,!--no-icp", opts.cfg.use_icp, "trimmed-ICP refinement");
        cmd->add_option("--trim", opts.cfg.icp.trim_fraction, "ICP trim fraction");
        cmd->add_flag("--depth-guide,!--no-depth-guide", opts.cfg.use_depth_guide,
                      "depth-guided pose selection");
        cmd->add_option("--window", opts.cfg.calibration_window,
                        "frames pooled for calibration");
    }
    if (with_triangulation_flags) {
        cmd->add_option("--depth-threshold", opts.cfg.depth_anchor_threshold_mm,
                        "anchor acceptance distance (mm)");
        cmd->add_option("--lambda", opts.cfg.regularization_lambda,
                        "anchor regularization weight");
        std::map<std::string, TriangulationMode> modes{
            {"constrained", TriangulationMode::constrained},
            {"naive", TriangulationMode::naive},
            {"force-anchors", TriangulationMode::force_anchors}};
        cmd->add_option("--triangulation", opts.cfg.triangulation,
                        "constrained | naive | force-anchors")
            ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
        cmd->add_flag("--bone-filter,!--no-bone-filter", opts.cfg.apply_bone_filter,
                      "bone-length/symmetry filtering");
        cmd->add_option("--bone-prior", opts.bone_prior_path,
                        "JSON skeleton tree overriding the built-in layout");
    }
}

void finalize_config(CommonOptions& opts) {
    if (!opts.bone_prior_path.empty())
        opts.cfg.custom_bone_prior = bone_prior_from_json(
            read_json_file(opts.bone_prior_path), opts.bone_prior_path);
    if (!opts.config_path.empty())
        apply_config_json(opts.cfg, read_json_file(opts.config_path));
    if (opts.cfg.num_people < 1)
        throw InputError("--k (number of people) is required, or set it in --config");
}

int run_simulate(const SceneConfig& scene, int frames, const std::string& out_dir) {
    scene.validate();
    const auto sequence = generate_sequence(scene, frames);
    write_dataset(out_dir, sequence);
    log_line("info", "simulate", -1,
             "wrote " + std::to_string(frames) + " frames to " + out_dir);
    return 0;
}

int run_match(CommonOptions& opts, const std::string& out_dir) {
    finalize_config(opts);
    const auto bundles = ingest_dataset(opts.input_dir);
    const auto assignments = match_stage(bundles, opts.cfg);
    write_assignments(out_dir, bundles, assignments);
    log_line("info", "match", -1,
             "clustered " + std::to_string(bundles.size()) + " frames");
    return 0;
}

int run_calibrate(CommonOptions& opts, const std::string& assignments_dir,
                  const std::string& out_path) {
    finalize_config(opts);
    const auto bundles = ingest_dataset(opts.input_dir);
    const auto assignments = read_assignments(assignments_dir, bundles);
    const auto calib = calibrate_stage(bundles, assignments, opts.cfg);
    write_calibration(out_path, calib, opts.cfg.anchor_view);
    log_line("info", "calibrate", -1,
             "solved " + std::to_string(calib.extrinsics.size()) + " views");
    return 0;
}

int run_triangulate(CommonOptions& opts, const std::string& assignments_dir,
                    const std::string& calibration_path, const std::string& out_dir) {
    finalize_config(opts);
    const auto bundles = ingest_dataset(opts.input_dir);
    const auto assignments = read_assignments(assignments_dir, bundles);
    const auto extrinsics = calibration_from_json(read_json_file(calibration_path),
                                                  calibration_path);
    const auto frames = triangulate_stage(bundles, assignments, extrinsics, opts.cfg);
    write_skeletons(out_dir, frames);
    log_line("info", "triangulate", -1,
             "reconstructed " + std::to_string(frames.size()) + " frames");
    return 0;
}

int run_pipeline_cmd(CommonOptions& opts, const std::string& out_dir) {
    finalize_config(opts);
    const auto bundles = ingest_dataset(opts.input_dir);
    const auto result = run_pipeline(bundles, opts.cfg);

    fs::create_directories(out_dir);
    write_assignments(out_dir, bundles, result.assignments);
    write_calibration(fs::path(out_dir) / "calibration.json", result.calibration,
                      opts.cfg.anchor_view);
    write_skeletons(out_dir, result.frames);

    json manifest;
    manifest["config"] = to_json(opts.cfg);
    manifest["config_hash"] = fnv1a(to_json(opts.cfg).dump());
    manifest["dataset_hash"] = hash_directory(opts.input_dir);
    manifest["report"] = result.report;
    write_json_file(fs::path(out_dir) / "manifest.json", manifest);
    log_line("info", "pipeline", -1, "outputs written to " + out_dir);
    return 0;
}

int run_evaluate(const std::string& pred_dir, const std::string& gt_dir,
                 double alpha, bool gauge_align, const std::string& report_path) {
    const GroundTruthFile gt = read_ground_truth(fs::path(gt_dir) / "ground_truth.json");

    json report;

    const fs::path calib_path = fs::path(pred_dir) / "calibration.json";
    if (fs::exists(calib_path)) {
        const auto pred_poses =
            calibration_from_json(read_json_file(calib_path), calib_path.string());
        const CameraError cam = camera_error(pred_poses, gt.poses, gauge_align);
        json per_view;
        for (const auto& [v, e] : cam.per_view)
            per_view[std::to_string(v)] = {{"rotation_deg", e.rotation_deg},
                                           {"translation_mm", e.translation_mm}};
        report["camera"] = {{"mean_rotation_deg", cam.mean_rotation_deg},
                            {"mean_translation_mm", cam.mean_translation_mm},
                            {"per_view", per_view},
                            {"gauge_aligned", gauge_align}};
        std::printf("camera: rotation %.3f deg, translation %.2f mm\n",
                    cam.mean_rotation_deg, cam.mean_translation_mm);
    }

    const BonePrior prior = default_bone_prior();
    double pcp_sum = 0.0;
    int pcp_frames = 0;
    std::vector<double> actor_sum;
    std::vector<double> part_sum;
    json frame_reports = json::array();
    for (const auto& [t, gt_people] : gt.people_by_frame) {
        const fs::path sk_path =
            fs::path(pred_dir) / "skeletons" / (frame_name(t) + ".json");
        if (!fs::exists(sk_path)) continue;
        const json j = read_json_file(sk_path);
        std::vector<Skeleton3D> pred_people;
        for (const auto& person : j.at("people"))
            pred_people.push_back(skeleton3d_from_json(person, sk_path.string()));

        // The gauge between the reconstruction frame and the ground-truth
        // world is removed with the camera alignment when poses exist.
        std::vector<Skeleton3D> aligned = pred_people;
        if (fs::exists(calib_path) && gauge_align) {
            const auto pred_poses = calibration_from_json(
                read_json_file(calib_path), calib_path.string());
            std::vector<Eigen::Vector3d> c_pred, c_gt, ax_pred, ax_gt;
            for (const auto& [v, e] : pred_poses) {
                c_pred.push_back(camera_center(e));
                c_gt.push_back(camera_center(gt.poses.at(v)));
                ax_pred.push_back(e.rotation.row(2).transpose());
                ax_gt.push_back(gt.poses.at(v).rotation.row(2).transpose());
            }
            const RigidTransform gauge =
                align_similarity(c_pred, c_gt, &ax_pred, &ax_gt);
            for (auto& sk : aligned)
                for (int d = 0; d < sk.joint_count(); ++d)
                    sk.joints[d] = gauge.apply(sk.joints[d]);
        }

        const PcpReport frame_pcp = pcp(aligned, gt_people, prior, alpha);
        pcp_sum += frame_pcp.average;
        ++pcp_frames;
        if (actor_sum.size() < frame_pcp.per_actor.size())
            actor_sum.resize(frame_pcp.per_actor.size(), 0.0);
        for (size_t a = 0; a < frame_pcp.per_actor.size(); ++a)
            actor_sum[a] += frame_pcp.per_actor[a];
        if (part_sum.size() < frame_pcp.per_part.size())
            part_sum.resize(frame_pcp.per_part.size(), 0.0);
        for (size_t e = 0; e < frame_pcp.per_part.size(); ++e)
            part_sum[e] += frame_pcp.per_part[e];
        frame_reports.push_back(json{{"frame", t}, {"pcp", frame_pcp.average}});
    }
    if (pcp_frames > 0) {
        json actors = json::array();
        for (double s : actor_sum) actors.push_back(s / pcp_frames);
        json parts = json::array();
        for (double s : part_sum) parts.push_back(s / pcp_frames);
        report["pcp"] = {{"average", pcp_sum / pcp_frames},
                         {"per_actor", actors},
                         {"per_part", parts},
                         {"alpha", alpha},
                         {"frames", frame_reports}};
        std::printf("pcp: %.1f over %d frames\n", pcp_sum / pcp_frames, pcp_frames);
    }

    if (!report_path.empty()) write_json_file(report_path, report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-view RGBD human pose reconstruction"};
    app.require_subcommand(1);

    // simulate
    SceneConfig scene;
    int sim_frames = 1;
    std::string sim_out;
    double sim_detection_dropout = 0.0;
    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    sim->add_option("--views", scene.num_views, "number of cameras");
    sim->add_option("--people", scene.num_people, "number of people");
    sim->add_option("--seed", scene.seed, "scene seed");
    sim->add_option("--px-noise", scene.pixel_noise, "2D keypoint noise (px)");
    sim->add_option("--depth-noise", scene.depth_noise, "depth noise (mm)");
    sim->add_option("--dropout", scene.depth_dropout, "depth dropout probability");
    sim->add_option("--detection-dropout", sim_detection_dropout,
                    "probability a visible person is missed");
    sim->add_option("--swaps", scene.feature_swaps, "same-view feature swaps");
    sim->add_option("--frames", sim_frames, "number of frames");
    sim->add_option("--out", sim_out, "output dataset directory")->required();

    // match
    CommonOptions match_opts;
    std::string match_out;
    auto* match = app.add_subcommand("match", "cluster detections into identities");
    add_pipeline_flags(match, match_opts, false, false);
    match->add_option("--out", match_out, "output directory")->required();

    // calibrate
    CommonOptions calib_opts;
    std::string calib_assignments, calib_out;
    auto* calibrate = app.add_subcommand("calibrate", "estimate camera poses");
    add_pipeline_flags(calibrate, calib_opts, true, false);
    calibrate->add_option("--assignments", calib_assignments,
                          "directory holding assignments/")->required();
    calibrate->add_option("--out", calib_out, "calibration JSON path")->required();

    // triangulate
    CommonOptions tri_opts;
    std::string tri_assignments, tri_calibration, tri_out;
    auto* triangulate = app.add_subcommand("triangulate", "reconstruct 3D skeletons");
    add_pipeline_flags(triangulate, tri_opts, false, true);
    triangulate->add_option("--assignments", tri_assignments,
                            "directory holding assignments/")->required();
    triangulate->add_option("--calibration", tri_calibration,
                            "calibration JSON path")->required();
    triangulate->add_option("--out", tri_out, "output directory")->required();

    // evaluate
    std::string eval_pred, eval_gt, eval_report;
    double eval_alpha = 0.5;
    bool eval_gauge = true;
    auto* evaluate = app.add_subcommand("evaluate", "compare against ground truth");
    evaluate->add_option("--pred", eval_pred, "prediction directory")->required();
    evaluate->add_option("--gt", eval_gt, "ground-truth dataset directory")->required();
    evaluate->add_option("--alpha", eval_alpha, "part-correctness fraction");
    evaluate->add_flag("--gauge-align,!--raw", eval_gauge,
                       "align gauges before comparing");
    evaluate->add_option("--report", eval_report, "report JSON path");

    // pipeline
    CommonOptions pipe_opts;
    std::string pipe_out;
    auto* pipeline = app.add_subcommand("pipeline", "run every stage");
    add_pipeline_flags(pipeline, pipe_opts, true, true);
    pipeline->add_option("--out", pipe_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            scene.detection_dropout = sim_detection_dropout;
            return run_simulate(scene, sim_frames, sim_out);
        }
        if (match->parsed()) return run_match(match_opts, match_out);
        if (calibrate->parsed())
            return run_calibrate(calib_opts, calib_assignments, calib_out);
        if (triangulate->parsed())
            return run_triangulate(tri_opts, tri_assignments, tri_calibration, tri_out);
        if (evaluate->parsed())
            return run_evaluate(eval_pred, eval_gt, eval_alpha, eval_gauge, eval_report);
        if (pipeline->parsed()) return run_pipeline_cmd(pipe_opts, pipe_out);
    } catch (const IngestError& e) {
        log_line("error", "cli", -1, e.what());
        return 2;
    } catch (const std::exception& e) {
        log_line("error", "cli", -1, e.what());
        return 3;
    }
    return 0;
}
