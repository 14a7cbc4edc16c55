#pragma once

#include "rgbdpose/matching.hpp"
#include "rgbdpose/pose.hpp"
#include "rgbdpose/simulator.hpp"
#include "rgbdpose/triangulation.hpp"
#include "rgbdpose/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace rgbdpose {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// File formats.
//
// Depth raster (.depth): 16-byte header — magic "MVDD", u32 width, u32
// height, u32 reserved — followed by row-major little-endian u16 millimeter
// values, 0 = missing.
//
// Dataset layout:
//   view_<v>/intrinsics.json      {"rgb": ..., "depth": ..., "depth_to_rgb": ...}
//   view_<v>/frame_<t>.depth
//   frame_<t>/detections.json     [{view, index, bbox, joints, valid, feature}]
//   ground_truth.json             optional; written by the simulator
// ---------------------------------------------------------------------------

inline void write_depth_image(const fs::path& path, const DepthImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestError("cannot open for writing: " + path.string());
    const char magic[4] = {'M', 'V', 'D', 'D'};
    out.write(magic, 4);
    const std::uint32_t header[3] = {static_cast<std::uint32_t>(img.width),
                                     static_cast<std::uint32_t>(img.height), 0u};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    std::vector<std::uint16_t> row(img.width);
    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            const float val = img.at(u, v);
            const long q = std::lround(std::max(0.0f, val));
            row[u] = static_cast<std::uint16_t>(std::min(q, 65535L));
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(std::uint16_t)));
    }
    if (!out) throw IngestError("write failed: " + path.string());
}

/// Intrinsics must be supplied by the caller (the file stores only the grid).
inline DepthImage read_depth_image(const fs::path& path,
                                   const CameraIntrinsics& intr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open depth raster: " + path.string());
    char magic[4];
    std::uint32_t header[3];
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || std::memcmp(magic, "MVDD", 4) != 0)
        throw IngestError("bad depth raster header: " + path.string());
    const int width = static_cast<int>(header[0]);
    const int height = static_cast<int>(header[1]);
    if (width != intr.width || height != intr.height)
        throw IngestError("depth raster size mismatch vs intrinsics: " +
                          path.string());

    DepthImage img = DepthImage::zeros(intr);
    std::vector<std::uint16_t> row(width);
    for (int v = 0; v < height; ++v) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(std::uint16_t)));
        if (!in) throw IngestError("truncated depth raster: " + path.string());
        for (int u = 0; u < width; ++u)
            img.at(u, v) = static_cast<float>(row[u]);
    }
    return img;
}

// ---------------------------------------------------------------------------
// JSON conversions
// ---------------------------------------------------------------------------

inline json to_json(const CameraIntrinsics& intr) {
    return json{{"fx", intr.fx}, {"fy", intr.fy}, {"cx", intr.cx},
                {"cy", intr.cy}, {"width", intr.width}, {"height", intr.height}};
}

inline CameraIntrinsics intrinsics_from_json(const json& j, const std::string& where) {
    try {
        CameraIntrinsics intr;
        intr.fx = j.at("fx").get<double>();
        intr.fy = j.at("fy").get<double>();
        intr.cx = j.at("cx").get<double>();
        intr.cy = j.at("cy").get<double>();
        intr.width = j.at("width").get<int>();
        intr.height = j.at("height").get<int>();
        if (!intr.valid())
            throw IngestError("invalid intrinsics in " + where);
        return intr;
    } catch (const json::exception& e) {
        throw IngestError("malformed intrinsics in " + where + ": " + e.what());
    }
}

inline json to_json(const RigidTransform& t) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot.push_back(t.rotation(r, c));
    return json{{"rotation", rot},
                {"translation", {t.translation.x(), t.translation.y(),
                                 t.translation.z()}},
                {"scale", t.scale}};
}

inline RigidTransform transform_from_json(const json& j, const std::string& where) {
    try {
        RigidTransform t;
        const auto& rot = j.at("rotation");
        const auto& tr = j.at("translation");
        if (rot.size() != 9 || tr.size() != 3)
            throw IngestError("bad rotation/translation arity in " + where);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                t.rotation(r, c) = rot.at(r * 3 + c).get<double>();
        for (int i = 0; i < 3; ++i) t.translation[i] = tr.at(i).get<double>();
        t.scale = j.value("scale", 1.0);
        return t;
    } catch (const json::exception& e) {
        throw IngestError("malformed transform in " + where + ": " + e.what());
    }
}

inline json to_json(const Detection& d) {
    json joints = json::array();
    json valid = json::array();
    for (int i = 0; i < d.skeleton2d.joint_count(); ++i) {
        joints.push_back({d.skeleton2d.joints[i].x(), d.skeleton2d.joints[i].y()});
        valid.push_back(static_cast<bool>(d.skeleton2d.valid[i]));
    }
    json feature = json::array();
    for (int i = 0; i < d.feature.size(); ++i) feature.push_back(d.feature[i]);
    return json{{"view", d.view},
                {"index", d.index_in_view},
                {"bbox", {d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3]}},
                {"joints", joints},
                {"valid", valid},
                {"feature", feature}};
}

inline Detection detection_from_json(const json& j, const std::string& where) {
    try {
        Detection d;
        d.view = j.at("view").get<int>();
        d.index_in_view = j.at("index").get<int>();
        const auto& bbox = j.at("bbox");
        for (int i = 0; i < 4; ++i) d.bbox[i] = bbox.at(i).get<double>();
        const auto& joints = j.at("joints");
        const auto& valid = j.at("valid");
        if (joints.size() != valid.size())
            throw IngestError("joints/valid length mismatch in " + where);
        for (size_t i = 0; i < joints.size(); ++i) {
            d.skeleton2d.joints.emplace_back(joints.at(i).at(0).get<double>(),
                                             joints.at(i).at(1).get<double>());
            d.skeleton2d.valid.push_back(valid.at(i).get<bool>() ? 1 : 0);
        }
        const auto& feature = j.at("feature");
        d.feature.resize(static_cast<Eigen::Index>(feature.size()));
        for (size_t i = 0; i < feature.size(); ++i)
            d.feature[static_cast<Eigen::Index>(i)] = feature.at(i).get<double>();
        return d;
    } catch (const json::exception& e) {
        throw IngestError("malformed detection in " + where + ": " + e.what());
    }
}

inline json to_json(const Skeleton3D& sk) {
    json joints = json::array();
    json valid = json::array();
    for (int d = 0; d < sk.joint_count(); ++d) {
        joints.push_back({sk.joints[d].x(), sk.joints[d].y(), sk.joints[d].z()});
        valid.push_back(static_cast<bool>(sk.valid[d]));
    }
    return json{{"joints", joints}, {"valid", valid}};
}

inline Skeleton3D skeleton3d_from_json(const json& j, const std::string& where) {
    try {
        Skeleton3D sk;
        const auto& joints = j.at("joints");
        const auto& valid = j.at("valid");
        if (joints.size() != valid.size())
            throw IngestError("joints/valid length mismatch in " + where);
        for (size_t d = 0; d < joints.size(); ++d) {
            sk.joints.emplace_back(joints.at(d).at(0).get<double>(),
                                   joints.at(d).at(1).get<double>(),
                                   joints.at(d).at(2).get<double>());
            sk.valid.push_back(valid.at(d).get<bool>() ? 1 : 0);
        }
        return sk;
    } catch (const json::exception& e) {
        throw IngestError("malformed skeleton in " + where + ": " + e.what());
    }
}

inline json to_json(const BonePrior& prior) {
    json edges = json::array();
    for (const auto& [a, b] : prior.edges) edges.push_back({a, b});
    json sym = json::array();
    for (const auto& [a, b] : prior.symmetric_pairs) sym.push_back({a, b});
    return json{{"edges", edges}, {"symmetric", sym},
                {"tolerance", prior.length_tolerance}};
}

inline BonePrior bone_prior_from_json(const json& j, const std::string& where) {
    try {
        BonePrior prior;
        for (const auto& e : j.at("edges"))
            prior.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
        for (const auto& e : j.at("symmetric"))
            prior.symmetric_pairs.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
        prior.length_tolerance = j.value("tolerance", 0.5);
        for (const auto& [a, b] : prior.symmetric_pairs)
            if (a < 0 || b < 0 || a >= static_cast<int>(prior.edges.size()) ||
                b >= static_cast<int>(prior.edges.size()))
                throw IngestError("symmetric pair references missing edge in " + where);
        return prior;
    } catch (const json::exception& e) {
        throw IngestError("malformed bone prior in " + where + ": " + e.what());
    }
}

inline json assignment_to_json(const Assignment& assignment) {
    json clusters = json::array();
    const auto members = assignment.members();
    for (int k = 0; k < assignment.num_clusters; ++k) {
        json member_list = json::array();
        for (const auto& [view, index] : members[k])
            member_list.push_back({view, index});
        clusters.push_back(json{{"id", k}, {"members", member_list}});
    }
    return json{{"clusters", clusters}};
}

inline Assignment assignment_from_json(const json& j, const std::string& where) {
    try {
        Assignment a;
        a.num_clusters = static_cast<int>(j.at("clusters").size());
        for (const auto& cluster : j.at("clusters")) {
            const int id = cluster.at("id").get<int>();
            for (const auto& member : cluster.at("members"))
                a.w[{member.at(0).get<int>(), member.at(1).get<int>()}] = id;
        }
        return a;
    } catch (const json::exception& e) {
        throw IngestError("malformed assignment in " + where + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IngestError("malformed JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

inline void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw IngestError("write failed: " + path.string());
}

inline std::string frame_name(int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d", t);
    return buf;
}

/// Write a simulated sequence in the dataset layout, plus ground_truth.json.
inline void write_dataset(const fs::path& dir,
                          const std::vector<SimulatedFrame>& frames) {
    if (frames.empty()) throw InputError("write_dataset: no frames");
    fs::create_directories(dir);
    const int num_views = frames.front().bundle.view_count();
    for (int v = 0; v < num_views; ++v) {
        const fs::path view_dir = dir / ("view_" + std::to_string(v));
        fs::create_directories(view_dir);
        const auto& view = frames.front().bundle.views[v];
        json intr{{"rgb", to_json(view.rgb_intrinsics)},
                  {"depth", to_json(view.depth_intrinsics)},
                  {"depth_to_rgb", to_json(view.depth_to_rgb)}};
        write_json_file(view_dir / "intrinsics.json", intr);
    }
    json gt_frames = json::array();
    for (const auto& frame : frames) {
        const int t = frame.bundle.timestamp;
        const fs::path frame_dir = dir / frame_name(t);
        fs::create_directories(frame_dir);
        json detections = json::array();
        for (int v = 0; v < frame.bundle.view_count(); ++v) {
            const auto& view = frame.bundle.views[v];
            for (const auto& det : view.detections)
                detections.push_back(to_json(det));
            if (!view.depth.raster.empty())
                write_depth_image(dir / ("view_" + std::to_string(v)) /
                                      (frame_name(t) + ".depth"),
                                  view.depth);
        }
        write_json_file(frame_dir / "detections.json", detections);

        json people = json::array();
        for (size_t k = 0; k < frame.truth.people.size(); ++k) {
            json person = to_json(frame.truth.people[k]);
            person["id"] = static_cast<int>(k);
            people.push_back(person);
        }
        gt_frames.push_back(json{{"frame", t}, {"people", people}});
    }
    json poses;
    for (const auto& [v, extr] : frames.front().truth.extrinsics)
        poses[std::to_string(v)] = to_json(extr);
    write_json_file(dir / "ground_truth.json",
                    json{{"poses", poses}, {"frames", gt_frames}});
}

/// Read a dataset directory back into frame bundles, validating the layout.
inline std::vector<FrameBundle> ingest_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw IngestError("dataset directory missing: " + dir.string());

    // Views: contiguous from 0.
    std::vector<ViewData> view_templates;
    for (int v = 0;; ++v) {
        const fs::path view_dir = dir / ("view_" + std::to_string(v));
        if (!fs::is_directory(view_dir)) break;
        const fs::path intr_path = view_dir / "intrinsics.json";
        if (!fs::exists(intr_path))
            throw IngestError("missing intrinsics: " + intr_path.string());
        const json j = read_json_file(intr_path);
        ViewData view;
        view.rgb_intrinsics =
            intrinsics_from_json(j.at("rgb"), intr_path.string() + ":rgb");
        view.depth_intrinsics =
            intrinsics_from_json(j.at("depth"), intr_path.string() + ":depth");
        view.depth_to_rgb = transform_from_json(j.at("depth_to_rgb"),
                                                intr_path.string() + ":depth_to_rgb");
        view_templates.push_back(std::move(view));
    }
    if (view_templates.empty())
        throw IngestError("no view_<v> directories under " + dir.string());

    std::vector<FrameBundle> bundles;
    for (int t = 0;; ++t) {
        const fs::path frame_dir = dir / frame_name(t);
        if (!fs::is_directory(frame_dir)) break;
        FrameBundle bundle;
        bundle.timestamp = t;
        bundle.views = view_templates;

        for (int v = 0; v < static_cast<int>(view_templates.size()); ++v) {
            const fs::path depth_path = dir / ("view_" + std::to_string(v)) /
                                        (frame_name(t) + ".depth");
            if (fs::exists(depth_path))
                bundle.views[v].depth = read_depth_image(
                    depth_path, bundle.views[v].depth_intrinsics);
        }

        const fs::path det_path = frame_dir / "detections.json";
        if (!fs::exists(det_path))
            throw IngestError("missing detections: " + det_path.string());
        const json dets = read_json_file(det_path);
        for (size_t i = 0; i < dets.size(); ++i) {
            Detection d = detection_from_json(
                dets.at(i), det_path.string() + "[" + std::to_string(i) + "]");
            if (d.view < 0 || d.view >= static_cast<int>(view_templates.size()))
                throw IngestError("detection references unknown view " +
                                  std::to_string(d.view) + " in " +
                                  det_path.string());
            bundle.views[d.view].detections.push_back(std::move(d));
        }
        bundles.push_back(std::move(bundle));
    }
    if (bundles.empty())
        throw IngestError("no frame_<t> directories under " + dir.string());
    return bundles;
}

/// Ground truth as written by the simulator: camera poses plus per-frame
/// skeletons.
struct GroundTruthFile {
    std::map<int, RigidTransform> poses;
    std::map<int, std::vector<Skeleton3D>> people_by_frame;
};

inline GroundTruthFile read_ground_truth(const fs::path& path) {
    const json j = read_json_file(path);
    GroundTruthFile out;
    try {
        for (const auto& [key, val] : j.at("poses").items())
            out.poses[std::stoi(key)] =
                transform_from_json(val, path.string() + ":poses." + key);
        for (const auto& frame : j.at("frames")) {
            const int t = frame.at("frame").get<int>();
            for (const auto& person : frame.at("people"))
                out.people_by_frame[t].push_back(
                    skeleton3d_from_json(person, path.string()));
        }
    } catch (const json::exception& e) {
        throw IngestError("malformed ground truth in " + path.string() + ": " +
                          e.what());
    }
    return out;
}

inline json calibration_to_json(const std::map<int, RigidTransform>& extrinsics,
                                const std::map<int, int>& inlier_counts,
                                const std::map<int, double>& residuals,
                                const std::vector<CycleResidual>& cycles,
                                int anchor) {
    json views;
    for (const auto& [v, extr] : extrinsics) {
        json entry = to_json(extr);
        entry["inlier_count"] =
            inlier_counts.count(v) ? inlier_counts.at(v) : 0;
        entry["residual"] = residuals.count(v) ? residuals.at(v) : 0.0;
        views[std::to_string(v)] = entry;
    }
    json cycle_list = json::array();
    for (const auto& c : cycles)
        cycle_list.push_back(json{{"view_i", c.view_i},
                                  {"view_j", c.view_j},
                                  {"rotation_deg", c.rotation_deg},
                                  {"translation_mm", c.translation_mm}});
    return json{{"anchor", anchor}, {"views", views},
                {"cycle_residuals", cycle_list}};
}

inline std::map<int, RigidTransform> calibration_from_json(const json& j,
                                                           const std::string& where) {
    std::map<int, RigidTransform> out;
    try {
        for (const auto& [key, val] : j.at("views").items())
            out[std::stoi(key)] = transform_from_json(val, where + ":" + key);
    } catch (const json::exception& e) {
        throw IngestError("malformed calibration in " + where + ": " + e.what());
    }
    return out;
}

/// FNV-1a over a byte string; used for run-manifest hashes.
inline std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace rgbdpose
