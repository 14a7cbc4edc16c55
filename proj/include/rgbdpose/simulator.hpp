#pragma once

#include "rgbdpose/geometry.hpp"
#include "rgbdpose/rng.hpp"
#include "rgbdpose/triangulation.hpp"
#include "rgbdpose/types.hpp"

#include <cmath>
#include <map>
#include <utility>
#include <vector>

namespace rgbdpose {

// ---------------------------------------------------------------------------
// Synthetic multi-camera RGBD scene generator. Cameras sit on a ring looking
// at the room center; people are parametric stick figures with per-person
// bone lengths; depth rasters are ray-cast floor/wall planes with constant-
// depth disks splatted at the joints. Everything is a pure function of
// (config, frame index), reproducible bit for bit.
//
// World frame: z up, origin at the room center on the floor. Camera frames:
// x right, y down, z forward.
// ---------------------------------------------------------------------------

struct SceneConfig {
    int num_views = 4;
    int num_people = 4;
    int num_joints = 13;  // the stick figure is defined for 13
    double room_x_mm = 8000.0;
    double room_y_mm = 8000.0;
    double wall_height_mm = 2500.0;
    double ring_radius_mm = 3500.0;
    double camera_height_mm = 1800.0;
    double pixel_noise = 0.0;       // px, Gaussian on 2D keypoints
    double depth_noise = 0.0;       // mm, Gaussian on depth measurements
    double depth_dropout = 0.0;     // probability of a missing depth value
    int feature_dim = 512;
    double feature_noise = 0.01;    // Gaussian per feature coordinate
    double detection_dropout = 0.0; // probability a visible person is missed
    int feature_swaps = 0;          // same-view identity corruptions
    std::uint64_t seed = 0;
    bool render_depth = true;       // rasters are only needed by the raster path

    void validate() const {
        if (num_views < 2) throw InputError("SceneConfig: num_views must be >= 2");
        if (num_people < 1) throw InputError("SceneConfig: num_people must be >= 1");
        if (num_joints != joints::kCount)
            throw InputError("SceneConfig: the stick figure defines 13 joints");
        if (pixel_noise < 0 || depth_noise < 0 || feature_noise < 0)
            throw InputError("SceneConfig: noise sigmas must be >= 0");
        for (double p : {depth_dropout, detection_dropout})
            if (p < 0.0 || p > 1.0)
                throw InputError("SceneConfig: probabilities must lie in [0,1]");
        if (feature_dim < 1) throw InputError("SceneConfig: feature_dim must be >= 1");
        if (feature_swaps < 0) throw InputError("SceneConfig: feature_swaps must be >= 0");
    }
};

struct CorruptionRecord {
    int view = -1;
    int index_a = -1, index_b = -1;   // swapped detections
    int person_a = -1, person_b = -1; // their true identities
};

struct GroundTruth {
    std::map<int, RigidTransform> extrinsics;  // world -> RGB camera, metric
    std::vector<Skeleton3D> people;            // world frame
    /// (view, index_in_view) -> person index; reflects the true geometry even
    /// after feature swaps.
    std::map<std::pair<int, int>, int> identity_of;
    std::vector<CorruptionRecord> corruptions;
};

struct SimulatedFrame {
    FrameBundle bundle;
    GroundTruth truth;
};

namespace sim_detail {

// Quarter-resolution 720p-style RGB raster and an even wider depth raster so
// registered depth covers the whole RGB frame.
inline CameraIntrinsics rgb_intrinsics() {
    return {304.0, 304.0, 319.5, 179.5, 640, 360};
}

inline CameraIntrinsics depth_intrinsics() {
    return {160.0, 160.0, 159.5, 143.5, 320, 288};
}

/// Depth camera sits 25mm to the left of the RGB camera, no rotation, so
/// registered depth values equal the RGB-frame Z exactly.
inline RigidTransform depth_to_rgb_transform() {
    RigidTransform t;
    t.translation = {25.0, 0.0, 0.0};
    return t;
}

inline RigidTransform look_at_extrinsic(const Eigen::Vector3d& center,
                                        const Eigen::Vector3d& target) {
    const Eigen::Vector3d forward = (target - center).normalized();
    const Eigen::Vector3d up{0.0, 0.0, 1.0};
    const Eigen::Vector3d x_cam = forward.cross(up).normalized();
    const Eigen::Vector3d y_cam = forward.cross(x_cam).normalized();
    RigidTransform extr;
    extr.rotation.row(0) = x_cam.transpose();
    extr.rotation.row(1) = y_cam.transpose();
    extr.rotation.row(2) = forward.transpose();
    extr.translation = -extr.rotation * center;
    return extr;
}

struct PersonShape {
    double scale = 1.0;
    Eigen::VectorXd feature_centroid;
};

/// Per-person constants shared by every frame of a sequence: body scale and
/// the appearance centroid (random unit vectors, pairwise distance ~sqrt(2)).
inline std::vector<PersonShape> person_shapes(const SceneConfig& cfg) {
    std::vector<PersonShape> shapes(cfg.num_people);
    Rng rng = Rng::stream(cfg.seed, 1);
    for (auto& s : shapes) {
        s.scale = 1.0 + rng.uniform(-0.1, 0.1);
        s.feature_centroid = rng.gaussian_vector(cfg.feature_dim, 1.0).normalized();
    }
    return shapes;
}

inline Skeleton3D pose_stick_figure(double base_x, double base_y, double facing,
                                    double s, Rng& rng) {
    using namespace joints;
    const Eigen::Vector3d lateral{-std::sin(facing), std::cos(facing), 0.0};

    const auto limb_dir = [&](double max_tilt_deg) {
        const double tilt = deg_to_rad(rng.uniform(5.0, max_tilt_deg));
        const double azim = rng.uniform(0.0, 2.0 * M_PI);
        return Eigen::Vector3d{std::sin(tilt) * std::cos(azim),
                               std::sin(tilt) * std::sin(azim), -std::cos(tilt)};
    };

    Skeleton3D sk;
    sk.joints.assign(kCount, Eigen::Vector3d::Zero());
    sk.valid.assign(kCount, 1);

    sk.joints[kNeck] = {base_x, base_y, 1450.0 * s};
    sk.joints[kLShoulder] = sk.joints[kNeck] + 180.0 * s * lateral +
                            Eigen::Vector3d{0, 0, -50.0 * s};
    sk.joints[kRShoulder] = sk.joints[kNeck] - 180.0 * s * lateral +
                            Eigen::Vector3d{0, 0, -50.0 * s};
    sk.joints[kLElbow] = sk.joints[kLShoulder] + 280.0 * s * limb_dir(50.0);
    sk.joints[kRElbow] = sk.joints[kRShoulder] + 280.0 * s * limb_dir(50.0);
    sk.joints[kLWrist] = sk.joints[kLElbow] + 250.0 * s * limb_dir(60.0);
    sk.joints[kRWrist] = sk.joints[kRElbow] + 250.0 * s * limb_dir(60.0);
    sk.joints[kLHip] = Eigen::Vector3d{base_x, base_y, 950.0 * s} + 110.0 * s * lateral;
    sk.joints[kRHip] = Eigen::Vector3d{base_x, base_y, 950.0 * s} - 110.0 * s * lateral;
    sk.joints[kLKnee] = sk.joints[kLHip] + 430.0 * s * limb_dir(25.0);
    sk.joints[kRKnee] = sk.joints[kRHip] + 430.0 * s * limb_dir(25.0);
    sk.joints[kLAnkle] = sk.joints[kLKnee] + 410.0 * s * limb_dir(25.0);
    sk.joints[kRAnkle] = sk.joints[kRKnee] + 410.0 * s * limb_dir(25.0);
    return sk;
}

/// Place people inside the camera ring with some separation; falls back to a
/// regular polygon when rejection sampling runs out of tries.
inline std::vector<std::pair<double, double>> place_people(const SceneConfig& cfg,
                                                           Rng& rng) {
    const double radius = std::min(1400.0, cfg.ring_radius_mm - 1200.0);
    const double min_sep = 750.0;
    std::vector<std::pair<double, double>> positions;
    for (int k = 0; k < cfg.num_people; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            const double ang = rng.uniform(0.0, 2.0 * M_PI);
            const double rad = radius * std::sqrt(rng.uniform());
            const double x = rad * std::cos(ang);
            const double y = rad * std::sin(ang);
            bool ok = true;
            for (const auto& [px, py] : positions)
                if (std::hypot(x - px, y - py) < min_sep) ok = false;
            if (ok) {
                positions.emplace_back(x, y);
                placed = true;
            }
        }
        if (!placed) {
            const double ang = 2.0 * M_PI * k / cfg.num_people;
            positions.emplace_back(0.8 * radius * std::cos(ang),
                                   0.8 * radius * std::sin(ang));
        }
    }
    return positions;
}

struct StaticSphere {
    Eigen::Vector3d center;
    double radius;
};

/// Static clutter placed low along the walls, below the camera-to-person
/// sightlines. Bare floor/wall planes leave in-plane translations
/// unconstrained for point-to-point registration; curved surfaces pin them.
inline std::vector<StaticSphere> static_clutter(const SceneConfig& cfg) {
    std::vector<StaticSphere> spheres;
    Rng rng = Rng::stream(cfg.seed, 6);
    const double ring_lo = 2100.0;
    const double ring_hi = std::min(cfg.ring_radius_mm - 300.0,
                                    std::min(cfg.room_x_mm, cfg.room_y_mm) / 2.0 - 500.0);
    const int count = 12;
    for (int i = 0; i < count; ++i) {
        const double ang = 2.0 * M_PI * (i + rng.uniform(0.0, 0.6)) / count;
        const double rad = rng.uniform(ring_lo, std::max(ring_lo + 1.0, ring_hi));
        StaticSphere s;
        s.radius = rng.uniform(200.0, 380.0);
        s.center = {rad * std::cos(ang), rad * std::sin(ang),
                    rng.uniform(150.0, 380.0)};
        spheres.push_back(s);
    }
    return spheres;
}

inline DepthImage render_depth_raster(const SceneConfig& cfg,
                                      const RigidTransform& depth_extr,
                                      const std::vector<Skeleton3D>& people,
                                      const std::vector<StaticSphere>& clutter,
                                      Rng& rng) {
    const CameraIntrinsics intr = depth_intrinsics();
    DepthImage img = DepthImage::zeros(intr);
    const Eigen::Matrix3d rot_t = depth_extr.rotation.transpose();
    const Eigen::Vector3d center = -rot_t * depth_extr.translation;
    const double half_x = cfg.room_x_mm / 2.0;
    const double half_y = cfg.room_y_mm / 2.0;
    const double near_clip = 300.0;

    for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
            // Camera ray parameterized by the camera-frame depth tau.
            const Eigen::Vector3d dir =
                rot_t * Eigen::Vector3d{(u - intr.cx) / intr.fx,
                                        (v - intr.cy) / intr.fy, 1.0};
            double best = 0.0;
            const auto consider = [&](double tau, const Eigen::Vector3d& p) {
                if (tau < near_clip) return;
                if (std::abs(p.x()) > half_x + 1.0 || std::abs(p.y()) > half_y + 1.0 ||
                    p.z() < -1.0 || p.z() > cfg.wall_height_mm + 1.0)
                    return;
                if (best == 0.0 || tau < best) best = tau;
            };
            if (std::abs(dir.z()) > 1e-12) {  // floor
                const double tau = (0.0 - center.z()) / dir.z();
                consider(tau, center + tau * dir);
            }
            for (double wall_x : {-half_x, half_x}) {
                if (std::abs(dir.x()) < 1e-12) continue;
                const double tau = (wall_x - center.x()) / dir.x();
                consider(tau, center + tau * dir);
            }
            for (double wall_y : {-half_y, half_y}) {
                if (std::abs(dir.y()) < 1e-12) continue;
                const double tau = (wall_y - center.y()) / dir.y();
                consider(tau, center + tau * dir);
            }
            for (const auto& sphere : clutter) {
                const Eigen::Vector3d oc = center - sphere.center;
                const double a = dir.squaredNorm();
                const double b = 2.0 * dir.dot(oc);
                const double c = oc.squaredNorm() - sphere.radius * sphere.radius;
                const double disc = b * b - 4.0 * a * c;
                if (disc < 0.0) continue;
                const double tau = (-b - std::sqrt(disc)) / (2.0 * a);
                consider(tau, center + tau * dir);
            }
            img.at(u, v) = static_cast<float>(best);
        }
    }

    // Splat each joint as a small constant-depth disk (nearest surface wins).
    constexpr int kSplatRadius = 3;
    for (const auto& person : people) {
        for (int d = 0; d < person.joint_count(); ++d) {
            const Eigen::Vector3d pc = depth_extr.apply(person.joints[d]);
            if (pc.z() <= near_clip) continue;
            const Eigen::Vector2d px = project_point(pc, intr);
            const int uc = static_cast<int>(std::lround(px.x()));
            const int vc = static_cast<int>(std::lround(px.y()));
            for (int dv = -kSplatRadius; dv <= kSplatRadius; ++dv) {
                for (int du = -kSplatRadius; du <= kSplatRadius; ++du) {
                    if (du * du + dv * dv > kSplatRadius * kSplatRadius) continue;
                    if (!img.in_bounds(uc + du, vc + dv)) continue;
                    float& cell = img.at(uc + du, vc + dv);
                    const float z = static_cast<float>(pc.z());
                    if (cell == 0.0f || z < cell) cell = z;
                }
            }
        }
    }

    if (cfg.depth_dropout > 0.0 || cfg.depth_noise > 0.0) {
        for (auto& cell : img.raster) {
            if (cell == 0.0f) continue;
            if (cfg.depth_dropout > 0.0 && rng.bernoulli(cfg.depth_dropout)) {
                cell = 0.0f;
                continue;
            }
            if (cfg.depth_noise > 0.0) {
                const double noisy = cell + rng.gaussian(cfg.depth_noise);
                cell = noisy > 0.0 ? static_cast<float>(noisy) : 0.0f;
            }
        }
    }
    return img;
}

}  // namespace sim_detail

inline std::pair<FrameBundle, std::vector<CorruptionRecord>> corrupt_correspondences(
    const FrameBundle& bundle, const GroundTruth& truth, int n_swaps,
    std::uint64_t seed);

/// Generate one timestamp of a simulated capture: camera ring, posed people,
/// per-view detections (noisy 2D keypoints, directly synthesized depth lift,
/// appearance features) and optionally ray-cast depth rasters.
inline SimulatedFrame generate_frame(const SceneConfig& cfg, int frame_index = 0) {
    cfg.validate();
    using namespace sim_detail;

    SimulatedFrame out;
    out.bundle.timestamp = frame_index;

    // Static rig, shared by every frame of the sequence.
    const CameraIntrinsics rgb_intr = rgb_intrinsics();
    const CameraIntrinsics depth_intr = depth_intrinsics();
    const RigidTransform t_dc = depth_to_rgb_transform();
    const Eigen::Vector3d target{0.0, 0.0, 850.0};
    for (int v = 0; v < cfg.num_views; ++v) {
        const double ang = 2.0 * M_PI * v / cfg.num_views;
        const Eigen::Vector3d center{cfg.ring_radius_mm * std::cos(ang),
                                     cfg.ring_radius_mm * std::sin(ang),
                                     cfg.camera_height_mm};
        out.truth.extrinsics[v] = look_at_extrinsic(center, target);
    }

    const auto shapes = person_shapes(cfg);
    const auto clutter = cfg.render_depth ? static_clutter(cfg)
                                          : std::vector<StaticSphere>{};

    Rng layout_rng = Rng::stream(cfg.seed, 2, static_cast<std::uint64_t>(frame_index));
    const auto positions = place_people(cfg, layout_rng);
    for (int k = 0; k < cfg.num_people; ++k) {
        const double facing = layout_rng.uniform(0.0, 2.0 * M_PI);
        out.truth.people.push_back(pose_stick_figure(
            positions[k].first, positions[k].second, facing, shapes[k].scale,
            layout_rng));
    }

    for (int v = 0; v < cfg.num_views; ++v) {
        ViewData view;
        view.rgb_intrinsics = rgb_intr;
        view.depth_intrinsics = depth_intr;
        view.depth_to_rgb = t_dc;
        const RigidTransform& extr = out.truth.extrinsics[v];
        const RigidTransform depth_extr = t_dc.inverse() * extr;

        Rng view_rng = Rng::stream(
            cfg.seed, 3, static_cast<std::uint64_t>(frame_index) * 1000 + v);

        for (int k = 0; k < cfg.num_people; ++k) {
            const Skeleton3D& person = out.truth.people[k];

            // Frustum test on the torso (neck and hips); limbs may leave the
            // raster and only lose their per-joint validity.
            bool visible = true;
            std::vector<Eigen::Vector3d> cam_pts(person.joint_count());
            std::vector<Eigen::Vector2d> proj(person.joint_count());
            for (int d = 0; d < person.joint_count() && visible; ++d) {
                cam_pts[d] = extr.apply(person.joints[d]);
                if (cam_pts[d].z() < 300.0) {
                    visible = false;
                    break;
                }
                proj[d] = project_point(cam_pts[d], rgb_intr);
                const bool torso = d == joints::kNeck || d == joints::kLHip ||
                                   d == joints::kRHip;
                if (torso &&
                    (proj[d].x() < 8.0 || proj[d].x() > rgb_intr.width - 9.0 ||
                     proj[d].y() < 8.0 || proj[d].y() > rgb_intr.height - 9.0))
                    visible = false;
            }
            if (!visible) continue;
            if (cfg.detection_dropout > 0.0 && view_rng.bernoulli(cfg.detection_dropout))
                continue;

            Detection det;
            det.view = v;
            det.index_in_view = static_cast<int>(view.detections.size());
            det.skeleton2d.joints.resize(person.joint_count());
            det.skeleton2d.valid.assign(person.joint_count(), 0);
            det.skeleton3d_lifted = Skeleton3D::invalid(person.joint_count());

            double min_x = 1e18, min_y = 1e18, max_x = -1e18, max_y = -1e18;
            for (int d = 0; d < person.joint_count(); ++d) {
                Eigen::Vector2d px = proj[d];
                if (cfg.pixel_noise > 0.0) {
                    px.x() += view_rng.gaussian(cfg.pixel_noise);
                    px.y() += view_rng.gaussian(cfg.pixel_noise);
                }
                det.skeleton2d.joints[d] = px;
                det.skeleton2d.valid[d] = rgb_intr.contains(px.x(), px.y()) ? 1 : 0;
                min_x = std::min(min_x, px.x());
                min_y = std::min(min_y, px.y());
                max_x = std::max(max_x, px.x());
                max_y = std::max(max_y, px.y());

                // Depth lift as the registration + sampling path would see
                // it: measured depth on the detected keypoint's ray.
                double z = cam_pts[d].z();
                if (cfg.depth_noise > 0.0) z += view_rng.gaussian(cfg.depth_noise);
                const bool dropped =
                    cfg.depth_dropout > 0.0 && view_rng.bernoulli(cfg.depth_dropout);
                if (det.skeleton2d.valid[d] && !dropped && z > 0.0) {
                    det.skeleton3d_lifted.joints[d] =
                        backproject_pixel(px.x(), px.y(), z, rgb_intr);
                    det.skeleton3d_lifted.valid[d] = 1;
                }
            }
            det.bbox = {min_x - 15.0, min_y - 15.0, max_x + 15.0, max_y + 15.0};
            det.feature = shapes[k].feature_centroid;
            if (cfg.feature_noise > 0.0)
                det.feature += view_rng.gaussian_vector(cfg.feature_dim,
                                                        cfg.feature_noise);
            out.truth.identity_of[{v, det.index_in_view}] = k;
            view.detections.push_back(std::move(det));
        }

        if (cfg.render_depth) {
            Rng raster_rng = Rng::stream(
                cfg.seed, 4, static_cast<std::uint64_t>(frame_index) * 1000 + v);
            view.depth = render_depth_raster(cfg, depth_extr, out.truth.people,
                                             clutter, raster_rng);
        }
        out.bundle.views.push_back(std::move(view));
    }

    if (cfg.feature_swaps > 0) {
        auto [bundle, records] = corrupt_correspondences(
            out.bundle, out.truth, cfg.feature_swaps,
            Rng::splitmix_combine(cfg.seed, 5000 + frame_index));
        out.bundle = std::move(bundle);
        out.truth.corruptions = std::move(records);
    }
    return out;
}

inline std::vector<SimulatedFrame> generate_sequence(const SceneConfig& cfg,
                                                     int num_frames) {
    std::vector<SimulatedFrame> frames;
    frames.reserve(num_frames);
    for (int t = 0; t < num_frames; ++t) frames.push_back(generate_frame(cfg, t));
    return frames;
}

/// Swap the appearance features of n same-view detection pairs, leaving the
/// geometry untouched. Downstream clustering then pairs the wrong bodies
/// across views. Every swapped detection is used at most once.
inline std::pair<FrameBundle, std::vector<CorruptionRecord>>
corrupt_correspondences(const FrameBundle& bundle, const GroundTruth& truth,
                        int n_swaps, std::uint64_t seed) {
    FrameBundle out = bundle;
    std::vector<CorruptionRecord> records;
    if (n_swaps == 0) return {out, records};

    // Candidate same-view pairs with unused detections.
    Rng rng(seed);
    std::vector<std::pair<int, int>> used;  // (view, index)
    const auto is_used = [&](int v, int n) {
        for (const auto& [uv, un] : used)
            if (uv == v && un == n) return true;
        return false;
    };

    for (int s = 0; s < n_swaps; ++s) {
        std::vector<std::pair<int, std::pair<int, int>>> candidates;
        for (int v = 0; v < out.view_count(); ++v) {
            const auto& dets = out.views[v].detections;
            for (size_t a = 0; a < dets.size(); ++a)
                for (size_t b = a + 1; b < dets.size(); ++b)
                    if (!is_used(v, static_cast<int>(a)) &&
                        !is_used(v, static_cast<int>(b)))
                        candidates.push_back(
                            {v, {static_cast<int>(a), static_cast<int>(b)}});
        }
        if (candidates.empty())
            throw InputError("corrupt_correspondences: not enough detection pairs");
        const auto& [view, pair] =
            candidates[rng.uniform_int(0, static_cast<int>(candidates.size()) - 1)];
        auto& dets = out.views[view].detections;
        std::swap(dets[pair.first].feature, dets[pair.second].feature);
        used.push_back({view, pair.first});
        used.push_back({view, pair.second});

        CorruptionRecord rec;
        rec.view = view;
        rec.index_a = pair.first;
        rec.index_b = pair.second;
        rec.person_a = truth.identity_of.at({view, pair.first});
        rec.person_b = truth.identity_of.at({view, pair.second});
        records.push_back(rec);
    }
    return {out, records};
}

}  // namespace rgbdpose
