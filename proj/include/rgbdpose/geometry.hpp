#pragma once

#include "rgbdpose/types.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace rgbdpose {

// ---------------------------------------------------------------------------
// Pinhole camera math: back-projection, projection, depth-to-RGB raster
// registration and 2D-keypoint lifting. All distances in millimeters,
// all functions pure.
// ---------------------------------------------------------------------------

/// Back-project pixel (u,v) with a depth measurement into the camera frame:
/// X = depth * (u - cx) / fx, Y = depth * (v - cy) / fy, Z = depth.
inline Eigen::Vector3d backproject_pixel(double u, double v, double depth_mm,
                                         const CameraIntrinsics& intr) {
    if (!(depth_mm > 0.0))
        throw InputError("backproject_pixel: no depth measurement at pixel");
    if (!intr.contains(u, v))
        throw InputError("backproject_pixel: pixel outside raster bounds");
    return {depth_mm * (u - intr.cx) / intr.fx,
            depth_mm * (v - intr.cy) / intr.fy, depth_mm};
}

/// Project a camera-frame point to pixel coordinates.
inline Eigen::Vector2d project_point(const Eigen::Vector3d& p,
                                     const CameraIntrinsics& intr) {
    if (!(p.z() > 0.0))
        throw InputError("project_point: point behind camera (z <= 0)");
    return {intr.fx * p.x() / p.z() + intr.cx,
            intr.fy * p.y() / p.z() + intr.cy};
}

/// Reproject a depth raster into the RGB camera geometry. Each output pixel
/// holds the camera-frame Z of the transformed depth point that lands there;
/// 0 where nothing maps. When several depth pixels collide on one RGB pixel
/// the smaller Z wins (nearest surface).
inline DepthImage register_depth_to_rgb(const DepthImage& depth,
                                        const CameraIntrinsics& rgb_intr,
                                        const RigidTransform& depth_to_rgb) {
    if (!depth_to_rgb.is_metric())
        throw InputError("register_depth_to_rgb: transform must be metric (scale=1)");
    if (!rgb_intr.valid())
        throw InputError("register_depth_to_rgb: invalid RGB intrinsics");

    DepthImage out = DepthImage::zeros(rgb_intr);
    for (int v = 0; v < depth.height; ++v) {
        for (int u = 0; u < depth.width; ++u) {
            const float d = depth.at(u, v);
            if (!(d > 0.0f)) continue;
            const Eigen::Vector3d pd =
                backproject_pixel(u, v, static_cast<double>(d), depth.intrinsics);
            const Eigen::Vector3d pc = depth_to_rgb.apply(pd);
            if (!(pc.z() > 0.0)) continue;
            const Eigen::Vector2d px = project_point(pc, rgb_intr);
            const int uc = static_cast<int>(std::lround(px.x()));
            const int vc = static_cast<int>(std::lround(px.y()));
            if (!out.in_bounds(uc, vc)) continue;
            float& cell = out.at(uc, vc);
            const float zc = static_cast<float>(pc.z());
            if (cell == 0.0f || zc < cell) cell = zc;
        }
    }
    return out;
}

/// Depth value at a keypoint: the rounded pixel directly, else the median of
/// nonzero values in a (2r+1)^2 window. 0 means no measurement anywhere.
inline double sample_depth(const DepthImage& img, double u, double v,
                           int window_radius = 2) {
    const int ui = static_cast<int>(std::lround(u));
    const int vi = static_cast<int>(std::lround(v));
    if (!img.in_bounds(ui, vi)) return 0.0;
    const float direct = img.at(ui, vi);
    if (direct > 0.0f) return static_cast<double>(direct);

    std::vector<float> window;
    for (int dv = -window_radius; dv <= window_radius; ++dv) {
        for (int du = -window_radius; du <= window_radius; ++du) {
            const int uu = ui + du;
            const int vv = vi + dv;
            if (!img.in_bounds(uu, vv)) continue;
            const float val = img.at(uu, vv);
            if (val > 0.0f) window.push_back(val);
        }
    }
    if (window.empty()) return 0.0;
    std::sort(window.begin(), window.end());
    const size_t n = window.size();
    if (n % 2 == 1) return window[n / 2];
    return 0.5 * (static_cast<double>(window[n / 2 - 1]) + window[n / 2]);
}

/// Lift a 2D skeleton to the RGB-camera frame using a depth raster already
/// registered to the RGB geometry. A joint comes out valid only when the
/// input joint is valid and a depth measurement was found; keypoints never
/// get fabricated.
inline Skeleton3D lift_skeleton(const Skeleton2D& sk,
                                const DepthImage& registered_depth,
                                int window_radius = 2) {
    const int num_joints = sk.joint_count();
    Skeleton3D out = Skeleton3D::invalid(num_joints);
    for (int d = 0; d < num_joints; ++d) {
        if (!sk.valid[d]) continue;
        const Eigen::Vector2d& px = sk.joints[d];
        if (!registered_depth.intrinsics.contains(px.x(), px.y())) continue;
        const double depth =
            sample_depth(registered_depth, px.x(), px.y(), window_radius);
        if (!(depth > 0.0)) continue;
        out.joints[d] =
            backproject_pixel(px.x(), px.y(), depth, registered_depth.intrinsics);
        out.valid[d] = 1;
    }
    return out;
}

/// Rotation angle of R in radians, with the trace argument clamped so noisy
/// near-identity matrices do not produce NaN.
inline double rotation_angle(const Eigen::Matrix3d& r) {
    const double arg = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(arg);
}

/// Angle between two rotations in radians.
inline double rotation_angle_between(const Eigen::Matrix3d& a,
                                     const Eigen::Matrix3d& b) {
    return rotation_angle(a.transpose() * b);
}

inline double rad_to_deg(double rad) { return rad * 180.0 / M_PI; }
inline double deg_to_rad(double deg) { return deg * M_PI / 180.0; }

}  // namespace rgbdpose
