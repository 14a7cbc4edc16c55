#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgbdpose {

// ---------------------------------------------------------------------------
// Errors. The CLI maps IngestError to exit code 2 and every other Error to 3.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad arguments, out-of-bounds access, mismatched sizes.
struct InputError : Error {
    using Error::Error;
};

/// Fewer data points than the solver needs.
struct InsufficientDataError : Error {
    using Error::Error;
};

/// Rank-deficient / collinear / ill-conditioned configurations.
struct DegeneracyError : Error {
    using Error::Error;
};

/// The cheirality vote could not pick a unique pose candidate.
struct AmbiguityError : Error {
    using Error::Error;
};

/// Inlier selection shrank below the solvable minimum.
struct NoConsensusError : Error {
    using Error::Error;
};

/// Metric scale cannot be recovered (near-zero baseline).
struct ScaleError : Error {
    using Error::Error;
};

/// The pairwise pose graph does not connect all views.
struct ConnectivityError : Error {
    using Error::Error;
};

/// Malformed or missing input files.
struct IngestError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Camera model
// ---------------------------------------------------------------------------

/// Pinhole intrinsics. Pixel (u,v) = (column,row), pixel centers at integer
/// coordinates, so the valid continuous range is [-0.5, width-0.5) x
/// [-0.5, height-0.5).
struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    bool valid() const {
        return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 &&
               cx >= 0.0 && cx < width && cy >= 0.0 && cy < height;
    }

    bool contains(double u, double v) const {
        return u >= -0.5 && u < width - 0.5 && v >= -0.5 && v < height - 0.5;
    }

    Eigen::Matrix3d matrix() const {
        Eigen::Matrix3d k;
        k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
        return k;
    }
};

/// SE(3) pose with an optional similarity scale. scale == 1 means metric.
/// apply() maps p -> scale * R * p + t, so metric transforms act rigidly.
/// Up-to-scale estimates keep a unit-norm translation until the scale is
/// resolved.
struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();  // millimeters
    double scale = 1.0;

    static RigidTransform identity() { return {}; }

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
        return scale * (rotation * p) + translation;
    }

    /// this ∘ other: apply `other` first, then `this`.
    RigidTransform compose(const RigidTransform& other) const {
        RigidTransform out;
        out.rotation = rotation * other.rotation;
        out.translation = scale * (rotation * other.translation) + translation;
        out.scale = scale * other.scale;
        return out;
    }

    RigidTransform inverse() const {
        RigidTransform out;
        out.scale = 1.0 / scale;
        out.rotation = rotation.transpose();
        out.translation = -out.scale * (out.rotation * translation);
        return out;
    }

    bool orthonormal(double tol = 1e-9) const {
        const Eigen::Matrix3d err =
            rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
        return err.cwiseAbs().maxCoeff() <= tol &&
               std::abs(rotation.determinant() - 1.0) <= tol && scale > 0.0;
    }

    bool is_metric(double tol = 1e-9) const { return std::abs(scale - 1.0) <= tol; }
};

inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    return a.compose(b);
}

// ---------------------------------------------------------------------------
// Rasters and skeletons
// ---------------------------------------------------------------------------

/// Depth raster in millimeters, row-major, 0 = no measurement. Values are
/// kept as float in memory; the on-disk format quantizes to uint16.
struct DepthImage {
    int width = 0;
    int height = 0;
    std::vector<float> raster;  // height * width, row-major
    CameraIntrinsics intrinsics;

    static DepthImage zeros(const CameraIntrinsics& intr) {
        DepthImage img;
        img.width = intr.width;
        img.height = intr.height;
        img.intrinsics = intr;
        img.raster.assign(static_cast<size_t>(intr.width) * intr.height, 0.0f);
        return img;
    }

    float& at(int u, int v) { return raster[static_cast<size_t>(v) * width + u]; }
    float at(int u, int v) const { return raster[static_cast<size_t>(v) * width + u]; }
    bool in_bounds(int u, int v) const {
        return u >= 0 && u < width && v >= 0 && v < height;
    }
};

struct Skeleton2D {
    std::vector<Eigen::Vector2d> joints;  // pixels
    std::vector<std::uint8_t> valid;

    int joint_count() const { return static_cast<int>(joints.size()); }
    bool any_valid() const {
        for (auto v : valid)
            if (v) return true;
        return false;
    }
};

struct Skeleton3D {
    std::vector<Eigen::Vector3d> joints;  // millimeters
    std::vector<std::uint8_t> valid;

    int joint_count() const { return static_cast<int>(joints.size()); }
    bool any_valid() const {
        for (auto v : valid)
            if (v) return true;
        return false;
    }

    static Skeleton3D invalid(int num_joints) {
        Skeleton3D sk;
        sk.joints.assign(num_joints, Eigen::Vector3d::Zero());
        sk.valid.assign(num_joints, 0);
        return sk;
    }
};

// ---------------------------------------------------------------------------
// Detections and frames
// ---------------------------------------------------------------------------

/// One person in one view: 2D skeleton, its depth-lifted 3D counterpart in
/// the camera frame, and an appearance feature vector.
struct Detection {
    int view = -1;
    int index_in_view = -1;
    Skeleton2D skeleton2d;
    Skeleton3D skeleton3d_lifted;  // camera frame; empty when not lifted yet
    Eigen::VectorXd feature;
    std::array<double, 4> bbox{0, 0, 0, 0};  // x_min, y_min, x_max, y_max

    bool has_lift() const { return !skeleton3d_lifted.joints.empty(); }
};

/// Everything one camera contributes at one timestamp.
struct ViewData {
    CameraIntrinsics rgb_intrinsics;
    CameraIntrinsics depth_intrinsics;
    RigidTransform depth_to_rgb;  // depth-camera frame -> RGB-camera frame, metric
    DepthImage depth;             // raw depth-camera raster; may be empty
    std::vector<Detection> detections;
};

/// All views' inputs for one timestamp.
struct FrameBundle {
    int timestamp = 0;
    std::vector<ViewData> views;

    int view_count() const { return static_cast<int>(views.size()); }

    std::vector<const Detection*> all_detections() const {
        std::vector<const Detection*> out;
        for (const auto& v : views)
            for (const auto& d : v.detections) out.push_back(&d);
        return out;
    }
};

}  // namespace rgbdpose
