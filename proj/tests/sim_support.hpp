#pragma once

// Simulator-backed helpers for pose and triangulation tests. Correspondences
// are built from ground-truth identity labels, bypassing the clustering
// stage, so the solvers under test are isolated from matching errors.

#include "rgbdpose/pose.hpp"
#include "rgbdpose/simulator.hpp"

#include <map>
#include <vector>

namespace test_support {

using namespace rgbdpose;

inline CorrespondenceSet truth_correspondences(const SimulatedFrame& frame,
                                               int view_i, int view_j) {
    CorrespondenceSet out;
    std::map<int, const Detection*> in_i, in_j;
    for (const auto& det : frame.bundle.views[view_i].detections)
        in_i[frame.truth.identity_of.at({view_i, det.index_in_view})] = &det;
    for (const auto& det : frame.bundle.views[view_j].detections)
        in_j[frame.truth.identity_of.at({view_j, det.index_in_view})] = &det;

    for (const auto& [k, di] : in_i) {
        const auto it = in_j.find(k);
        if (it == in_j.end()) continue;
        const Detection* dj = it->second;
        for (int d = 0; d < di->skeleton2d.joint_count(); ++d) {
            if (!di->skeleton2d.valid[d] || !dj->skeleton2d.valid[d]) continue;
            CorrespondenceSet::Entry e;
            e.x_i = di->skeleton2d.joints[d];
            e.x_j = dj->skeleton2d.joints[d];
            e.identity = k;
            e.joint = d;
            if (di->skeleton3d_lifted.valid[d] && dj->skeleton3d_lifted.valid[d])
                e.p3d = std::make_pair(di->skeleton3d_lifted.joints[d],
                                       dj->skeleton3d_lifted.joints[d]);
            out.entries.push_back(std::move(e));
        }
    }
    return out;
}

/// Relative pose i -> j from ground-truth extrinsics.
inline RigidTransform truth_relative_pose(const GroundTruth& truth, int view_i,
                                          int view_j) {
    return truth.extrinsics.at(view_j) * truth.extrinsics.at(view_i).inverse();
}

}  // namespace test_support
