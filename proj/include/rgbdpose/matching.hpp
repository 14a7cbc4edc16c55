#pragma once

#include "rgbdpose/assignment.hpp"
#include "rgbdpose/rng.hpp"
#include "rgbdpose/types.hpp"

#include <cstdio>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace rgbdpose {

// ---------------------------------------------------------------------------
// Cross-view identity matching: cluster per-view appearance features into K
// identities such that every detection joins exactly one cluster and no
// cluster holds two detections from the same view. The E-step is an exact
// per-view assignment solve (the per-view constraint structure decouples
// views); the M-step is the mean of assigned features, with empty clusters
// keeping their previous centroid.
// ---------------------------------------------------------------------------

struct Assignment {
    /// (view, index_in_view) -> cluster. Detections absent from the map are
    /// unassigned (rejected surplus).
    std::map<std::pair<int, int>, int> w;
    int num_clusters = 0;

    std::optional<int> cluster_of(int view, int index) const {
        const auto it = w.find({view, index});
        if (it == w.end()) return std::nullopt;
        return it->second;
    }

    /// members[k] = list of (view, index) sorted by view then index.
    std::vector<std::vector<std::pair<int, int>>> members() const {
        std::vector<std::vector<std::pair<int, int>>> out(num_clusters);
        for (const auto& [key, k] : w) out[k].push_back(key);
        return out;
    }
};

struct ClusterSet {
    Eigen::MatrixXd centroids;  // K x D
    double objective = 0.0;
};

struct ClusterResult {
    Assignment assignment;
    ClusterSet clusters;
    /// Objective after every completed E-M iteration.
    std::vector<double> objective_trace;
    int iterations = 0;
};

/// True iff: every assigned detection has exactly one cluster, no cluster
/// exceeds one member per view, and no cluster exceeds V members in total.
inline bool satisfies_assignment_constraints(const Assignment& a, int num_views) {
    std::map<std::pair<int, int>, int> per_view_cluster;  // (cluster, view) -> count
    std::map<int, int> per_cluster;
    for (const auto& [key, k] : a.w) {
        if (k < 0 || k >= a.num_clusters) return false;
        if (++per_view_cluster[{k, key.first}] > 1) return false;
        if (++per_cluster[k] > num_views) return false;
    }
    return true;
}

namespace detail {

inline std::map<int, std::vector<const Detection*>> group_by_view(
    const std::vector<Detection>& detections) {
    std::map<int, std::vector<const Detection*>> by_view;
    for (const auto& d : detections) by_view[d.view].push_back(&d);
    return by_view;
}

inline int valid_joint_count(const Detection& d) {
    int n = 0;
    for (auto v : d.skeleton2d.valid) n += v ? 1 : 0;
    return n;
}

/// Per view keep at most K detections. There is no detector score in the
/// data, so the count of valid joints stands in for confidence, ties broken
/// by lower index.
inline std::vector<const Detection*> cap_view_detections(
    std::vector<const Detection*> dets, int k_max, bool* warned) {
    if (static_cast<int>(dets.size()) <= k_max) return dets;
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection* a, const Detection* b) {
                         return valid_joint_count(*a) > valid_joint_count(*b);
                     });
    if (warned && !*warned) {
        std::fprintf(stderr,
                     "level=warn stage=match frame=%d msg=\"view %d has %zu "
                     "detections, keeping %d\"\n",
                     -1, dets.front()->view, dets.size(), k_max);
        *warned = true;
    }
    dets.resize(k_max);
    std::sort(dets.begin(), dets.end(),
              [](const Detection* a, const Detection* b) {
                  return a->index_in_view < b->index_in_view;
              });
    return dets;
}

}  // namespace detail

/// E-step: per view, solve the detections-to-clusters rectangular assignment
/// with squared-distance costs. Exactness makes the one-cluster-per-detection
/// and one-detection-per-view-per-cluster constraints hold simultaneously;
/// the per-cluster cap of V members follows.
inline Assignment assignment_step(const std::vector<Detection>& detections,
                                  const Eigen::MatrixXd& centroids) {
    const int k_count = static_cast<int>(centroids.rows());
    for (const auto& d : detections)
        if (d.feature.size() != centroids.cols())
            throw InputError("assignment_step: feature dimension mismatch");
    Assignment out;
    out.num_clusters = k_count;
    bool warned = false;
    for (auto& [view, dets_raw] : detail::group_by_view(detections)) {
        auto dets = detail::cap_view_detections(dets_raw, k_count, &warned);
        const int n = static_cast<int>(dets.size());
        Eigen::MatrixXd cost(n, k_count);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < k_count; ++k)
                cost(i, k) = (dets[i]->feature - centroids.row(k).transpose())
                                 .squaredNorm();
        const auto row_to_col = solve_assignment(cost);
        for (int i = 0; i < n; ++i)
            out.w[{view, dets[i]->index_in_view}] = row_to_col[i];
    }
    return out;
}

inline double clustering_objective(const std::vector<Detection>& detections,
                                   const Assignment& assignment,
                                   const Eigen::MatrixXd& centroids) {
    double obj = 0.0;
    for (const auto& d : detections) {
        const auto k = assignment.cluster_of(d.view, d.index_in_view);
        if (!k) continue;
        obj += (d.feature - centroids.row(*k).transpose()).squaredNorm();
    }
    return obj;
}

namespace detail {

/// Farthest-point seeding: the first centroid is a seeded random detection,
/// each next one the feature farthest from its nearest chosen centroid.
inline Eigen::MatrixXd seed_centroids(const std::vector<Detection>& detections,
                                      int k_count, std::uint64_t seed) {
    const int n = static_cast<int>(detections.size());
    const int dim = static_cast<int>(detections.front().feature.size());
    Eigen::MatrixXd centroids(k_count, dim);
    Rng rng = Rng::stream(seed, 0x5eedu);

    std::vector<int> chosen;
    chosen.push_back(rng.uniform_int(0, n - 1));
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    while (static_cast<int>(chosen.size()) < std::min(k_count, n)) {
        const auto& last = detections[chosen.back()].feature;
        int best = -1;
        double best_dist = -1.0;
        for (int i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], (detections[i].feature - last).squaredNorm());
            if (nearest[i] > best_dist) {
                best_dist = nearest[i];
                best = i;
            }
        }
        chosen.push_back(best);
    }
    for (int k = 0; k < k_count; ++k)
        centroids.row(k) = detections[chosen[k % chosen.size()]].feature.transpose();
    return centroids;
}

}  // namespace detail

/// Constrained K-means over appearance features. Deterministic given
/// (detections, K, max_iter, seed); stops when the assignment stops changing.
inline ClusterResult cluster_features(const std::vector<Detection>& detections,
                                      int k_count, int max_iter = 100,
                                      std::uint64_t seed = 0) {
    if (k_count < 1) throw InputError("cluster_features: K must be >= 1");
    ClusterResult result;
    result.assignment.num_clusters = k_count;
    if (detections.empty()) {
        result.clusters.centroids.resize(k_count, 0);
        return result;
    }
    for (const auto& d : detections)
        if (d.feature.size() != detections.front().feature.size())
            throw InputError("cluster_features: feature dimension mismatch");

    Eigen::MatrixXd centroids = detail::seed_centroids(detections, k_count, seed);

    Assignment assignment;
    for (int iter = 0; iter < max_iter; ++iter) {
        Assignment next = assignment_step(detections, centroids);

        // M-step per the centroid update rule: mean of assigned features,
        // previous centroid when a cluster is empty.
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k_count, centroids.cols());
        std::vector<int> counts(k_count, 0);
        for (const auto& d : detections) {
            const auto k = next.cluster_of(d.view, d.index_in_view);
            if (!k) continue;
            sums.row(*k) += d.feature.transpose();
            ++counts[*k];
        }
        for (int k = 0; k < k_count; ++k)
            if (counts[k] > 0) centroids.row(k) = sums.row(k) / counts[k];

        result.objective_trace.push_back(
            clustering_objective(detections, next, centroids));
        result.iterations = iter + 1;

        const bool converged = (next.w == assignment.w) && iter > 0;
        assignment = std::move(next);
        if (converged) break;
    }

    result.assignment = std::move(assignment);
    result.clusters.centroids = std::move(centroids);
    result.clusters.objective = result.objective_trace.empty()
                                    ? 0.0
                                    : result.objective_trace.back();
    return result;
}

// ---------------------------------------------------------------------------
// Correspondences
// ---------------------------------------------------------------------------

/// Cross-view keypoint correspondence for one identity and one ordered view
/// pair (i < j). Members whose 2D skeleton has no valid joint count as null
/// and are skipped.
struct PairCorrespondence {
    int identity = -1;
    int view_i = -1;
    int view_j = -1;
    Skeleton2D sk2_i, sk2_j;
    Skeleton3D sk3_i, sk3_j;  // lifted, camera frames of i and j
};

inline std::vector<PairCorrespondence> correspondences_from_assignment(
    const Assignment& assignment, const std::vector<Detection>& detections) {
    std::map<std::pair<int, int>, const Detection*> by_key;
    for (const auto& d : detections) by_key[{d.view, d.index_in_view}] = &d;

    std::vector<PairCorrespondence> out;
    const auto members = assignment.members();
    for (int k = 0; k < assignment.num_clusters; ++k) {
        std::vector<const Detection*> present;
        for (const auto& key : members[k]) {
            const auto it = by_key.find(key);
            if (it == by_key.end()) continue;
            if (!it->second->skeleton2d.any_valid()) continue;  // null member
            present.push_back(it->second);
        }
        for (size_t a = 0; a < present.size(); ++a) {
            for (size_t b = a + 1; b < present.size(); ++b) {
                const Detection* di = present[a];
                const Detection* dj = present[b];
                if (di->view == dj->view) continue;  // constraint violation guard
                PairCorrespondence c;
                c.identity = k;
                c.view_i = di->view;
                c.view_j = dj->view;
                if (c.view_i > c.view_j) {
                    std::swap(c.view_i, c.view_j);
                    std::swap(di, dj);
                }
                c.sk2_i = di->skeleton2d;
                c.sk2_j = dj->skeleton2d;
                c.sk3_i = di->skeleton3d_lifted;
                c.sk3_j = dj->skeleton3d_lifted;
                out.push_back(std::move(c));
            }
        }
    }
    return out;
}

}  // namespace rgbdpose
