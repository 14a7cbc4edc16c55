#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rgbdpose/matching.hpp"
#include "rgbdpose/rng.hpp"
#include "support.hpp"

#include <set>

using namespace rgbdpose;

namespace {

Detection make_detection(int view, int index, const Eigen::VectorXd& feature,
                         bool with_skeleton = true) {
    Detection d;
    d.view = view;
    d.index_in_view = index;
    d.feature = feature;
    if (with_skeleton) {
        d.skeleton2d.joints.assign(13, Eigen::Vector2d{100.0 + index, 100.0 + view});
        d.skeleton2d.valid.assign(13, 1);
    }
    return d;
}

/// Labeled scene: `people` feature centroids observed from `views` views with
/// additive noise. Returns detections plus the ground-truth label per
/// (view, index).
std::pair<std::vector<Detection>, std::map<std::pair<int, int>, int>>
labeled_scene(int views, int people, int dim, double noise, Rng& rng) {
    std::vector<Eigen::VectorXd> centroids;
    for (int k = 0; k < people; ++k)
        centroids.push_back(rng.gaussian_vector(dim).normalized());
    std::vector<Detection> dets;
    std::map<std::pair<int, int>, int> labels;
    for (int v = 0; v < views; ++v) {
        // shuffled person order per view so indices carry no information
        std::vector<int> order(people);
        for (int k = 0; k < people; ++k) order[k] = k;
        for (int k = people - 1; k > 0; --k)
            std::swap(order[k], order[rng.uniform_int(0, k)]);
        for (int n = 0; n < people; ++n) {
            const int k = order[n];
            Eigen::VectorXd f = centroids[k] + rng.gaussian_vector(dim, noise);
            dets.push_back(make_detection(v, n, f));
            labels[{v, n}] = k;
        }
    }
    return {dets, labels};
}

bool partition_matches_labels(const Assignment& a,
                              const std::map<std::pair<int, int>, int>& labels) {
    // cluster ids are arbitrary; require a consistent bijection
    std::map<int, int> cluster_to_label;
    std::map<int, int> label_to_cluster;
    for (const auto& [key, k] : a.w) {
        const int label = labels.at(key);
        if (cluster_to_label.count(k) && cluster_to_label[k] != label) return false;
        if (label_to_cluster.count(label) && label_to_cluster[label] != k) return false;
        cluster_to_label[k] = label;
        label_to_cluster[label] = k;
    }
    return a.w.size() == labels.size();
}

}  // namespace

TEST_CASE("cluster_features: K=1 with one detection per view puts all in cluster 0") {
    Rng rng(5);
    std::vector<Detection> dets;
    for (int v = 0; v < 4; ++v)
        dets.push_back(make_detection(v, 0, rng.gaussian_vector(16)));
    const auto result = cluster_features(dets, 1, 100, 0);
    for (const auto& d : dets) {
        const auto k = result.assignment.cluster_of(d.view, d.index_in_view);
        REQUIRE(k.has_value());
        CHECK(*k == 0);
    }
}

TEST_CASE("cluster_features: identical same-view features split across clusters") {
    Rng rng(6);
    const Eigen::VectorXd f = rng.gaussian_vector(8);
    std::vector<Detection> dets{make_detection(0, 0, f), make_detection(0, 1, f)};
    const auto result = cluster_features(dets, 2, 100, 0);
    const auto k0 = result.assignment.cluster_of(0, 0);
    const auto k1 = result.assignment.cluster_of(0, 1);
    REQUIRE(k0.has_value());
    REQUIRE(k1.has_value());
    CHECK(*k0 != *k1);
}

TEST_CASE("cluster_features: parameter and empty-input handling") {
    CHECK_THROWS_AS(cluster_features({}, 0), InputError);
    const auto result = cluster_features({}, 3);
    CHECK(result.assignment.w.empty());
    CHECK(result.assignment.num_clusters == 3);
}

TEST_CASE("cluster_features: separable features recover the labeled partition") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u, 6u, 7u, 8u}) {
        Rng rng(seed);
        // centroid separation ~sqrt(2), noise sigma 0.01 -> far beyond 6 sigma
        const auto [dets, labels] = labeled_scene(4, 3, 64, 0.01, rng);
        const auto result = cluster_features(dets, 3, 100, seed);
        CHECK(partition_matches_labels(result.assignment, labels));
        CHECK(satisfies_assignment_constraints(result.assignment, 4));
    }
}

TEST_CASE("cluster_features: objective is monotone non-increasing across iterations") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        Rng rng(seed);
        const auto [dets, labels] = labeled_scene(5, 4, 32, 0.3, rng);  // messy
        (void)labels;
        const auto result = cluster_features(dets, 4, 100, seed);
        REQUIRE(result.objective_trace.size() >= 1);
        for (size_t i = 1; i < result.objective_trace.size(); ++i) {
            const double prev = result.objective_trace[i - 1];
            const double cur = result.objective_trace[i];
            CHECK(cur <= prev + 1e-9 * (1.0 + std::abs(prev)));
        }
    }
}

TEST_CASE("cluster_features: deterministic given identical inputs") {
    Rng rng(21);
    const auto [dets, labels] = labeled_scene(4, 4, 32, 0.2, rng);
    (void)labels;
    const auto a = cluster_features(dets, 4, 100, 99);
    const auto b = cluster_features(dets, 4, 100, 99);
    CHECK(a.assignment.w == b.assignment.w);
    CHECK(a.clusters.objective == b.clusters.objective);
    CHECK(a.clusters.centroids == b.clusters.centroids);
}

TEST_CASE("cluster_features: surplus detections in a view are rejected") {
    Rng rng(31);
    std::vector<Detection> dets;
    for (int n = 0; n < 4; ++n)
        dets.push_back(make_detection(0, n, rng.gaussian_vector(8)));
    dets.push_back(make_detection(1, 0, rng.gaussian_vector(8)));
    const auto result = cluster_features(dets, 2, 100, 0);
    CHECK(satisfies_assignment_constraints(result.assignment, 2));
    int assigned_view0 = 0;
    for (int n = 0; n < 4; ++n)
        if (result.assignment.cluster_of(0, n)) ++assigned_view0;
    CHECK(assigned_view0 == 2);
}

TEST_CASE("assignment_step: optimal per-view assignment against brute force") {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const int k_count = rng.uniform_int(1, 4);
        const int dim = 6;
        Eigen::MatrixXd centroids(k_count, dim);
        for (int k = 0; k < k_count; ++k)
            centroids.row(k) = rng.gaussian_vector(dim).transpose();

        std::vector<Detection> dets;
        const int views = rng.uniform_int(1, 3);
        for (int v = 0; v < views; ++v) {
            const int n_v = rng.uniform_int(1, k_count);
            for (int n = 0; n < n_v; ++n)
                dets.push_back(make_detection(v, n, rng.gaussian_vector(dim)));
        }

        const Assignment got = assignment_step(dets, centroids);
        CHECK(satisfies_assignment_constraints(got, views));

        // brute force per view
        double got_cost = 0.0, best_cost = 0.0;
        for (int v = 0; v < views; ++v) {
            std::vector<const Detection*> view_dets;
            for (const auto& d : dets)
                if (d.view == v) view_dets.push_back(&d);
            Eigen::MatrixXd cost(view_dets.size(), k_count);
            for (size_t i = 0; i < view_dets.size(); ++i)
                for (int k = 0; k < k_count; ++k)
                    cost(static_cast<int>(i), k) =
                        (view_dets[i]->feature - centroids.row(k).transpose())
                            .squaredNorm();
            best_cost += test_support::brute_force_assignment(cost).first;
            for (const auto* d : view_dets) {
                const auto k = got.cluster_of(d->view, d->index_in_view);
                REQUIRE(k.has_value());
                got_cost += cost(d->index_in_view, *k);
            }
        }
        CHECK(got_cost == doctest::Approx(best_cost).epsilon(1e-10));
    }
}

TEST_CASE("correspondences_from_assignment: pair combinatorics") {
    Rng rng(51);
    const Eigen::VectorXd f = rng.gaussian_vector(4);

    SUBCASE("identity in three views emits all three pairs") {
        std::vector<Detection> dets{make_detection(0, 0, f), make_detection(1, 0, f),
                                    make_detection(2, 0, f)};
        Assignment a;
        a.num_clusters = 1;
        a.w = {{{0, 0}, 0}, {{1, 0}, 0}, {{2, 0}, 0}};
        const auto pairs = correspondences_from_assignment(a, dets);
        REQUIRE(pairs.size() == 3);
        std::set<std::pair<int, int>> seen;
        for (const auto& p : pairs) seen.insert({p.view_i, p.view_j});
        CHECK(seen == std::set<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 2}});
    }

    SUBCASE("identity in one view emits nothing") {
        std::vector<Detection> dets{make_detection(0, 0, f)};
        Assignment a;
        a.num_clusters = 1;
        a.w = {{{0, 0}, 0}};
        CHECK(correspondences_from_assignment(a, dets).empty());
    }

    SUBCASE("null-skeleton member is skipped") {
        std::vector<Detection> dets{make_detection(0, 0, f), make_detection(1, 0, f),
                                    make_detection(2, 0, f, false)};
        Assignment a;
        a.num_clusters = 1;
        a.w = {{{0, 0}, 0}, {{1, 0}, 0}, {{2, 0}, 0}};
        const auto pairs = correspondences_from_assignment(a, dets);
        CHECK(pairs.size() == 1);
    }

    SUBCASE("pair count matches the closed form over a full scene") {
        Rng scene_rng(52);
        const auto [dets, labels] = labeled_scene(5, 3, 16, 0.01, scene_rng);
        (void)labels;
        const auto result = cluster_features(dets, 3, 100, 1);
        const auto pairs =
            correspondences_from_assignment(result.assignment, dets);
        const auto members = result.assignment.members();
        size_t expected = 0;
        for (const auto& m : members) expected += m.size() * (m.size() - 1) / 2;
        CHECK(pairs.size() == expected);
    }
}
