#include "flowcast/clustering.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <filesystem>

using namespace flowcast;
using namespace flowcast::testing;

namespace {

Eigen::MatrixX2d random_points(int n, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Eigen::MatrixX2d pts(n, 2);
    for (int i = 0; i < n; ++i) {
        pts(i, 0) = rng.uniform(0.0, scale);
        pts(i, 1) = rng.uniform(0.0, scale);
    }
    return pts;
}

void check_invariants(const ClusterAssignment& a, uint32_t n, uint32_t s) {
    CHECK(a.num_clusters == (n + s - 1) / s);
    CHECK(a.assignment.size() == n);
    uint32_t total = 0, mn = UINT32_MAX, mx = 0;
    for (auto c : a.sizes) {
        total += c;
        mn = std::min(mn, c);
        mx = std::max(mx, c);
    }
    CHECK(total == n);
    CHECK(mx - mn <= 1);
    for (auto c : a.assignment) CHECK(c < a.num_clusters);
}

}  // namespace

TEST_CASE("cluster counts and sizes follow the ceil/floor rule") {
    auto a = same_size_kmeans(random_points(30, 1), 10, 0);
    check_invariants(a, 30, 10);
    CHECK(a.sizes == std::vector<uint32_t>{10, 10, 10});

    auto b = same_size_kmeans(random_points(25, 2), 10, 0);
    check_invariants(b, 25, 10);
    std::vector<uint32_t> sizes = b.sizes;
    std::sort(sizes.begin(), sizes.end());
    CHECK(sizes == std::vector<uint32_t>{8, 8, 9});
}

TEST_CASE("two well-separated blobs become one cluster each") {
    Eigen::MatrixX2d pts(20, 2);
    Rng rng(3);
    for (int i = 0; i < 10; ++i) {
        pts(i, 0) = rng.uniform(0.0, 0.2);
        pts(i, 1) = rng.uniform(0.0, 0.2);
        pts(10 + i, 0) = 10.0 + rng.uniform(0.0, 0.2);
        pts(10 + i, 1) = rng.uniform(0.0, 0.2);
    }
    auto a = same_size_kmeans(pts, 10, 7);
    check_invariants(a, 20, 10);
    // All of the first blob in one cluster, all of the second in the other.
    for (int i = 1; i < 10; ++i) CHECK(a.assignment[static_cast<size_t>(i)] == a.assignment[0]);
    for (int i = 11; i < 20; ++i) CHECK(a.assignment[static_cast<size_t>(i)] == a.assignment[10]);
    CHECK(a.assignment[0] != a.assignment[10]);
}

TEST_CASE("balance and coverage hold over random cases") {
    Rng rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        const auto n = 1 + static_cast<uint32_t>(rng.uniform_int(900));
        const auto s = 1 + static_cast<uint32_t>(rng.uniform_int(64));
        auto a = same_size_kmeans(random_points(static_cast<int>(n), 100 + trial), s, trial);
        CAPTURE(n);
        CAPTURE(s);
        check_invariants(a, n, s);
    }
}

TEST_CASE("edge cases: one point, target larger than n, singletons") {
    auto one = same_size_kmeans(random_points(1, 4), 10, 0);
    check_invariants(one, 1, 10);
    CHECK(one.num_clusters == 1);

    auto small = same_size_kmeans(random_points(5, 5), 10, 0);
    CHECK(small.num_clusters == 1);

    auto singles = same_size_kmeans(random_points(12, 6), 1, 0);
    CHECK(singles.num_clusters == 12);
    for (auto c : singles.sizes) CHECK(c == 1);
}

TEST_CASE("objective is non-increasing across refinement iterations") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        std::vector<double> trace;
        same_size_kmeans(random_points(400, 50 + seed), 16, seed, &trace);
        REQUIRE(trace.size() >= 1);
        for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-9);
    }
}

TEST_CASE("assignment is deterministic per seed") {
    auto pts = random_points(300, 8);
    auto a = same_size_kmeans(pts, 10, 42);
    auto b = same_size_kmeans(pts, 10, 42);
    CHECK(a.assignment == b.assignment);
    auto c = same_size_kmeans(pts, 10, 43);
    CHECK(a.assignment != c.assignment);  // different seed, different solution in general
}

TEST_CASE("barycenters: means, singletons, translation") {
    Eigen::MatrixX2d pts(3, 2);
    pts << 0, 0, 2, 0, 5, -1;
    ClusterAssignment a;
    a.num_clusters = 2;
    a.target_size = 2;
    a.assignment = {0, 0, 1};
    a.sizes = {2, 1};
    a.rebuild_members();

    auto bary = cluster_barycenters(pts, a);
    CHECK(bary(0, 0) == doctest::Approx(1.0));
    CHECK(bary(0, 1) == doctest::Approx(0.0));
    CHECK(bary(1, 0) == doctest::Approx(5.0));
    CHECK(bary(1, 1) == doctest::Approx(-1.0));

    Eigen::MatrixX2d shifted = pts;
    shifted.col(0).array() += 3.5;
    shifted.col(1).array() += -2.0;
    auto bary2 = cluster_barycenters(shifted, a);
    CHECK((bary2.col(0).array() - bary.col(0).array() - 3.5).abs().maxCoeff() < 1e-12);
    CHECK((bary2.col(1).array() - bary.col(1).array() + 2.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("cluster adjacency from node-edge crossings") {
    SUBCASE("single cluster") {
        ClusterAssignment a;
        a.num_clusters = 1;
        a.target_size = 3;
        a.assignment = {0, 0, 0};
        a.sizes = {3};
        a.rebuild_members();
        auto adj = cluster_adjacency(a, {Edge(0, 1), Edge(1, 2)});
        CHECK(adj.rows() == 1);
        CHECK(adj(0, 0) == 1);
    }

    SUBCASE("no crossing edges") {
        ClusterAssignment a;
        a.num_clusters = 2;
        a.target_size = 2;
        a.assignment = {0, 0, 1, 1};
        a.sizes = {2, 2};
        a.rebuild_members();
        auto adj = cluster_adjacency(a, {Edge(0, 1), Edge(2, 3)});
        CHECK(adj(0, 1) == 0);
        CHECK(adj(1, 0) == 0);
        CHECK(adj(0, 0) == 1);
        CHECK(adj(1, 1) == 1);
    }

    SUBCASE("path graph with singleton clusters") {
        ClusterAssignment a;
        a.num_clusters = 3;
        a.target_size = 1;
        a.assignment = {0, 1, 2};
        a.sizes = {1, 1, 1};
        a.rebuild_members();
        auto adj = cluster_adjacency(a, {Edge(0, 1), Edge(1, 2)});
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) CHECK(adj(j, k) == (std::abs(j - k) <= 1 ? 1 : 0));
    }
}

TEST_CASE("cluster cache round-trips and is idempotent") {
    auto dir = temp_dir();
    auto traj = make_random_trajectory(4, 4, 4, 71);
    const auto path = cluster_cache_path(dir + "/t.bin", 5, 9);
    CHECK(path == dir + "/t.clusters_s5_seed9.bin");

    auto frames = precompute_clusters(traj, 5, 9, path);
    const auto bytes = slurp(path);
    precompute_clusters(traj, 5, 9, path);
    CHECK(slurp(path) == bytes);

    auto loaded = load_cluster_cache(path, 5);
    REQUIRE(loaded.size() == frames.size());
    for (size_t f = 0; f < frames.size(); ++f) {
        CHECK(loaded[f].assignment == frames[f].assignment);
        CHECK(loaded[f].sizes == frames[f].sizes);
    }

    // Identical frames (static mesh) get identical assignments.
    for (size_t f = 1; f < frames.size(); ++f) CHECK(frames[f].assignment == frames[0].assignment);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cluster count for a table-sized frame") {
    auto a = same_size_kmeans(random_points(3388, 12), 10, 0);
    CHECK(a.num_clusters == 339);
    check_invariants(a, 3388, 10);
}

TEST_CASE("10k points cluster in bounded time") {
    auto pts = random_points(10000, 13);
    const auto t0 = std::chrono::steady_clock::now();
    auto a = same_size_kmeans(pts, 10, 1);
    const auto t1 = std::chrono::steady_clock::now();
    check_invariants(a, 10000, 10);
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    CHECK(secs < 5.0);
    MESSAGE("10k points, s=10: ", secs, " s");
}
