#pragma once

#include "flowcast/common.hpp"
#include "flowcast/mesh.hpp"

#include <string>
#include <vector>

namespace flowcast {

/// Node -> cluster mapping from same-size k-means. Cluster sizes differ by at
/// most one and K = ceil(N / target_size).
struct ClusterAssignment {
    std::vector<uint32_t> assignment;  // N entries in [0, K)
    uint32_t num_clusters = 0;
    uint32_t target_size = 0;
    std::vector<uint32_t> sizes;  // K member counts

    const std::vector<uint32_t>& members_of(uint32_t k) const { return members_[k]; }
    void rebuild_members();

private:
    std::vector<std::vector<uint32_t>> members_;
};

/// Derived per-frame cluster data: barycenters and the coarse one-ring.
struct ClusterGeometry {
    Eigen::MatrixX2d barycenters;                   // K x 2
    Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> adjacency;  // K x K, symmetric, reflexive
};

/// Balanced k-means: k-means++ seeding, capacity-constrained greedy
/// assignment, then pairwise-swap refinement (strictly decreasing objective,
/// at most `max_iters` refinement iterations). Deterministic per seed.
///
/// If `objective_trace` is given it receives the total within-cluster squared
/// distance after each centroid update.
ClusterAssignment same_size_kmeans(const Eigen::MatrixX2d& positions, uint32_t target_size,
                                   uint64_t seed, std::vector<double>* objective_trace = nullptr,
                                   int max_iters = 100);

Eigen::MatrixX2d cluster_barycenters(const Eigen::MatrixX2d& positions,
                                     const ClusterAssignment& assignment);

Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>
cluster_adjacency(const ClusterAssignment& assignment, const std::vector<Edge>& edges);

ClusterGeometry make_cluster_geometry(const Eigen::MatrixX2d& positions,
                                      const ClusterAssignment& assignment,
                                      const std::vector<Edge>& edges);

// --- cluster cache ----------------------------------------------------------
//
// One file per trajectory: "<id>.clusters_s{S}_seed{R}.bin", little-endian:
// magic "EGLC", u32 version=1, u32 num_steps, then per step: u32 N, u32 K,
// u32 assignment[N]. Barycenters and adjacency are derived data, recomputed
// on load.

std::string cluster_cache_path(const std::string& traj_path, uint32_t target_size, uint64_t seed);

/// Clusters every frame (same seed for each frame, so identical frames get
/// identical assignments) and writes the cache file. Idempotent: re-running
/// produces byte-identical output. Returns the per-frame assignments.
std::vector<ClusterAssignment> precompute_clusters(const Trajectory& traj, uint32_t target_size,
                                                   uint64_t seed, const std::string& cache_path);

std::vector<ClusterAssignment> cluster_trajectory(const Trajectory& traj, uint32_t target_size,
                                                  uint64_t seed);

void save_cluster_cache(const std::vector<ClusterAssignment>& frames, uint32_t target_size,
                        const std::string& path);
std::vector<ClusterAssignment> load_cluster_cache(const std::string& path, uint32_t target_size);

}  // namespace flowcast
