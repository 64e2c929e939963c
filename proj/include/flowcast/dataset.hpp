#pragma once

#include "flowcast/clustering.hpp"
#include "flowcast/mesh.hpp"

#include <string>
#include <vector>

namespace flowcast {

/// Dataset root layout: manifest.json plus per-trajectory files <id>.bin,
/// <id>.meta.json, optional stats.json and cluster caches.
struct Manifest {
    uint32_t version = 1;
    std::vector<std::string> train, valid, test;
    uint32_t pressure_channels = 1;

    std::vector<std::string> all_ids() const;
    const std::vector<std::string>& split(const std::string& name) const;
};

void save_manifest(const Manifest& manifest, const std::string& dir);
Manifest load_manifest(const std::string& dir);

std::string trajectory_path(const std::string& dir, const std::string& id);
std::string stats_path(const std::string& dir);

/// Loaded split with optional cluster caches, the common input to training
/// and evaluation.
struct LoadedSplit {
    std::vector<std::string> ids;
    std::vector<Trajectory> trajectories;
    std::vector<std::vector<ClusterAssignment>> clusters;  // empty if not loaded
};

LoadedSplit load_split(const std::string& dir, const std::vector<std::string>& ids,
                       bool with_clusters, uint32_t cluster_size, uint64_t cluster_seed);

}  // namespace flowcast
