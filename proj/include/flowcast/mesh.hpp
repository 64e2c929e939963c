#pragma once

#include "flowcast/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace flowcast {

/// Boundary-condition label per node. Stored on disk as one byte; only these
/// four codes are valid.
enum class NodeType : uint8_t { Interior = 0, Wall = 1, Inlet = 2, Outlet = 3 };

inline bool is_boundary(NodeType t) { return t != NodeType::Interior; }

/// One time step of a dynamic mesh: geometry, connectivity and fields.
struct MeshFrame {
    Eigen::MatrixX2d positions;        // N x 2, meters
    std::vector<NodeType> node_types;  // N
    Eigen::MatrixX2d velocity;         // N x 2, m/s
    Eigen::MatrixXd pressure;          // N x Pc, Pa
    std::vector<Edge> edges;           // undirected, smaller index first, unique

    Eigen::Index num_nodes() const { return positions.rows(); }
    Eigen::Index pressure_channels() const { return pressure.cols(); }
};

/// Ordered sequence of frames with a fixed time step; the unit of training
/// and evaluation.
struct Trajectory {
    std::vector<MeshFrame> frames;
    double dt = 0.0;           // seconds
    std::string geometry_tag;  // free-form label
    uint64_t seed = 0;         // generation seed, provenance only

    Eigen::Index pressure_channels() const {
        return frames.empty() ? 0 : frames.front().pressure_channels();
    }
};

/// One violated invariant; `index` is the offending node/edge/frame where
/// meaningful, -1 otherwise.
struct Violation {
    std::string invariant;
    int64_t index = -1;
    std::string detail;
};

std::vector<Violation> validate_frame(const MeshFrame& frame);
std::vector<Violation> validate_trajectory(const Trajectory& traj);

/// Throws DataError with the first violations if validation fails.
void require_valid(const Trajectory& traj, const std::string& what);

/// Per-field normalization statistics computed on the train split. Means are
/// per-component; each std is a single scalar, the population std pooled over
/// all of the field's components around their per-component means.
struct NormStats {
    Vec2 v_mean = Vec2::Zero();
    double v_std = 1.0;
    Eigen::VectorXd p_mean;  // Pc entries
    double p_std = 1.0;
};

struct NormStatsReport {
    bool v_clamped = false;  // zero-variance velocity, std clamped to the floor
    bool p_clamped = false;
};

NormStats compute_norm_stats(const std::vector<const Trajectory*>& split,
                             double std_floor = 1e-8, NormStatsReport* report = nullptr);

/// Keeps every non-Interior node plus a seeded uniform subset of interior
/// nodes (round(keep_fraction * interior count)); fields carry over and edges
/// are rebuilt by delaunay_triangulate over the retained points.
MeshFrame downsample_frame(const MeshFrame& frame, double keep_fraction, uint64_t seed);

// --- on-disk trajectory format -------------------------------------------
//
// <id>.bin      little-endian: magic "EGL1", u32 version=1, u32 num_steps,
//               u32 pressure_channels, then per step: u32 N, u32 E,
//               f32 positions[N*2], u8 node_types[N], f32 velocity[N*2],
//               f32 pressure[N*Pc], u32 edges[E*2].
// <id>.meta.json  {"dt": number, "geometry_tag": string, "seed": integer}
//               plus an optional "generator" object echoing generation config.

/// Validates, then writes the binary file and its meta.json sidecar.
void save_trajectory(const Trajectory& traj, const std::string& path,
                     const nlohmann::json* generator = nullptr);

Trajectory load_trajectory(const std::string& path);

/// Path of the metadata sidecar for a trajectory file ("x.bin" -> "x.meta.json").
std::string meta_path_for(const std::string& traj_path);

void save_norm_stats(const NormStats& stats, const std::string& path);
NormStats load_norm_stats(const std::string& path);

}  // namespace flowcast
