#pragma once

#include "flowcast/delaunay.hpp"
#include "flowcast/mesh.hpp"
#include "flowcast/rng.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace flowcast::testing {

inline MeshFrame make_triangle_frame() {
    MeshFrame f;
    f.positions.resize(3, 2);
    f.positions << 0, 0, 1, 0, 0, 1;
    f.node_types = {NodeType::Wall, NodeType::Wall, NodeType::Interior};
    f.velocity.resize(3, 2);
    f.velocity << 1, 0, 0, 1, -1, 0.5;
    f.pressure.resize(3, 1);
    f.pressure << 0.5, -0.25, 1.0;
    f.edges = {Edge(0, 1), Edge(0, 2), Edge(1, 2)};
    return f;
}

/// Random jittered-grid mesh with fields drawn uniform in [-1, 1].
inline MeshFrame make_random_frame(int rows, int cols, uint64_t seed, int pressure_channels = 1) {
    Rng rng(seed);
    std::vector<Vec2> pts;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            pts.emplace_back((c + 0.5 + 0.4 * (rng.uniform() - 0.5)) / cols,
                             (r + 0.5 + 0.4 * (rng.uniform() - 0.5)) / rows);
    auto tri = delaunay_triangulate(pts);

    MeshFrame f;
    const auto n = static_cast<Eigen::Index>(pts.size());
    f.positions.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) f.positions.row(i) = pts[static_cast<size_t>(i)].transpose();
    f.node_types.assign(static_cast<size_t>(n), NodeType::Interior);
    f.node_types[0] = NodeType::Wall;
    if (n > 1) f.node_types[1] = NodeType::Inlet;
    f.velocity.resize(n, 2);
    f.pressure.resize(n, pressure_channels);
    for (Eigen::Index i = 0; i < n; ++i) {
        f.velocity(i, 0) = rng.uniform(-1.0, 1.0);
        f.velocity(i, 1) = rng.uniform(-1.0, 1.0);
        for (int c = 0; c < pressure_channels; ++c) f.pressure(i, c) = rng.uniform(-1.0, 1.0);
    }
    f.edges = tri.edges;
    return f;
}

inline Trajectory make_random_trajectory(int frames, int rows, int cols, uint64_t seed,
                                         int pressure_channels = 1) {
    Trajectory t;
    t.dt = 0.1;
    t.geometry_tag = "test";
    t.seed = seed;
    MeshFrame base = make_random_frame(rows, cols, seed, pressure_channels);
    Rng rng(seed + 1);
    for (int f = 0; f < frames; ++f) {
        MeshFrame frame = base;
        for (Eigen::Index i = 0; i < frame.num_nodes(); ++i) {
            frame.velocity(i, 0) = rng.uniform(-1.0, 1.0);
            frame.velocity(i, 1) = rng.uniform(-1.0, 1.0);
            for (int c = 0; c < pressure_channels; ++c) frame.pressure(i, c) = rng.uniform(-1.0, 1.0);
        }
        t.frames.push_back(std::move(frame));
    }
    return t;
}

inline std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

inline std::string temp_dir() {
    static int counter = 0;
    std::string dir = "flowcast_test_tmp_" + std::to_string(counter++);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace flowcast::testing
