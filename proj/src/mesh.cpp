#include "flowcast/mesh.hpp"

#include "flowcast/binio.hpp"
#include "flowcast/delaunay.hpp"
#include "flowcast/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace flowcast {

std::vector<Violation> validate_frame(const MeshFrame& frame) {
    std::vector<Violation> out;
    const auto n = frame.positions.rows();

    if (static_cast<Eigen::Index>(frame.node_types.size()) != n)
        out.push_back({"field-length", -1, "node_types has " +
                       std::to_string(frame.node_types.size()) + " entries for " +
                       std::to_string(n) + " nodes"});
    if (frame.velocity.rows() != n)
        out.push_back({"field-length", -1, "velocity has " + std::to_string(frame.velocity.rows()) +
                       " rows for " + std::to_string(n) + " nodes"});
    if (frame.pressure.rows() != n)
        out.push_back({"field-length", -1, "pressure has " + std::to_string(frame.pressure.rows()) +
                       " rows for " + std::to_string(n) + " nodes"});
    if (frame.pressure.cols() < 1)
        out.push_back({"pressure-channels", -1, "pressure must have at least one channel"});

    for (size_t i = 0; i < frame.node_types.size(); ++i)
        if (static_cast<uint8_t>(frame.node_types[i]) > 3)
            out.push_back({"node-type", static_cast<int64_t>(i), "invalid code " +
                           std::to_string(static_cast<int>(frame.node_types[i]))});

    std::set<Edge> seen;
    for (size_t e = 0; e < frame.edges.size(); ++e) {
        const Edge& edge = frame.edges[e];
        if (edge.a >= n || edge.b >= n) {
            out.push_back({"edge-endpoint", static_cast<int64_t>(e),
                           "(" + std::to_string(edge.a) + "," + std::to_string(edge.b) + ")"});
            continue;
        }
        if (edge.a == edge.b)
            out.push_back({"edge-self-loop", static_cast<int64_t>(e), "node " + std::to_string(edge.a)});
        if (!seen.insert(Edge(edge.a, edge.b)).second)
            out.push_back({"edge-duplicate", static_cast<int64_t>(e),
                           "(" + std::to_string(edge.a) + "," + std::to_string(edge.b) + ")"});
    }

    // Exact duplicate positions, found by lexicographic sort.
    std::vector<uint32_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (frame.positions(a, 0) != frame.positions(b, 0))
            return frame.positions(a, 0) < frame.positions(b, 0);
        return frame.positions(a, 1) < frame.positions(b, 1);
    });
    for (size_t i = 1; i < order.size(); ++i) {
        if (frame.positions.row(order[i]) == frame.positions.row(order[i - 1]))
            out.push_back({"duplicate-position", static_cast<int64_t>(order[i]),
                           "coincides with node " + std::to_string(order[i - 1])});
    }
    return out;
}

std::vector<Violation> validate_trajectory(const Trajectory& traj) {
    std::vector<Violation> out;
    if (traj.frames.size() < 2)
        out.push_back({"frame-count", -1, "trajectory has " + std::to_string(traj.frames.size()) +
                       " frames, need at least 2"});
    if (!(traj.dt > 0)) out.push_back({"dt", -1, "dt must be positive"});

    const Eigen::Index pc = traj.pressure_channels();
    for (size_t f = 0; f < traj.frames.size(); ++f) {
        if (traj.frames[f].pressure_channels() != pc)
            out.push_back({"pressure-channels", static_cast<int64_t>(f),
                           "frame has " + std::to_string(traj.frames[f].pressure_channels()) +
                           " channels, expected " + std::to_string(pc)});
        for (auto v : validate_frame(traj.frames[f])) {
            v.detail = "frame " + std::to_string(f) + ": " + v.detail;
            out.push_back(std::move(v));
        }
    }
    return out;
}

void require_valid(const Trajectory& traj, const std::string& what) {
    const auto violations = validate_trajectory(traj);
    if (violations.empty()) return;
    std::string msg = what + ": invalid trajectory:";
    const size_t shown = std::min<size_t>(violations.size(), 5);
    for (size_t i = 0; i < shown; ++i)
        msg += "\n  [" + violations[i].invariant + "] " + violations[i].detail;
    if (violations.size() > shown)
        msg += "\n  (+" + std::to_string(violations.size() - shown) + " more)";
    throw DataError(msg);
}

namespace {

// Order-invariant sum: reordering the inputs must not change the result bits,
// so partial sums are sorted before reduction.
double sorted_sum(std::vector<double>& parts) {
    std::sort(parts.begin(), parts.end());
    return std::accumulate(parts.begin(), parts.end(), 0.0);
}

}  // namespace

NormStats compute_norm_stats(const std::vector<const Trajectory*>& split, double std_floor,
                             NormStatsReport* report) {
    if (split.empty()) throw DataError("compute_norm_stats: empty split");
    Eigen::Index pc = -1;
    for (const auto* t : split) {
        if (!t || t->frames.empty()) throw DataError("compute_norm_stats: empty trajectory in split");
        if (pc < 0) pc = t->pressure_channels();
        if (t->pressure_channels() != pc)
            throw DataError("compute_norm_stats: mixed pressure channel counts in split");
    }

    const size_t m = split.size();
    std::vector<double> sum_vx(m), sum_vy(m), sum_v2(m), sum_p2(m), count_v(m), count_p(m);
    std::vector<std::vector<double>> sum_p(static_cast<size_t>(pc), std::vector<double>(m));

    for (size_t ti = 0; ti < m; ++ti) {
        for (const auto& f : split[ti]->frames) {
            sum_vx[ti] += f.velocity.col(0).sum();
            sum_vy[ti] += f.velocity.col(1).sum();
            sum_v2[ti] += f.velocity.array().square().sum();
            count_v[ti] += static_cast<double>(f.velocity.size());
            for (Eigen::Index c = 0; c < pc; ++c)
                sum_p[static_cast<size_t>(c)][ti] += f.pressure.col(c).sum();
            sum_p2[ti] += f.pressure.array().square().sum();
            count_p[ti] += static_cast<double>(f.pressure.size());
        }
    }

    const double nv = sorted_sum(count_v);
    const double np = sorted_sum(count_p);
    if (nv == 0 || np == 0) throw DataError("compute_norm_stats: split contains no nodes");

    NormStats s;
    s.v_mean.x() = sorted_sum(sum_vx) / (nv / 2);
    s.v_mean.y() = sorted_sum(sum_vy) / (nv / 2);
    s.p_mean.resize(pc);
    for (Eigen::Index c = 0; c < pc; ++c)
        s.p_mean(c) = sorted_sum(sum_p[static_cast<size_t>(c)]) / np * static_cast<double>(pc);

    // Scalar std per field: population variance pooled over all components,
    // each measured around its own component mean (so a constant field has
    // zero variance and triggers the clamp).
    const double v_mean_sq = (s.v_mean.x() * s.v_mean.x() + s.v_mean.y() * s.v_mean.y()) / 2.0;
    const double v_var = std::max(0.0, sorted_sum(sum_v2) / nv - v_mean_sq);
    double p_mean_sq = 0;
    for (Eigen::Index c = 0; c < pc; ++c) p_mean_sq += s.p_mean(c) * s.p_mean(c);
    p_mean_sq /= static_cast<double>(pc);
    const double p_var = std::max(0.0, sorted_sum(sum_p2) / np - p_mean_sq);

    s.v_std = std::sqrt(v_var);
    s.p_std = std::sqrt(p_var);
    if (report) *report = {};
    if (s.v_std < std_floor) {
        s.v_std = std_floor;
        if (report) report->v_clamped = true;
    }
    if (s.p_std < std_floor) {
        s.p_std = std_floor;
        if (report) report->p_clamped = true;
    }
    return s;
}

MeshFrame downsample_frame(const MeshFrame& frame, double keep_fraction, uint64_t seed) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
        throw DataError("downsample_frame: keep_fraction must be in (0, 1], got " +
                        std::to_string(keep_fraction));

    std::vector<uint32_t> interior, kept;
    for (uint32_t i = 0; i < frame.num_nodes(); ++i) {
        if (is_boundary(frame.node_types[i]))
            kept.push_back(i);
        else
            interior.push_back(i);
    }

    const auto target = static_cast<uint32_t>(std::llround(
        keep_fraction * static_cast<double>(interior.size())));
    Rng rng(Rng::mix(seed, 0xd0537a3eULL));
    auto picked = rng.sample_without_replacement(static_cast<uint32_t>(interior.size()), target);
    for (auto k : picked) kept.push_back(interior[k]);
    std::sort(kept.begin(), kept.end());

    if (kept.size() < 3)
        throw DataError("downsample_frame: fewer than 3 nodes would remain");

    MeshFrame out;
    const auto n = static_cast<Eigen::Index>(kept.size());
    out.positions.resize(n, 2);
    out.velocity.resize(n, 2);
    out.pressure.resize(n, frame.pressure.cols());
    out.node_types.resize(kept.size());
    std::vector<Vec2> pts(kept.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto src = kept[static_cast<size_t>(i)];
        out.positions.row(i) = frame.positions.row(src);
        out.velocity.row(i) = frame.velocity.row(src);
        out.pressure.row(i) = frame.pressure.row(src);
        out.node_types[static_cast<size_t>(i)] = frame.node_types[src];
        pts[static_cast<size_t>(i)] = frame.positions.row(src).transpose();
    }

    out.edges = delaunay_triangulate(pts).edges;
    return out;
}

// --- binary trajectory format ---------------------------------------------

void save_trajectory(const Trajectory& traj, const std::string& path,
                     const nlohmann::json* generator) {
    require_valid(traj, "save_trajectory(" + path + ")");

    auto os = open_out(path);
    BinWriter w(os);
    w.magic("EGL1");
    w.u32(1);
    w.u32(static_cast<uint32_t>(traj.frames.size()));
    const auto pc = static_cast<uint32_t>(traj.pressure_channels());
    w.u32(pc);

    std::vector<float> buf;
    for (const auto& f : traj.frames) {
        const auto n = static_cast<uint32_t>(f.num_nodes());
        const auto e = static_cast<uint32_t>(f.edges.size());
        w.u32(n);
        w.u32(e);

        buf.resize(static_cast<size_t>(n) * 2);
        for (uint32_t i = 0; i < n; ++i) {
            buf[2 * i] = static_cast<float>(f.positions(i, 0));
            buf[2 * i + 1] = static_cast<float>(f.positions(i, 1));
        }
        w.bytes(buf.data(), buf.size() * 4);

        static_assert(sizeof(NodeType) == 1);
        w.bytes(f.node_types.data(), n);

        for (uint32_t i = 0; i < n; ++i) {
            buf[2 * i] = static_cast<float>(f.velocity(i, 0));
            buf[2 * i + 1] = static_cast<float>(f.velocity(i, 1));
        }
        w.bytes(buf.data(), buf.size() * 4);

        buf.resize(static_cast<size_t>(n) * pc);
        for (uint32_t i = 0; i < n; ++i)
            for (uint32_t c = 0; c < pc; ++c)
                buf[i * pc + c] = static_cast<float>(f.pressure(i, c));
        w.bytes(buf.data(), buf.size() * 4);

        std::vector<uint32_t> ebuf(static_cast<size_t>(e) * 2);
        for (uint32_t i = 0; i < e; ++i) {
            ebuf[2 * i] = f.edges[i].a;
            ebuf[2 * i + 1] = f.edges[i].b;
        }
        w.bytes(ebuf.data(), ebuf.size() * 4);
    }
    os.close();

    nlohmann::json meta{{"dt", traj.dt},
                        {"geometry_tag", traj.geometry_tag},
                        {"seed", traj.seed}};
    if (generator) meta["generator"] = *generator;
    auto ms = open_out(meta_path_for(path));
    ms << meta.dump(2) << "\n";
}

std::string meta_path_for(const std::string& traj_path) {
    const auto dot = traj_path.rfind(".bin");
    if (dot != std::string::npos && dot == traj_path.size() - 4)
        return traj_path.substr(0, dot) + ".meta.json";
    return traj_path + ".meta.json";
}

Trajectory load_trajectory(const std::string& path) {
    auto is = open_in(path);
    BinReader r(is, path);
    r.expect_magic("EGL1");
    const uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError(path + ": unsupported version " + std::to_string(version));
    const uint32_t steps = r.u32("num_steps");
    const uint32_t pc = r.u32("pressure_channels");
    if (pc == 0) throw FormatError(path + ": zero pressure channels");

    Trajectory traj;
    traj.frames.resize(steps);
    for (uint32_t s = 0; s < steps; ++s) {
        const std::string ctx = "frame " + std::to_string(s);
        try {
            MeshFrame& f = traj.frames[s];
            const uint32_t n = r.u32("node count");
            const uint32_t e = r.u32("edge count");

            std::vector<float> buf(static_cast<size_t>(n) * 2);
            r.bytes(buf.data(), buf.size() * 4, "positions");
            f.positions.resize(n, 2);
            for (uint32_t i = 0; i < n; ++i)
                f.positions.row(i) << buf[2 * i], buf[2 * i + 1];

            f.node_types.resize(n);
            r.bytes(f.node_types.data(), n, "node types");
            for (uint32_t i = 0; i < n; ++i)
                if (static_cast<uint8_t>(f.node_types[i]) > 3)
                    throw FormatError(path + ": invalid node type byte " +
                                      std::to_string(static_cast<int>(f.node_types[i])) +
                                      " at node " + std::to_string(i));

            r.bytes(buf.data(), buf.size() * 4, "velocity");
            f.velocity.resize(n, 2);
            for (uint32_t i = 0; i < n; ++i)
                f.velocity.row(i) << buf[2 * i], buf[2 * i + 1];

            buf.resize(static_cast<size_t>(n) * pc);
            r.bytes(buf.data(), buf.size() * 4, "pressure");
            f.pressure.resize(n, pc);
            for (uint32_t i = 0; i < n; ++i)
                for (uint32_t c = 0; c < pc; ++c) f.pressure(i, c) = buf[i * pc + c];

            std::vector<uint32_t> ebuf(static_cast<size_t>(e) * 2);
            r.bytes(ebuf.data(), ebuf.size() * 4, "edges");
            f.edges.resize(e);
            for (uint32_t i = 0; i < e; ++i) f.edges[i] = Edge(ebuf[2 * i], ebuf[2 * i + 1]);
        } catch (const FormatError& err) {
            throw FormatError(std::string(err.what()) + " (" + ctx + ")");
        }
    }

    auto ms = open_in(meta_path_for(path));
    nlohmann::json meta;
    try {
        ms >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(meta_path_for(path) + ": " + e.what());
    }
    traj.dt = meta.at("dt").get<double>();
    traj.geometry_tag = meta.value("geometry_tag", "");
    traj.seed = meta.value("seed", uint64_t{0});
    return traj;
}

void save_norm_stats(const NormStats& stats, const std::string& path) {
    nlohmann::json j{{"v_mean", {stats.v_mean.x(), stats.v_mean.y()}},
                     {"v_std", stats.v_std},
                     {"p_mean", std::vector<double>(stats.p_mean.data(),
                                                    stats.p_mean.data() + stats.p_mean.size())},
                     {"p_std", stats.p_std}};
    auto os = open_out(path);
    os << j.dump(2) << "\n";
}

NormStats load_norm_stats(const std::string& path) {
    auto is = open_in(path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    NormStats s;
    s.v_mean.x() = j.at("v_mean").at(0).get<double>();
    s.v_mean.y() = j.at("v_mean").at(1).get<double>();
    s.v_std = j.at("v_std").get<double>();
    const auto pm = j.at("p_mean").get<std::vector<double>>();
    s.p_mean = Eigen::Map<const Eigen::VectorXd>(pm.data(), static_cast<Eigen::Index>(pm.size()));
    s.p_std = j.at("p_std").get<double>();
    return s;
}

}  // namespace flowcast
