#include "flowcast/clustering.hpp"

#include "flowcast/binio.hpp"
#include "flowcast/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace flowcast {

void ClusterAssignment::rebuild_members() {
    members_.assign(num_clusters, {});
    for (uint32_t k = 0; k < num_clusters; ++k)
        members_[k].reserve(sizes.empty() ? 0 : sizes[k]);
    for (uint32_t i = 0; i < assignment.size(); ++i) members_[assignment[i]].push_back(i);
}

namespace {

double dist2(const Eigen::MatrixX2d& pts, uint32_t i, const Vec2& c) {
    const double dx = pts(i, 0) - c.x();
    const double dy = pts(i, 1) - c.y();
    return dx * dx + dy * dy;
}

std::vector<Vec2> kmeanspp_init(const Eigen::MatrixX2d& pts, uint32_t k, Rng& rng) {
    const auto n = static_cast<uint32_t>(pts.rows());
    std::vector<Vec2> centroids;
    centroids.reserve(k);
    centroids.push_back(pts.row(static_cast<Eigen::Index>(rng.uniform_int(n))).transpose());

    std::vector<double> d2(n);
    for (uint32_t i = 0; i < n; ++i) d2[i] = dist2(pts, i, centroids[0]);

    while (centroids.size() < k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        uint32_t pick;
        if (total <= 0) {
            pick = static_cast<uint32_t>(rng.uniform_int(n));
        } else {
            const double target = rng.uniform() * total;
            double acc = 0;
            pick = n - 1;
            for (uint32_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(pts.row(pick).transpose());
        for (uint32_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], dist2(pts, i, centroids.back()));
    }
    return centroids;
}

}  // namespace

ClusterAssignment same_size_kmeans(const Eigen::MatrixX2d& positions, uint32_t target_size,
                                   uint64_t seed, std::vector<double>* objective_trace,
                                   int max_iters) {
    const auto n = static_cast<uint32_t>(positions.rows());
    if (n == 0) throw DataError("same_size_kmeans: no points");
    if (target_size == 0) throw DataError("same_size_kmeans: target_size must be >= 1");

    const uint32_t k = (n + target_size - 1) / target_size;

    ClusterAssignment out;
    out.num_clusters = k;
    out.target_size = target_size;
    out.assignment.assign(n, 0);
    out.sizes.assign(k, n / k);
    for (uint32_t c = 0; c < n % k; ++c) out.sizes[c] += 1;  // first N mod K clusters get one extra

    Rng rng(Rng::mix(seed, 0x6b6d6e73ULL));
    std::vector<Vec2> centroids = kmeanspp_init(positions, k, rng);

    // Greedy capacity-constrained assignment: points that care most about
    // their placement (largest spread between worst and best centroid) pick
    // first.
    std::vector<double> priority(n);
    for (uint32_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity(), worst = 0;
        for (const auto& c : centroids) {
            const double d = dist2(positions, i, c);
            best = std::min(best, d);
            worst = std::max(worst, d);
        }
        priority[i] = worst - best;
    }
    std::vector<uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](uint32_t a, uint32_t b) { return priority[a] > priority[b]; });

    std::vector<uint32_t> capacity = out.sizes;
    for (uint32_t oi = 0; oi < n; ++oi) {
        const uint32_t p = order[oi];
        double best = std::numeric_limits<double>::infinity();
        uint32_t best_c = 0;
        for (uint32_t c = 0; c < k; ++c) {
            if (capacity[c] == 0) continue;
            const double d = dist2(positions, p, centroids[c]);
            if (d < best) {
                best = d;
                best_c = c;
            }
        }
        out.assignment[p] = best_c;
        --capacity[best_c];
    }

    out.rebuild_members();
    std::vector<std::vector<uint32_t>> members(k);
    for (uint32_t c = 0; c < k; ++c) members[c] = out.members_of(c);

    // Refinement: recompute centroids, then greedily swap point pairs between
    // clusters while any swap strictly decreases the within-cluster squared
    // distance (centroids held fixed during the swap pass, so each executed
    // swap strictly decreases the objective).
    std::vector<double> own_d2(n);
    for (int iter = 0; iter < max_iters; ++iter) {
        for (uint32_t c = 0; c < k; ++c) {
            Vec2 sum = Vec2::Zero();
            for (uint32_t p : members[c]) sum += positions.row(p).transpose();
            centroids[c] = sum / static_cast<double>(members[c].size());
        }

        if (objective_trace) {
            double j = 0;
            for (uint32_t i = 0; i < n; ++i) j += dist2(positions, i, centroids[out.assignment[i]]);
            objective_trace->push_back(j);
        }

        for (uint32_t i = 0; i < n; ++i) own_d2[i] = dist2(positions, i, centroids[out.assignment[i]]);

        bool swapped_any = false;
        for (uint32_t a = 0; a < k; ++a) {
            for (uint32_t b = a + 1; b < k; ++b) {
                const size_t cap = 2 * (members[a].size() + members[b].size());
                for (size_t rep = 0; rep < cap; ++rep) {
                    double gain_a = -std::numeric_limits<double>::infinity();
                    double gain_b = -std::numeric_limits<double>::infinity();
                    size_t pa = 0, pb = 0;
                    for (size_t m = 0; m < members[a].size(); ++m) {
                        const double g = own_d2[members[a][m]] -
                                         dist2(positions, members[a][m], centroids[b]);
                        if (g > gain_a) {
                            gain_a = g;
                            pa = m;
                        }
                    }
                    for (size_t m = 0; m < members[b].size(); ++m) {
                        const double g = own_d2[members[b][m]] -
                                         dist2(positions, members[b][m], centroids[a]);
                        if (g > gain_b) {
                            gain_b = g;
                            pb = m;
                        }
                    }
                    if (!(gain_a + gain_b > 0)) break;

                    const uint32_t p = members[a][pa];
                    const uint32_t q = members[b][pb];
                    members[a][pa] = q;
                    members[b][pb] = p;
                    out.assignment[p] = b;
                    out.assignment[q] = a;
                    own_d2[p] = dist2(positions, p, centroids[b]);
                    own_d2[q] = dist2(positions, q, centroids[a]);
                    swapped_any = true;
                }
            }
        }
        if (!swapped_any) break;
    }

    for (uint32_t c = 0; c < k; ++c) std::sort(members[c].begin(), members[c].end());
    out.rebuild_members();
    return out;
}

Eigen::MatrixX2d cluster_barycenters(const Eigen::MatrixX2d& positions,
                                     const ClusterAssignment& assignment) {
    const uint32_t k = assignment.num_clusters;
    Eigen::MatrixX2d bary = Eigen::MatrixX2d::Zero(k, 2);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(k);
    for (uint32_t i = 0; i < assignment.assignment.size(); ++i) {
        bary.row(assignment.assignment[i]) += positions.row(i);
        count(assignment.assignment[i]) += 1;
    }
    for (uint32_t c = 0; c < k; ++c) bary.row(c) /= count(c);
    return bary;
}

Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>
cluster_adjacency(const ClusterAssignment& assignment, const std::vector<Edge>& edges) {
    const uint32_t k = assignment.num_clusters;
    Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> adj(k, k);
    adj.setZero();
    for (uint32_t c = 0; c < k; ++c) adj(c, c) = 1;
    for (const auto& e : edges) {
        const uint32_t ca = assignment.assignment[e.a];
        const uint32_t cb = assignment.assignment[e.b];
        adj(ca, cb) = 1;
        adj(cb, ca) = 1;
    }
    return adj;
}

ClusterGeometry make_cluster_geometry(const Eigen::MatrixX2d& positions,
                                      const ClusterAssignment& assignment,
                                      const std::vector<Edge>& edges) {
    return {cluster_barycenters(positions, assignment), cluster_adjacency(assignment, edges)};
}

// --- cluster cache ----------------------------------------------------------

std::string cluster_cache_path(const std::string& traj_path, uint32_t target_size, uint64_t seed) {
    std::string base = traj_path;
    const auto dot = base.rfind(".bin");
    if (dot != std::string::npos && dot == base.size() - 4) base = base.substr(0, dot);
    return base + ".clusters_s" + std::to_string(target_size) + "_seed" + std::to_string(seed) +
           ".bin";
}

std::vector<ClusterAssignment> cluster_trajectory(const Trajectory& traj, uint32_t target_size,
                                                  uint64_t seed) {
    std::vector<ClusterAssignment> out(traj.frames.size());
#pragma omp parallel for schedule(dynamic)
    for (int64_t f = 0; f < static_cast<int64_t>(traj.frames.size()); ++f)
        out[static_cast<size_t>(f)] =
            same_size_kmeans(traj.frames[static_cast<size_t>(f)].positions, target_size, seed);
    return out;
}

void save_cluster_cache(const std::vector<ClusterAssignment>& frames, uint32_t target_size,
                        const std::string& path) {
    (void)target_size;  // encoded in the file name
    auto os = open_out(path);
    BinWriter w(os);
    w.magic("EGLC");
    w.u32(1);
    w.u32(static_cast<uint32_t>(frames.size()));
    for (const auto& a : frames) {
        w.u32(static_cast<uint32_t>(a.assignment.size()));
        w.u32(a.num_clusters);
        w.bytes(a.assignment.data(), a.assignment.size() * 4);
    }
}

std::vector<ClusterAssignment> load_cluster_cache(const std::string& path, uint32_t target_size) {
    auto is = open_in(path);
    BinReader r(is, path);
    r.expect_magic("EGLC");
    const uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError(path + ": unsupported cluster cache version " + std::to_string(version));
    const uint32_t steps = r.u32("num_steps");
    std::vector<ClusterAssignment> out(steps);
    for (uint32_t s = 0; s < steps; ++s) {
        const uint32_t n = r.u32("node count");
        const uint32_t k = r.u32("cluster count");
        ClusterAssignment& a = out[s];
        a.num_clusters = k;
        a.target_size = target_size;
        a.assignment.resize(n);
        r.bytes(a.assignment.data(), static_cast<size_t>(n) * 4, "assignment");
        a.sizes.assign(k, 0);
        for (uint32_t i = 0; i < n; ++i) {
            if (a.assignment[i] >= k)
                throw FormatError(path + ": cluster index out of range at step " +
                                  std::to_string(s) + ", node " + std::to_string(i));
            a.sizes[a.assignment[i]] += 1;
        }
        a.rebuild_members();
    }
    return out;
}

std::vector<ClusterAssignment> precompute_clusters(const Trajectory& traj, uint32_t target_size,
                                                   uint64_t seed, const std::string& cache_path) {
    auto frames = cluster_trajectory(traj, target_size, seed);
    save_cluster_cache(frames, target_size, cache_path);
    return frames;
}

}  // namespace flowcast
