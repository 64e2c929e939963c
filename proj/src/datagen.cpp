#include "flowcast/datagen.hpp"

#include "flowcast/delaunay.hpp"
#include "flowcast/geometry.hpp"
#include "flowcast/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

namespace flowcast {

using std::numbers::pi;

// --- analytic flows -----------------------------------------------------------

Vec2 TaylorGreenFlow::velocity(const Vec2& x, double t) const {
    const double xs = x.x() + phase.x();
    const double ys = x.y() + phase.y();
    const double decay = std::exp(-2.0 * viscosity * pi * pi * t);
    return {amplitude * std::sin(pi * xs) * std::cos(pi * ys) * decay,
            -amplitude * std::cos(pi * xs) * std::sin(pi * ys) * decay};
}

double TaylorGreenFlow::pressure(const Vec2& x, double t) const {
    const double xs = x.x() + phase.x();
    const double ys = x.y() + phase.y();
    const double decay = std::exp(-4.0 * viscosity * pi * pi * t);
    return amplitude * amplitude / 4.0 * (std::cos(2 * pi * xs) + std::cos(2 * pi * ys)) * decay;
}

namespace {

/// Tangential speed over r: Gamma/(2 pi r^2) (1 - exp(-r^2/rc^2)), with the
/// r -> 0 limit Gamma/(2 pi rc^2).
double swirl_factor(double r2, double circulation, double core_radius) {
    const double rc2 = core_radius * core_radius;
    if (r2 < 1e-24 * rc2) return circulation / (2 * pi * rc2);
    return circulation / (2 * pi * r2) * (-std::expm1(-r2 / rc2));
}

Vec2 induced_velocity(const Vec2& x, const LambVortex& v) {
    const Vec2 d = x - v.center;
    const double f = swirl_factor(d.squaredNorm(), v.circulation, v.core_radius);
    return {-f * d.y(), f * d.x()};
}

}  // namespace

Vec2 vortex_velocity(const Vec2& x, const std::vector<LambVortex>& vortices) {
    Vec2 out = Vec2::Zero();
    for (const auto& v : vortices) out += induced_velocity(x, v);
    return out;
}

double vortex_pseudo_pressure(const Vec2& x, const std::vector<LambVortex>& vortices) {
    return -0.5 * vortex_velocity(x, vortices).squaredNorm();
}

void vortex_system_step(std::vector<LambVortex>& vortices, double dt) {
    const size_t n = vortices.size();
    auto deriv = [&](const std::vector<Vec2>& centers) {
        std::vector<Vec2> out(n, Vec2::Zero());
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                LambVortex v = vortices[j];
                v.center = centers[j];
                out[i] += induced_velocity(centers[i], v);
            }
        return out;
    };

    std::vector<Vec2> c0(n);
    for (size_t i = 0; i < n; ++i) c0[i] = vortices[i].center;

    auto shifted = [&](const std::vector<Vec2>& k, double s) {
        std::vector<Vec2> out(n);
        for (size_t i = 0; i < n; ++i) out[i] = c0[i] + s * k[i];
        return out;
    };

    const auto k1 = deriv(c0);
    const auto k2 = deriv(shifted(k1, dt / 2));
    const auto k3 = deriv(shifted(k2, dt / 2));
    const auto k4 = deriv(shifted(k3, dt));
    for (size_t i = 0; i < n; ++i)
        vortices[i].center = c0[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
}

// --- point sampling ---------------------------------------------------------------

std::vector<uint32_t> poisson_disk_downsample(const std::vector<Vec2>& points,
                                              const std::vector<double>& radii, uint64_t seed) {
    if (radii.size() != points.size())
        throw DataError("poisson_disk_downsample: radius count does not match point count");
    for (double r : radii)
        if (!(r > 0)) throw DataError("poisson_disk_downsample: radii must be positive");

    Rng rng(Rng::mix(seed, 0x706473ULL));
    std::vector<uint32_t> alive(points.size());
    for (uint32_t i = 0; i < points.size(); ++i) alive[i] = i;

    std::vector<uint32_t> retained;
    while (!alive.empty()) {
        const size_t pick = rng.uniform_int(alive.size());
        const uint32_t p = alive[pick];
        retained.push_back(p);
        alive[pick] = alive.back();
        alive.pop_back();

        const double r2 = radii[p] * radii[p];
        for (size_t i = 0; i < alive.size();) {
            if ((points[alive[i]] - points[p]).squaredNorm() < r2) {
                alive[i] = alive.back();
                alive.pop_back();
            } else {
                ++i;
            }
        }
    }
    std::sort(retained.begin(), retained.end());
    return retained;
}

std::vector<uint32_t> poisson_disk_downsample(const std::vector<Vec2>& points, double radius,
                                              uint64_t seed) {
    return poisson_disk_downsample(points, std::vector<double>(points.size(), radius), seed);
}

DomainSpec DomainSpec::unit_square() {
    return {{{0, 0}, {1, 0}, {1, 1}, {0, 1}},
            {NodeType::Wall, NodeType::Wall, NodeType::Outlet, NodeType::Wall}};
}

DomainSpec DomainSpec::rectangle(double w, double h) {
    return {{{0, 0}, {w, 0}, {w, h}, {0, h}},
            {NodeType::Wall, NodeType::Wall, NodeType::Outlet, NodeType::Wall}};
}

DomainMesh sample_domain_mesh(const DomainSpec& domain, int n_points, uint64_t seed) {
    if (n_points < 3) throw DataError("sample_domain_mesh: need at least 3 points");
    if (domain.polygon.size() < 3 || !polygon_is_simple(domain.polygon))
        throw DataError("sample_domain_mesh: domain polygon is not simple");
    if (domain.edge_types.size() != domain.polygon.size())
        throw DataError("sample_domain_mesh: need one edge type per polygon edge");

    const double area = polygon_area(domain.polygon);
    double perimeter = 0;
    const size_t nv = domain.polygon.size();
    for (size_t i = 0; i < nv; ++i)
        perimeter += (domain.polygon[(i + 1) % nv] - domain.polygon[i]).norm();

    const double r0 = std::sqrt(area / n_points);
    // Boundary spacing close to the interior spacing, capped so the boundary
    // does not swallow the node budget.
    const double spacing = std::max(0.9 * r0, perimeter / std::max(4.0, 0.45 * n_points));

    std::vector<Vec2> positions;
    std::vector<NodeType> types;
    for (size_t i = 0; i < nv; ++i) {
        const Vec2 a = domain.polygon[i];
        const Vec2 b = domain.polygon[(i + 1) % nv];
        const auto segs = std::max<int>(1, static_cast<int>(std::ceil((b - a).norm() / spacing)));
        for (int s = 0; s < segs; ++s) {
            positions.push_back(a + (b - a) * (static_cast<double>(s) / segs));
            types.push_back(domain.edge_types[i]);
        }
    }
    const auto n_boundary = static_cast<uint32_t>(positions.size());
    const int n_interior = n_points - static_cast<int>(n_boundary);
    if (n_interior < 3)
        throw DataError("sample_domain_mesh: boundary alone uses " + std::to_string(n_boundary) +
                        " of " + std::to_string(n_points) + " requested nodes");

    // Uniform oversampling inside the polygon, clear of the boundary nodes.
    Rng rng(Rng::mix(seed, 0x646f6dULL));
    Vec2 lo = domain.polygon[0], hi = domain.polygon[0];
    for (const auto& p : domain.polygon) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double clear2 = 0.25 * spacing * spacing;
    std::vector<Vec2> candidates;
    const size_t want = static_cast<size_t>(n_interior) * 12;
    size_t tries = 0;
    while (candidates.size() < want && tries < want * 40) {
        ++tries;
        const Vec2 p{rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y())};
        if (!point_in_polygon(p, domain.polygon)) continue;
        bool clear = true;
        for (uint32_t b = 0; b < n_boundary && clear; ++b)
            if ((positions[b] - p).squaredNorm() < clear2) clear = false;
        if (clear) candidates.push_back(p);
    }
    if (candidates.size() < static_cast<size_t>(n_interior))
        throw DataError("sample_domain_mesh: could only place " +
                        std::to_string(candidates.size()) + " interior candidates for target " +
                        std::to_string(n_interior));

    // Radius bisection towards the interior budget (retention count is
    // monotone non-increasing in the radius).
    double r_lo = 1e-6 * r0, r_hi = 4.0 * r0;
    double best_r = r0;
    size_t best_count = 0;
    size_t best_gap = SIZE_MAX;
    for (int it = 0; it < 48; ++it) {
        const double r = 0.5 * (r_lo + r_hi);
        const auto kept = poisson_disk_downsample(candidates, r, seed);
        const size_t gap = kept.size() > static_cast<size_t>(n_interior)
                               ? kept.size() - static_cast<size_t>(n_interior)
                               : static_cast<size_t>(n_interior) - kept.size();
        if (gap < best_gap) {
            best_gap = gap;
            best_r = r;
            best_count = kept.size();
        }
        if (kept.size() == static_cast<size_t>(n_interior)) break;
        if (kept.size() > static_cast<size_t>(n_interior))
            r_lo = r;
        else
            r_hi = r;
    }
    const auto tolerance = static_cast<size_t>(std::max(3.0, 0.3 * n_interior));
    if (best_gap > tolerance)
        throw DataError("sample_domain_mesh: unachievable node budget " + std::to_string(n_points) +
                        " (achieved " + std::to_string(best_count + n_boundary) + ")");

    const auto kept = poisson_disk_downsample(candidates, best_r, seed);
    for (const auto idx : kept) {
        positions.push_back(candidates[idx]);
        types.push_back(NodeType::Interior);
    }

    DomainMesh out;
    out.num_boundary = n_boundary;
    out.interior_radius = best_r;
    const auto n = static_cast<Eigen::Index>(positions.size());
    out.frame.positions.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i)
        out.frame.positions.row(i) = positions[static_cast<size_t>(i)].transpose();
    out.frame.node_types = std::move(types);
    out.frame.velocity = Eigen::MatrixX2d::Zero(n, 2);
    out.frame.pressure = MatrixXd::Zero(n, 1);
    out.frame.edges = delaunay_triangulate(positions, domain.polygon).edges;
    return out;
}

// --- drone dynamics ---------------------------------------------------------------

double DroneParams::hover_speed() const { return std::sqrt(gravity / (2.0 * k1)); }

namespace {

using State6 = Eigen::Matrix<double, 6, 1>;  // x, y, theta, vx, vy, theta_dot

State6 drone_deriv(const State6& z, double o1, double o2, const DroneParams& p) {
    const double thrust = p.k1 * (o1 * o1 + o2 * o2);
    const double drag = p.k2 * (o1 + o2);
    State6 d;
    d(0) = z(3);
    d(1) = z(4);
    d(2) = z(5);
    d(3) = -thrust * std::sin(z(2)) + drag * z(3);
    d(4) = thrust * std::cos(z(2)) - p.gravity + drag * z(4);
    d(5) = p.k3 * (o2 * o2 - o1 * o1);
    return d;
}

}  // namespace

DroneState drone_step(const DroneState& state, double omega1, double omega2, double dt,
                      const DroneParams& params) {
    if (!(dt > 0)) throw DataError("drone_step: dt must be positive");
    if (omega1 < 0 || omega2 < 0) throw DataError("drone_step: rotor speeds must be >= 0");

    State6 z;
    z << state.position.x(), state.position.y(), state.theta, state.velocity.x(),
        state.velocity.y(), state.theta_dot;

    const State6 k1 = drone_deriv(z, omega1, omega2, params);
    const State6 k2 = drone_deriv(z + 0.5 * dt * k1, omega1, omega2, params);
    const State6 k3 = drone_deriv(z + 0.5 * dt * k2, omega1, omega2, params);
    const State6 k4 = drone_deriv(z + dt * k3, omega1, omega2, params);
    z += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);

    DroneState out;
    out.position = {z(0), z(1)};
    out.theta = z(2);
    out.velocity = {z(3), z(4)};
    out.theta_dot = z(5);
    out.rotor[0] = omega1;
    out.rotor[1] = omega2;
    return out;
}

TrackResult track_trajectory(const std::vector<Vec2>& reference, double dt,
                             const DroneParams& params, const TrackingOptions& opts) {
    if (reference.size() < 2) throw DataError("track_trajectory: reference needs >= 2 samples");
    if (!(dt > 0)) throw DataError("track_trajectory: dt must be positive");
    if (opts.horizon < 1) throw DataError("track_trajectory: horizon must be >= 1");

    using Mat6 = Eigen::Matrix<double, 6, 6>;
    using Mat62 = Eigen::Matrix<double, 6, 2>;
    using Vec6 = State6;

    const double os = params.hover_speed();
    const double g = params.gravity;

    // Hover linearization, discretized to second order in dt.
    Mat6 a = Mat6::Zero();
    a(0, 3) = 1;
    a(1, 4) = 1;
    a(2, 5) = 1;
    a(3, 2) = -g;
    a(3, 3) = 2 * params.k2 * os;
    a(4, 4) = 2 * params.k2 * os;
    Mat62 b = Mat62::Zero();
    b(4, 0) = 2 * params.k1 * os;
    b(4, 1) = 2 * params.k1 * os;
    b(5, 0) = -2 * params.k3 * os;
    b(5, 1) = 2 * params.k3 * os;

    const Mat6 ad = Mat6::Identity() + a * dt + 0.5 * (a * a) * dt * dt;
    const Mat62 bd = (Mat6::Identity() * dt + 0.5 * a * dt * dt) * b;

    const Mat6 q = opts.state_weights.asDiagonal();
    const Eigen::Matrix2d r = Eigen::Matrix2d::Identity() * opts.command_weight;

    auto ref_state = [&](size_t i) {
        const size_t n = reference.size();
        const size_t at = std::min(i, n - 1);
        const size_t nxt = std::min(at + 1, n - 1);
        Vec6 z = Vec6::Zero();
        z(0) = reference[at].x();
        z(1) = reference[at].y();
        z(3) = (reference[nxt].x() - reference[at].x()) / dt;
        z(4) = (reference[nxt].y() - reference[at].y()) / dt;
        return z;
    };

    TrackResult result;
    DroneState state;
    state.position = reference.front();
    state.rotor[0] = state.rotor[1] = os;
    result.states.push_back(state);

    const int horizon = opts.horizon;
    for (size_t step = 0; step + 1 < reference.size(); ++step) {
        // Backward Riccati recursion for the affine tracking problem.
        Mat6 p = q;
        Vec6 qv = -q * ref_state(step + static_cast<size_t>(horizon));
        Eigen::Matrix<double, 2, 6> gain_k;
        Eigen::Vector2d gain_c = Eigen::Vector2d::Zero();
        for (int t = horizon - 1; t >= 0; --t) {
            const Eigen::Matrix2d s = r + bd.transpose() * p * bd;
            const auto s_inv = s.inverse();
            gain_k = s_inv * bd.transpose() * p * ad;
            gain_c = s_inv * bd.transpose() * qv;
            const Mat6 at_cl = ad - bd * gain_k;
            const Mat6 p_next = q + gain_k.transpose() * r * gain_k + at_cl.transpose() * p * at_cl;
            qv = -q * ref_state(step + static_cast<size_t>(t)) +
                 gain_k.transpose() * r * gain_c + at_cl.transpose() * (qv - p * bd * gain_c);
            p = p_next;
        }

        Vec6 z;
        z << state.position.x(), state.position.y(), state.theta, state.velocity.x(),
            state.velocity.y(), state.theta_dot;
        const Eigen::Vector2d du = -gain_k * z - gain_c;
        const double o1 = std::max(0.0, os + du(0));
        const double o2 = std::max(0.0, os + du(1));

        state = drone_step(state, o1, o2, dt, params);
        result.commands.push_back({o1, o2});
        result.states.push_back(state);

        if (!state.position.allFinite() || !std::isfinite(state.theta) ||
            state.position.cwiseAbs().maxCoeff() > opts.divergence_bound)
            throw NumericError("track_trajectory: diverged at step " + std::to_string(step + 1) +
                               " (position " + std::to_string(state.position.x()) + ", " +
                               std::to_string(state.position.y()) + ", theta " +
                               std::to_string(state.theta) + ")");
    }
    return result;
}

// --- dataset generation -----------------------------------------------------------------

std::string to_string(FlowFamily family) {
    switch (family) {
        case FlowFamily::TaylorGreen: return "taylor-green";
        case FlowFamily::VortexSystem: return "vortex";
        case FlowFamily::RotorWake: return "rotor-wake";
    }
    return "taylor-green";
}

FlowFamily flow_family_from_string(const std::string& s) {
    if (s == "taylor-green" || s == "taylor_green") return FlowFamily::TaylorGreen;
    if (s == "vortex") return FlowFamily::VortexSystem;
    if (s == "rotor-wake" || s == "rotor_wake") return FlowFamily::RotorWake;
    throw DataError("unknown flow family: " + s);
}

namespace {

std::string family_prefix(FlowFamily f) {
    switch (f) {
        case FlowFamily::TaylorGreen: return "tg";
        case FlowFamily::VortexSystem: return "vx";
        case FlowFamily::RotorWake: return "rw";
    }
    return "tg";
}

void fill_fields(MeshFrame& frame, const std::function<Vec2(const Vec2&)>& vel,
                 const std::function<double(const Vec2&)>& pres) {
    const auto n = frame.num_nodes();
    frame.velocity.resize(n, 2);
    frame.pressure.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec2 x = frame.positions.row(i).transpose();
        frame.velocity.row(i) = vel(x).transpose();
        frame.pressure(i, 0) = pres(x);
    }
}

Trajectory generate_taylor_green(const GenConfig& cfg, uint64_t traj_seed, std::string tag) {
    Rng rng(traj_seed);
    TaylorGreenFlow flow;
    flow.amplitude = rng.uniform(0.5, 1.5);
    flow.viscosity = rng.uniform(0.005, 0.02);
    flow.phase = {rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)};

    DomainMesh base = sample_domain_mesh(DomainSpec::unit_square(), cfg.nodes, traj_seed);

    Trajectory traj;
    traj.dt = cfg.dt;
    traj.geometry_tag = std::move(tag);
    traj.seed = traj_seed;
    for (int f = 0; f < cfg.steps; ++f) {
        MeshFrame frame = base.frame;
        const double t = f * cfg.dt;
        fill_fields(
            frame, [&](const Vec2& x) { return flow.velocity(x, t); },
            [&](const Vec2& x) { return flow.pressure(x, t); });
        traj.frames.push_back(std::move(frame));
    }
    return traj;
}

Trajectory generate_vortex(const GenConfig& cfg, uint64_t traj_seed, std::string tag) {
    Rng rng(traj_seed);
    std::vector<LambVortex> vortices(2 + rng.uniform_int(3));
    for (auto& v : vortices) {
        v.center = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
        v.circulation = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 2.0);
        v.core_radius = rng.uniform(0.05, 0.15);
    }

    DomainMesh base = sample_domain_mesh(DomainSpec::unit_square(), cfg.nodes, traj_seed);

    Trajectory traj;
    traj.dt = cfg.dt;
    traj.geometry_tag = std::move(tag);
    traj.seed = traj_seed;
    for (int f = 0; f < cfg.steps; ++f) {
        MeshFrame frame = base.frame;
        fill_fields(
            frame, [&](const Vec2& x) { return vortex_velocity(x, vortices); },
            [&](const Vec2& x) { return vortex_pseudo_pressure(x, vortices); });
        traj.frames.push_back(std::move(frame));
        for (int sub = 0; sub < 4; ++sub) vortex_system_step(vortices, cfg.dt / 4);
    }
    return traj;
}

Trajectory generate_rotor_wake(const GenConfig& cfg, uint64_t traj_seed, std::string tag) {
    Rng rng(traj_seed);
    const DomainSpec domain = DomainSpec::rectangle(2.0, 1.0);
    DomainMesh base = sample_domain_mesh(domain, cfg.nodes, traj_seed);

    // Reference: cruise from the left third to the right, hovering low, with a
    // gentle altitude ripple.
    const double x0 = rng.uniform(0.4, 0.6), x1 = rng.uniform(1.4, 1.6);
    const double alt = rng.uniform(0.5, 0.65);
    const double ripple = rng.uniform(0.02, 0.05);
    std::vector<Vec2> reference;
    for (int f = 0; f < cfg.steps; ++f) {
        const double u = cfg.steps > 1 ? static_cast<double>(f) / (cfg.steps - 1) : 0.0;
        const double ease = u * u * (3 - 2 * u);
        reference.emplace_back(x0 + (x1 - x0) * ease, alt + ripple * std::sin(4 * pi * u));
    }

    const DroneParams params;
    TrackResult track = track_trajectory(reference, cfg.dt, params);

    const double arm = 0.06;
    const double clear_radius = 2.5 * arm;
    const double gamma_scale = 0.05;
    std::vector<LambVortex> vortices;

    Trajectory traj;
    traj.dt = cfg.dt;
    traj.geometry_tag = std::move(tag);
    traj.seed = traj_seed;
    for (int f = 0; f < cfg.steps; ++f) {
        const DroneState& st = track.states[static_cast<size_t>(f)];
        const Vec2 along{std::cos(st.theta), std::sin(st.theta)};
        const Vec2 rotor_l = st.position - arm * along;
        const Vec2 rotor_r = st.position + arm * along;

        // Emit a counter-rotating pair at the rotors (downwash between them)
        // and advect the wake.
        const double os = params.hover_speed();
        const double wl = st.rotor[0] / os, wr = st.rotor[1] / os;
        vortices.push_back({rotor_l, -gamma_scale * wl * wl, 0.6 * arm});
        vortices.push_back({rotor_r, gamma_scale * wr * wr, 0.6 * arm});
        if (vortices.size() > 60) vortices.erase(vortices.begin(), vortices.begin() + 2);

        // Dynamic mesh: clear static interior nodes near the drone, add the
        // two emitter nodes, re-triangulate.
        std::vector<Vec2> pts;
        std::vector<NodeType> types;
        for (Eigen::Index i = 0; i < base.frame.num_nodes(); ++i) {
            const Vec2 x = base.frame.positions.row(i).transpose();
            if (base.frame.node_types[static_cast<size_t>(i)] == NodeType::Interior &&
                (x - st.position).norm() < clear_radius)
                continue;
            pts.push_back(x);
            types.push_back(base.frame.node_types[static_cast<size_t>(i)]);
        }
        pts.push_back(rotor_l);
        types.push_back(NodeType::Inlet);
        pts.push_back(rotor_r);
        types.push_back(NodeType::Inlet);

        MeshFrame frame;
        const auto n = static_cast<Eigen::Index>(pts.size());
        frame.positions.resize(n, 2);
        for (Eigen::Index i = 0; i < n; ++i)
            frame.positions.row(i) = pts[static_cast<size_t>(i)].transpose();
        frame.node_types = std::move(types);
        frame.edges = delaunay_triangulate(pts, domain.polygon).edges;
        fill_fields(
            frame, [&](const Vec2& x) { return vortex_velocity(x, vortices); },
            [&](const Vec2& x) { return vortex_pseudo_pressure(x, vortices); });
        traj.frames.push_back(std::move(frame));

        if (f + 1 < cfg.steps)
            for (int sub = 0; sub < 4; ++sub) vortex_system_step(vortices, cfg.dt / 4);
    }
    return traj;
}

}  // namespace

Manifest generate_dataset(const GenConfig& cfg, const std::string& out_dir) {
    if (cfg.n_traj < 1 || cfg.steps < 2 || cfg.nodes < 3 || !(cfg.dt > 0))
        throw DataError("generate_dataset: need n_traj >= 1, steps >= 2, nodes >= 3, dt > 0");
    std::filesystem::create_directories(out_dir);

    Manifest manifest;
    manifest.pressure_channels = 1;

    const int n_train = std::max(1, static_cast<int>(std::floor(0.8 * cfg.n_traj)));
    const int n_valid = (cfg.n_traj - n_train) / 2;

    for (int ti = 0; ti < cfg.n_traj; ++ti) {
        const uint64_t traj_seed = Rng::mix(cfg.seed, static_cast<uint64_t>(ti));
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%s_%04d", family_prefix(cfg.family).c_str(), ti);
        const std::string id = idbuf;

        Trajectory traj;
        switch (cfg.family) {
            case FlowFamily::TaylorGreen:
                traj = generate_taylor_green(cfg, traj_seed, to_string(cfg.family));
                break;
            case FlowFamily::VortexSystem:
                traj = generate_vortex(cfg, traj_seed, to_string(cfg.family));
                break;
            case FlowFamily::RotorWake:
                traj = generate_rotor_wake(cfg, traj_seed, to_string(cfg.family));
                break;
        }

        nlohmann::json generator{{"family", to_string(cfg.family)},
                                 {"n_traj", cfg.n_traj},
                                 {"steps", cfg.steps},
                                 {"nodes", cfg.nodes},
                                 {"dt", cfg.dt},
                                 {"seed", cfg.seed},
                                 {"trajectory_index", ti}};
        if (cfg.family != FlowFamily::TaylorGreen)
            generator["pressure_model"] = "pseudo (-0.5 |v|^2), synthetic";
        save_trajectory(traj, trajectory_path(out_dir, id), &generator);

        if (ti < n_train)
            manifest.train.push_back(id);
        else if (ti < n_train + n_valid)
            manifest.valid.push_back(id);
        else
            manifest.test.push_back(id);
    }

    save_manifest(manifest, out_dir);
    return manifest;
}

}  // namespace flowcast
