#pragma once

#include "flowcast/common.hpp"
#include "flowcast/dataset.hpp"
#include "flowcast/mesh.hpp"

#include <functional>
#include <string>
#include <vector>

namespace flowcast {

// --- analytic flows -----------------------------------------------------------

/// Decaying Taylor-Green vortex on the plane (exact incompressible solution):
///   v = (U sin(pi x) cos(pi y), -U cos(pi x) sin(pi y)) exp(-2 nu pi^2 t)
///   p = (U^2/4) (cos 2 pi x + cos 2 pi y) exp(-4 nu pi^2 t)
/// with positions shifted by `phase` first.
struct TaylorGreenFlow {
    double amplitude = 1.0;  // U
    double viscosity = 0.01;  // nu
    Vec2 phase = Vec2::Zero();

    Vec2 velocity(const Vec2& x, double t) const;
    double pressure(const Vec2& x, double t) const;
};

/// Lamb-Oseen vortex: u_theta(r) = Gamma/(2 pi r) (1 - exp(-r^2/rc^2)),
/// finite at the core.
struct LambVortex {
    Vec2 center = Vec2::Zero();
    double circulation = 1.0;  // Gamma
    double core_radius = 0.1;  // rc
};

Vec2 vortex_velocity(const Vec2& x, const std::vector<LambVortex>& vortices);

/// Synthetic Bernoulli-style pseudo-pressure -0.5 |v|^2 (not a physical
/// pressure; documented in generated metadata).
double vortex_pseudo_pressure(const Vec2& x, const std::vector<LambVortex>& vortices);

/// Advances vortex centers by the velocity induced by all other vortices
/// (point-vortex dynamics with Lamb-Oseen regularization), one RK4 step.
/// Circulations and core radii are conserved.
void vortex_system_step(std::vector<LambVortex>& vortices, double dt);

// --- point sampling -------------------------------------------------------------

/// Blue-noise thinning: repeatedly pick a random unprocessed point, retain it,
/// and delete every other remaining point within its radius. For any retained
/// pair p != q, |p - q| >= min(R(p), R(q)). Returns ascending indices.
std::vector<uint32_t> poisson_disk_downsample(const std::vector<Vec2>& points,
                                              const std::vector<double>& radii, uint64_t seed);

std::vector<uint32_t> poisson_disk_downsample(const std::vector<Vec2>& points, double radius,
                                              uint64_t seed);

/// Simple polygon with a node-type label per edge (edge i joins vertex i to
/// vertex i+1 mod n).
struct DomainSpec {
    std::vector<Vec2> polygon;
    std::vector<NodeType> edge_types;

    static DomainSpec unit_square();            // walls, top edge outlet
    static DomainSpec rectangle(double w, double h);
};

struct DomainMesh {
    MeshFrame frame;       // geometry + types; fields zeroed (N x 2, N x 1)
    uint32_t num_boundary = 0;  // boundary nodes come first
    double interior_radius = 0;  // disk radius used for interior sampling
};

/// Boundary nodes (polygon vertices + densified edges, typed per edge label)
/// plus interior points from uniform oversampling thinned by
/// poisson_disk_downsample, radius tuned to hit ~n_points total; edges from
/// delaunay_triangulate. Throws DataError when the budget is unachievable
/// (message carries the achieved count).
DomainMesh sample_domain_mesh(const DomainSpec& domain, int n_points, uint64_t seed);

// --- drone dynamics and tracking ---------------------------------------------------

struct DroneParams {
    double k1 = 1e-4;
    double k2 = 5e-5;
    double k3 = 5.5e-3;
    double gravity = 9.81;

    double hover_speed() const;  // Omega* = sqrt(g / (2 k1))
};

struct DroneState {
    Vec2 position = Vec2::Zero();
    double theta = 0;  // rad
    Vec2 velocity = Vec2::Zero();
    double theta_dot = 0;
    double rotor[2] = {0, 0};  // last applied rotor speeds, rad/s, >= 0
};

/// One RK4 step of the planar two-rotor ODE with commands held constant:
///   x'' = -k1 (O1^2 + O2^2) sin(theta) + k2 (O1 + O2) x'
///   y'' =  k1 (O1^2 + O2^2) cos(theta) - g + k2 (O1 + O2) y'
///   theta'' = k3 (O2^2 - O1^2)
DroneState drone_step(const DroneState& state, double omega1, double omega2, double dt,
                      const DroneParams& params);

struct TrackingOptions {
    int horizon = 20;                      // receding-horizon length, steps
    Eigen::Matrix<double, 6, 1> state_weights{10, 10, 1, 1, 1, 1};  // x, y, theta, vx, vy, w
    double command_weight = 1e-4;
    double divergence_bound = 1e3;  // abort when |position| exceeds this
};

struct TrackResult {
    std::vector<DroneState> states;           // length = path length (includes start)
    std::vector<std::array<double, 2>> commands;  // length = path length - 1
};

/// Receding-horizon tracking of a dt-sampled 2D reference path: the ODE is
/// linearized at hover and a finite-horizon linear-quadratic tracking problem
/// is solved each step; the first command is applied to the nonlinear model
/// (rotor speeds clamped >= 0). Throws NumericError on divergence.
TrackResult track_trajectory(const std::vector<Vec2>& reference, double dt,
                             const DroneParams& params, const TrackingOptions& opts = {});

// --- dataset generation ---------------------------------------------------------------

enum class FlowFamily { TaylorGreen, VortexSystem, RotorWake };

std::string to_string(FlowFamily family);
FlowFamily flow_family_from_string(const std::string& s);

struct GenConfig {
    FlowFamily family = FlowFamily::TaylorGreen;
    int n_traj = 2;
    int steps = 10;
    int nodes = 50;
    double dt = 0.05;
    uint64_t seed = 0;
};

/// Writes `n_traj` trajectories plus manifest.json under `out_dir` (created
/// if missing), fields evaluated analytically at every node and frame; split
/// assignment 80/10/10 by trajectory index. Deterministic per seed.
Manifest generate_dataset(const GenConfig& cfg, const std::string& out_dir);

}  // namespace flowcast
