#pragma once

#include "flowcast/model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace flowcast {

struct TrainConfig {
    int64_t steps = 10000;
    double learning_rate = 1e-4;
    int horizon = 8;     // H, supervision horizon
    double alpha = 0.1;  // pressure weight in the loss
    uint64_t seed = 0;
    std::string precision = "f32";  // "f32" or "f64"
    double grad_clip = 0.0;         // global-norm clip, disabled when <= 0
    int64_t log_every = 100;
    int64_t checkpoint_every = 0;  // periodic checkpoint interval, 0 = final only
    bool deterministic = false;    // single-threaded, bit-reproducible

    void validate() const;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
ModelConfig load_model_config(const std::string& path);
TrainConfig load_train_config(const std::string& path);

bool operator==(const ModelConfig& a, const ModelConfig& b);

/// Multi-step training loss on fields in normalized units: per step the MSE
/// over nodes and components, velocity plus alpha * pressure, summed over the
/// horizon.
struct LossBreakdown {
    double total = 0;
    double velocity = 0;
    double pressure = 0;
};

LossBreakdown multi_step_loss(const std::vector<const MeshFrame*>& predicted,
                              const std::vector<const MeshFrame*>& target, double alpha);

// --- checkpoints -------------------------------------------------------------
//
// "MTCK", u32 version=1, u32 header_len, JSON header (configs, stats, step,
// rng state, tensor directory with name/shape/dtype/offset), then raw
// little-endian f64 tensor data. Parameters first in visit order, then the
// Adam first and second moments.

struct Checkpoint {
    ModelConfig model_config;
    TrainConfig train_config;
    NormStats stats;
    int64_t step = 0;
    std::array<uint64_t, 4> rng_state{};
    ModelParams<double> params;
    std::vector<ad::Mat<double>> adam_m, adam_v;  // visit order; empty before training
};

void save_checkpoint(Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ckpt) {
    auto params = const_cast<Checkpoint&>(ckpt).params.template cast<T>(ckpt.model_config);
    return Model<T>(ckpt.model_config, std::move(params), ckpt.stats);
}

// --- training ------------------------------------------------------------------

/// Train-split view: one cluster-assignment sequence per trajectory.
struct TrainData {
    std::vector<const Trajectory*> trajectories;
    std::vector<const std::vector<ClusterAssignment>*> clusters;
};

struct TrainLogEntry {
    int64_t step = 0;
    double loss = 0, loss_v = 0, loss_p = 0;
    double wall_ms = 0;
};
using TrainLogSink = std::function<void(const TrainLogEntry&)>;

/// Runs the optimizer loop (Adam, beta1=0.9, beta2=0.999, eps=1e-8; one
/// trajectory window per step, full autoregressive unroll over the horizon
/// with gradients through every step). Resumes from `resume` when given.
/// Periodic checkpoints go to `checkpoint_path` when non-empty.
Checkpoint train(const TrainData& data, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                 const NormStats& stats, const std::optional<Checkpoint>& resume = std::nullopt,
                 TrainLogSink log = nullptr, const std::string& checkpoint_path = {});

// --- gradient verification ------------------------------------------------------

struct FdCheckReport {
    double max_rel_error = 0;
    size_t num_checked = 0;
    std::string worst_tensor;
    double worst_analytic = 0;
    double worst_numeric = 0;
};

/// Compares analytic gradients of the multi-step loss against central finite
/// differences for `num_samples` randomly chosen parameters (f64). The
/// relative error denominator is max(|analytic|, |numeric|, 1e-8).
FdCheckReport finite_difference_check(ModelParams<double>& params, const ModelConfig& cfg,
                                      const Trajectory& example,
                                      const std::vector<ClusterAssignment>& clusters,
                                      const NormStats& stats, int horizon, double alpha,
                                      int num_samples, double eps, uint64_t sample_seed,
                                      uint64_t order_seed);

/// The standard small verification problem: a 12-node triangulated mesh with
/// random fields over 3 frames, clustered into 3 clusters.
struct GradcheckSetup {
    Trajectory trajectory;
    std::vector<ClusterAssignment> clusters;
    NormStats stats;
};
GradcheckSetup make_gradcheck_setup(uint64_t seed, int pressure_channels = 1);

/// Multi-step loss of one trajectory window under the current parameters
/// (normalized units, no gradients). Used by tests and the acceptance suite
/// to measure training progress on fixed windows.
double eval_window_loss(ModelParams<double>& params, const ModelConfig& cfg,
                        const Trajectory& traj, const std::vector<ClusterAssignment>& clusters,
                        const NormStats& stats, size_t start, int horizon, double alpha,
                        uint64_t order_seed);

}  // namespace flowcast
