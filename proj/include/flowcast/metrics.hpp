#pragma once

#include "flowcast/model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace flowcast {

/// Minimal number of largest entries of a probability vector whose sum
/// reaches `threshold`. Throws DataError unless the entries are nonnegative
/// and sum to 1 within 1e-6.
int k_number(const Eigen::VectorXd& weights, double threshold = 0.9);

/// k_number of every attention row, indexed [block][head][cluster].
std::vector<std::vector<std::vector<int>>> attention_summary(const AttentionRecord& record,
                                                             double threshold = 0.9);

/// Per-step normalized error: RMS(v - v_hat)/v_std + RMS(p - p_hat)/p_std,
/// RMS taken over nodes and components. `predicted[t]` is the forecast
/// aligned with `truth[t]`.
std::vector<double> per_step_n_errors(const std::vector<const MeshFrame*>& predicted,
                                      const std::vector<const MeshFrame*>& truth,
                                      const NormStats& stats);

/// N-RMSE at each requested horizon H: the mean of the per-step normalized
/// errors over steps 1..H.
std::vector<double> n_rmse(const std::vector<const MeshFrame*>& predicted,
                           const std::vector<const MeshFrame*>& truth, const NormStats& stats,
                           const std::vector<int>& horizons);

struct FieldRmse {
    std::vector<double> velocity;  // per horizon
    std::vector<double> pressure;
};

/// Unnormalized per-field RMS errors, averaged over steps 1..H per horizon.
FieldRmse rmse_fields(const std::vector<const MeshFrame*>& predicted,
                      const std::vector<const MeshFrame*>& truth,
                      const std::vector<int>& horizons);

/// Baseline that repeats the current fields, transferred across re-meshing by
/// the same nearest-node rule as rollout.
std::vector<MeshFrame> persistence_forecast(const MeshFrame& frame,
                                            const std::vector<const MeshFrame*>& future_geometry,
                                            int horizon);

// --- dataset-level evaluation ---------------------------------------------------

struct EvalSeries {
    std::vector<double> nrmse;   // per horizon
    std::vector<double> rmse_v;  // per horizon
    std::vector<double> rmse_p;
};

struct EvalReport {
    std::vector<int> horizons;
    EvalSeries model;
    EvalSeries persistence;
    int num_trajectories = 0;
    std::string config_digest;
};

struct EvalItem {
    const Trajectory* trajectory = nullptr;
    const std::vector<ClusterAssignment>* clusters = nullptr;  // optional cache
};

struct EvalOptions {
    std::vector<int> horizons{1, 10};
    int start_frame = 0;
    uint64_t order_seed = 0;
    double downsample = 0;  // keep fraction in (0,1]; 0 disables
    uint64_t downsample_seed = 0;
    uint64_t cluster_seed = 0;  // for frames without cached clusters
};

template <typename T>
EvalReport evaluate(const Model<T>& model, const std::vector<EvalItem>& items,
                    const EvalOptions& opts);

nlohmann::json eval_report_to_json(const EvalReport& report);
void save_eval_report(const EvalReport& report, const std::string& path);
void save_eval_csv(const EvalReport& report, const std::string& path);

}  // namespace flowcast
