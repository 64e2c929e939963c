#include "flowcast/metrics.hpp"

#include "flowcast/binio.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace flowcast {

int k_number(const Eigen::VectorXd& weights, double threshold) {
    const double sum = weights.sum();
    if (std::abs(sum - 1.0) > 1e-6)
        throw DataError("k_number: weights sum to " + std::to_string(sum) + ", expected 1");
    if ((weights.array() < -1e-12).any())
        throw DataError("k_number: negative attention weight");

    std::vector<double> sorted(weights.data(), weights.data() + weights.size());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double acc = 0;
    for (size_t i = 0; i < sorted.size(); ++i) {
        acc += sorted[i];
        if (acc >= threshold - 1e-9) return static_cast<int>(i) + 1;
    }
    return static_cast<int>(sorted.size());
}

std::vector<std::vector<std::vector<int>>> attention_summary(const AttentionRecord& record,
                                                             double threshold) {
    std::vector<std::vector<std::vector<int>>> out;
    for (const auto& block : record.blocks) {
        out.emplace_back();
        for (const auto& head : block) {
            std::vector<int> ks(static_cast<size_t>(head.rows()));
            for (Eigen::Index r = 0; r < head.rows(); ++r)
                ks[static_cast<size_t>(r)] = k_number(head.row(r).transpose(), threshold);
            out.back().push_back(std::move(ks));
        }
    }
    return out;
}

namespace {

void check_aligned(const std::vector<const MeshFrame*>& predicted,
                   const std::vector<const MeshFrame*>& truth) {
    if (predicted.size() != truth.size())
        throw DataError("metrics: prediction and truth lengths differ");
    for (size_t t = 0; t < predicted.size(); ++t)
        if (predicted[t]->num_nodes() != truth[t]->num_nodes() ||
            predicted[t]->pressure_channels() != truth[t]->pressure_channels())
            throw DataError("metrics: node/channel mismatch at step " + std::to_string(t));
}

void check_horizons(const std::vector<int>& horizons, size_t steps) {
    if (horizons.empty()) throw DataError("metrics: no horizons requested");
    for (size_t i = 0; i < horizons.size(); ++i) {
        if (horizons[i] < 1 || static_cast<size_t>(horizons[i]) > steps)
            throw DataError("metrics: horizon " + std::to_string(horizons[i]) +
                            " outside available " + std::to_string(steps) + " steps");
        if (i > 0 && horizons[i] <= horizons[i - 1])
            throw DataError("metrics: horizons must be strictly increasing");
    }
}

double rms(const MatrixXd& diff) { return std::sqrt(diff.array().square().mean()); }

std::vector<double> prefix_means(const std::vector<double>& per_step,
                                 const std::vector<int>& horizons) {
    std::vector<double> out;
    double acc = 0;
    size_t t = 0;
    for (const int h : horizons) {
        while (t < static_cast<size_t>(h)) acc += per_step[t++];
        out.push_back(acc / static_cast<double>(h));
    }
    return out;
}

}  // namespace

std::vector<double> per_step_n_errors(const std::vector<const MeshFrame*>& predicted,
                                      const std::vector<const MeshFrame*>& truth,
                                      const NormStats& stats) {
    check_aligned(predicted, truth);
    std::vector<double> out;
    out.reserve(predicted.size());
    for (size_t t = 0; t < predicted.size(); ++t) {
        const double ev = rms(predicted[t]->velocity - truth[t]->velocity) / stats.v_std;
        const double ep = rms(predicted[t]->pressure - truth[t]->pressure) / stats.p_std;
        out.push_back(ev + ep);
    }
    return out;
}

std::vector<double> n_rmse(const std::vector<const MeshFrame*>& predicted,
                           const std::vector<const MeshFrame*>& truth, const NormStats& stats,
                           const std::vector<int>& horizons) {
    check_horizons(horizons, predicted.size());
    return prefix_means(per_step_n_errors(predicted, truth, stats), horizons);
}

FieldRmse rmse_fields(const std::vector<const MeshFrame*>& predicted,
                      const std::vector<const MeshFrame*>& truth,
                      const std::vector<int>& horizons) {
    check_aligned(predicted, truth);
    check_horizons(horizons, predicted.size());
    std::vector<double> ev, ep;
    for (size_t t = 0; t < predicted.size(); ++t) {
        ev.push_back(rms(predicted[t]->velocity - truth[t]->velocity));
        ep.push_back(rms(predicted[t]->pressure - truth[t]->pressure));
    }
    return {prefix_means(ev, horizons), prefix_means(ep, horizons)};
}

std::vector<MeshFrame> persistence_forecast(const MeshFrame& frame,
                                            const std::vector<const MeshFrame*>& future_geometry,
                                            int horizon) {
    if (horizon < 1) throw DataError("persistence_forecast: horizon must be >= 1");
    if (static_cast<int>(future_geometry.size()) < horizon)
        throw DataError("persistence_forecast: not enough future geometries");

    std::vector<MeshFrame> out;
    const MeshFrame* current = &frame;
    for (int h = 0; h < horizon; ++h) {
        const MeshFrame& geom = *future_geometry[static_cast<size_t>(h)];
        MeshFrame next = geom;
        const auto map = nearest_node_map(current->positions, geom.positions);
        for (Eigen::Index i = 0; i < next.positions.rows(); ++i) {
            next.velocity.row(i) = current->velocity.row(map[static_cast<size_t>(i)]);
            next.pressure.row(i) = current->pressure.row(map[static_cast<size_t>(i)]);
        }
        out.push_back(std::move(next));
        current = &out.back();
    }
    return out;
}

// --- dataset-level evaluation -----------------------------------------------------

template <typename T>
EvalReport evaluate(const Model<T>& model, const std::vector<EvalItem>& items,
                    const EvalOptions& opts) {
    if (items.empty()) throw DataError("evaluate: no trajectories");
    const int max_h = *std::max_element(opts.horizons.begin(), opts.horizons.end());
    check_horizons(opts.horizons, static_cast<size_t>(max_h));

    std::vector<double> model_err(static_cast<size_t>(max_h), 0.0);
    std::vector<double> pers_err(static_cast<size_t>(max_h), 0.0);
    std::vector<double> model_ev(static_cast<size_t>(max_h), 0.0), model_ep(static_cast<size_t>(max_h), 0.0);
    std::vector<double> pers_ev(static_cast<size_t>(max_h), 0.0), pers_ep(static_cast<size_t>(max_h), 0.0);

    for (const auto& item : items) {
        const Trajectory& traj = *item.trajectory;
        const auto need = static_cast<size_t>(opts.start_frame + max_h + 1);
        if (traj.frames.size() < need)
            throw DataError("evaluate: trajectory too short (" + std::to_string(traj.frames.size()) +
                            " frames, need " + std::to_string(need) + ")");

        // Optionally downsample every frame with the same seed, so static
        // meshes stay static across time.
        std::vector<MeshFrame> downsampled;
        const bool ds = opts.downsample > 0;
        if (ds) {
            downsampled.reserve(traj.frames.size());
            for (const auto& f : traj.frames)
                downsampled.push_back(downsample_frame(f, opts.downsample, opts.downsample_seed));
        }
        auto frame_at = [&](size_t i) -> const MeshFrame& {
            return ds ? downsampled[i] : traj.frames[i];
        };

        const auto s0 = static_cast<size_t>(opts.start_frame);
        std::vector<const MeshFrame*> geometry, truth;
        for (int h = 1; h <= max_h; ++h) {
            geometry.push_back(&frame_at(s0 + static_cast<size_t>(h)));
            truth.push_back(&frame_at(s0 + static_cast<size_t>(h)));
        }

        const std::vector<const ClusterAssignment*>* assignments_ptr = nullptr;
        std::vector<const ClusterAssignment*> assignments;
        if (item.clusters && !ds) {
            for (size_t i = s0; i <= s0 + static_cast<size_t>(max_h); ++i)
                assignments.push_back(&(*item.clusters)[i]);
            assignments_ptr = &assignments;
        }

        auto predicted = model.rollout(frame_at(s0), geometry, max_h, opts.order_seed,
                                       assignments_ptr, opts.cluster_seed);
        auto persisted = persistence_forecast(frame_at(s0), geometry, max_h);

        std::vector<const MeshFrame*> pred_ptr, pers_ptr;
        for (const auto& f : predicted) pred_ptr.push_back(&f);
        for (const auto& f : persisted) pers_ptr.push_back(&f);

        const auto em = per_step_n_errors(pred_ptr, truth, model.stats);
        const auto ep0 = per_step_n_errors(pers_ptr, truth, model.stats);
        for (int t = 0; t < max_h; ++t) {
            model_err[static_cast<size_t>(t)] += em[static_cast<size_t>(t)];
            pers_err[static_cast<size_t>(t)] += ep0[static_cast<size_t>(t)];
            model_ev[static_cast<size_t>(t)] +=
                rms(predicted[static_cast<size_t>(t)].velocity - truth[static_cast<size_t>(t)]->velocity);
            model_ep[static_cast<size_t>(t)] +=
                rms(predicted[static_cast<size_t>(t)].pressure - truth[static_cast<size_t>(t)]->pressure);
            pers_ev[static_cast<size_t>(t)] +=
                rms(persisted[static_cast<size_t>(t)].velocity - truth[static_cast<size_t>(t)]->velocity);
            pers_ep[static_cast<size_t>(t)] +=
                rms(persisted[static_cast<size_t>(t)].pressure - truth[static_cast<size_t>(t)]->pressure);
        }
    }

    const auto n = static_cast<double>(items.size());
    auto finish = [&](std::vector<double> acc) {
        for (auto& v : acc) v /= n;
        return prefix_means(acc, opts.horizons);
    };

    EvalReport report;
    report.horizons = opts.horizons;
    report.model = {finish(model_err), finish(model_ev), finish(model_ep)};
    report.persistence = {finish(pers_err), finish(pers_ev), finish(pers_ep)};
    report.num_trajectories = static_cast<int>(items.size());
    std::ostringstream digest;
    digest << "hidden=" << model.config.hidden << ",L=" << model.config.gnn_layers
           << ",W=" << model.config.token_width << ",M=" << model.config.attn_blocks
           << ",heads=" << model.config.heads << ",s=" << model.config.cluster_size
           << ",mode=" << to_string(model.config.attention_mode)
           << ",order_seed=" << opts.order_seed;
    if (opts.downsample > 0) digest << ",downsample=" << opts.downsample;
    report.config_digest = digest.str();
    return report;
}

template EvalReport evaluate<float>(const Model<float>&, const std::vector<EvalItem>&,
                                    const EvalOptions&);
template EvalReport evaluate<double>(const Model<double>&, const std::vector<EvalItem>&,
                                     const EvalOptions&);

nlohmann::json eval_report_to_json(const EvalReport& report) {
    auto series = [](const EvalSeries& s) {
        return nlohmann::json{{"nrmse", s.nrmse}, {"rmse_v", s.rmse_v}, {"rmse_p", s.rmse_p}};
    };
    return {{"horizons", report.horizons},
            {"model", series(report.model)},
            {"persistence", series(report.persistence)},
            {"num_trajectories", report.num_trajectories},
            {"config_digest", report.config_digest}};
}

void save_eval_report(const EvalReport& report, const std::string& path) {
    auto os = open_out(path);
    os << eval_report_to_json(report).dump(2) << "\n";
}

void save_eval_csv(const EvalReport& report, const std::string& path) {
    auto os = open_out(path);
    os << "horizon,model_nrmse,model_rmse_v,model_rmse_p,"
          "persistence_nrmse,persistence_rmse_v,persistence_rmse_p\n";
    for (size_t i = 0; i < report.horizons.size(); ++i) {
        os << report.horizons[i] << "," << report.model.nrmse[i] << "," << report.model.rmse_v[i]
           << "," << report.model.rmse_p[i] << "," << report.persistence.nrmse[i] << ","
           << report.persistence.rmse_v[i] << "," << report.persistence.rmse_p[i] << "\n";
    }
}

}  // namespace flowcast
