#include "flowcast/datagen.hpp"
#include "flowcast/dataset.hpp"
#include "flowcast/metrics.hpp"
#include "flowcast/model.hpp"
#include "flowcast/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fc = flowcast;
namespace fs = std::filesystem;

namespace {

std::vector<int> parse_horizons(const std::string& csv) {
    std::vector<int> out;
    size_t at = 0;
    while (at < csv.size()) {
        const size_t comma = csv.find(',', at);
        const std::string tok = csv.substr(at, comma == std::string::npos ? comma : comma - at);
        out.push_back(std::stoi(tok));
        if (comma == std::string::npos) break;
        at = comma + 1;
    }
    if (out.empty()) throw fc::DataError("no horizons given");
    return out;
}

fc::NormStats load_stats_or_fail(const std::string& data_dir, const std::string& override_path) {
    const std::string path = override_path.empty() ? fc::stats_path(data_dir) : override_path;
    if (!fs::exists(path))
        throw fc::DataError(path + " not found; run `flowcast stats --data " + data_dir +
                            "` first");
    return fc::load_norm_stats(path);
}

struct GenArgs {
    std::string family = "taylor-green", out;
    int n_traj = 2, steps = 10, nodes = 50;
    double dt = 0.05;
    uint64_t seed = 0;
};

struct ClusterArgs {
    std::string data;
    int size = 10;
    uint64_t seed = 0;
};

struct StatsArgs {
    std::string data, out;
};

struct TrainArgs {
    std::string data, model_config, train_config, out = "model.ckpt", resume, stats, log;
    bool deterministic = false;
    uint64_t cluster_seed = 0;
    // per-field overrides over the config files
    int64_t steps = -1;
    double lr = -1, alpha = -1;
    int horizon = -1;
    int64_t seed = -1;
    std::string precision, mode;
    int cluster_size = -1;
};

struct EvalArgs {
    std::string data, ckpt, horizons = "1,10", out = "eval.json", csv, ablation,
                split = "test", stats;
    double downsample = 0;
    uint64_t downsample_seed = 0, order_seed = 0, cluster_seed = 0;
    int start = 0;
};

struct RolloutArgs {
    std::string ckpt, traj, out = "rollout.bin";
    int steps = 10, start = 0;
    uint64_t order_seed = 0, cluster_seed = 0;
};

struct AttnArgs {
    std::string ckpt, traj, out = "attention.json", images;
    int step = 0;
    uint64_t order_seed = 0, cluster_seed = 0;
};

struct GradcheckArgs {
    std::string model_config;
    uint64_t seed = 0;
    int samples = 250, horizon = 2;
    double eps = 1e-5, tolerance = 1e-4;
};

int run_gen(const GenArgs& a) {
    fc::GenConfig cfg;
    cfg.family = fc::flow_family_from_string(a.family);
    cfg.n_traj = a.n_traj;
    cfg.steps = a.steps;
    cfg.nodes = a.nodes;
    cfg.dt = a.dt;
    cfg.seed = a.seed;
    fs::create_directories(a.out);
    auto manifest = fc::generate_dataset(cfg, a.out);
    std::cerr << "wrote " << manifest.all_ids().size() << " trajectories to " << a.out << " ("
              << manifest.train.size() << " train / " << manifest.valid.size() << " valid / "
              << manifest.test.size() << " test)\n";
    return 0;
}

int run_cluster(const ClusterArgs& a) {
    auto manifest = fc::load_manifest(a.data);
    for (const auto& id : manifest.all_ids()) {
        const auto path = fc::trajectory_path(a.data, id);
        auto traj = fc::load_trajectory(path);
        const auto cache = fc::cluster_cache_path(path, static_cast<uint32_t>(a.size), a.seed);
        fc::precompute_clusters(traj, static_cast<uint32_t>(a.size), a.seed, cache);
        std::cerr << id << ": " << traj.frames.size() << " frames clustered (s=" << a.size
                  << ") -> " << cache << "\n";
    }
    return 0;
}

int run_stats(const StatsArgs& a) {
    auto manifest = fc::load_manifest(a.data);
    if (manifest.train.empty()) throw fc::DataError("manifest has an empty train split");
    std::vector<fc::Trajectory> trajs;
    std::vector<const fc::Trajectory*> ptrs;
    for (const auto& id : manifest.train)
        trajs.push_back(fc::load_trajectory(fc::trajectory_path(a.data, id)));
    for (const auto& t : trajs) ptrs.push_back(&t);
    fc::NormStatsReport report;
    auto stats = fc::compute_norm_stats(ptrs, 1e-8, &report);
    if (report.v_clamped) std::cerr << "warning: zero-variance velocity, std clamped to floor\n";
    if (report.p_clamped) std::cerr << "warning: zero-variance pressure, std clamped to floor\n";
    const std::string out = a.out.empty() ? fc::stats_path(a.data) : a.out;
    fc::save_norm_stats(stats, out);
    std::cerr << "stats over " << trajs.size() << " train trajectories -> " << out << "\n";
    return 0;
}

int run_train(const TrainArgs& a) {
    fc::ModelConfig mcfg;
    if (!a.model_config.empty()) mcfg = fc::load_model_config(a.model_config);
    fc::TrainConfig tcfg;
    if (!a.train_config.empty()) tcfg = fc::load_train_config(a.train_config);

    if (a.steps >= 0) tcfg.steps = a.steps;
    if (a.lr > 0) tcfg.learning_rate = a.lr;
    if (a.alpha >= 0) tcfg.alpha = a.alpha;
    if (a.horizon > 0) tcfg.horizon = a.horizon;
    if (a.seed >= 0) tcfg.seed = static_cast<uint64_t>(a.seed);
    if (!a.precision.empty()) tcfg.precision = a.precision;
    if (a.deterministic) tcfg.deterministic = true;
    if (!a.mode.empty()) mcfg.attention_mode = fc::attention_mode_from_string(a.mode);
    if (a.cluster_size > 0) mcfg.cluster_size = a.cluster_size;

    auto manifest = fc::load_manifest(a.data);
    mcfg.pressure_channels = static_cast<int>(manifest.pressure_channels);
    mcfg.validate();
    tcfg.validate();
    auto split = fc::load_split(a.data, manifest.train, true,
                                static_cast<uint32_t>(mcfg.cluster_size), a.cluster_seed);
    auto stats = load_stats_or_fail(a.data, a.stats);

    fc::TrainData data;
    for (size_t i = 0; i < split.trajectories.size(); ++i) {
        data.trajectories.push_back(&split.trajectories[i]);
        data.clusters.push_back(&split.clusters[i]);
    }

    std::optional<fc::Checkpoint> resume;
    if (!a.resume.empty()) resume = fc::load_checkpoint(a.resume);

    std::ofstream log_stream;
    if (!a.log.empty()) {
        log_stream.open(a.log, std::ios::app);
        if (!log_stream) throw fc::FormatError("cannot open log file " + a.log);
    }
    auto sink = [&](const fc::TrainLogEntry& e) {
        if (log_stream) {
            nlohmann::json j{{"step", e.step},
                             {"loss", e.loss},
                             {"loss_v", e.loss_v},
                             {"loss_p", e.loss_p},
                             {"wall_ms", e.wall_ms}};
            log_stream << j.dump() << "\n";
            log_stream.flush();
        }
        std::cerr << "step " << e.step << "  loss " << e.loss << "  (v " << e.loss_v << ", p "
                  << e.loss_p << ")  " << e.wall_ms << " ms\n";
    };

    auto ckpt = fc::train(data, mcfg, tcfg, stats, resume, sink, a.out);
    std::cerr << "checkpoint at step " << ckpt.step << " -> " << a.out << "\n";
    return 0;
}

int run_eval(const EvalArgs& a) {
    auto ckpt = fc::load_checkpoint(a.ckpt);
    if (!a.ablation.empty())
        ckpt.model_config.attention_mode = fc::attention_mode_from_string(a.ablation);
    auto model = fc::model_from_checkpoint<double>(ckpt);

    auto manifest = fc::load_manifest(a.data);
    std::vector<std::string> ids;
    if (a.split == "heldout") {
        ids = manifest.valid;
        ids.insert(ids.end(), manifest.test.begin(), manifest.test.end());
    } else {
        ids = manifest.split(a.split);
    }
    if (ids.empty()) throw fc::DataError("split \"" + a.split + "\" is empty");

    // Cluster caches only apply at native resolution; fall back to on-the-fly
    // clustering when caches are absent or the meshes get downsampled.
    fc::LoadedSplit split;
    bool with_clusters = a.downsample <= 0;
    if (with_clusters) {
        const auto probe = fc::cluster_cache_path(fc::trajectory_path(a.data, ids.front()),
                                                  static_cast<uint32_t>(model.config.cluster_size),
                                                  a.cluster_seed);
        with_clusters = fs::exists(probe);
    }
    split = fc::load_split(a.data, ids, with_clusters,
                           static_cast<uint32_t>(model.config.cluster_size), a.cluster_seed);

    std::vector<fc::EvalItem> items;
    for (size_t i = 0; i < split.trajectories.size(); ++i)
        items.push_back({&split.trajectories[i],
                         split.clusters.empty() ? nullptr : &split.clusters[i]});

    fc::EvalOptions opts;
    opts.horizons = parse_horizons(a.horizons);
    opts.start_frame = a.start;
    opts.order_seed = a.order_seed;
    opts.downsample = a.downsample;
    opts.downsample_seed = a.downsample_seed;
    opts.cluster_seed = a.cluster_seed;

    auto report = fc::evaluate(model, items, opts);
    fc::save_eval_report(report, a.out);
    if (!a.csv.empty()) fc::save_eval_csv(report, a.csv);
    for (size_t i = 0; i < report.horizons.size(); ++i)
        std::cerr << "+" << report.horizons[i] << ": model N-RMSE " << report.model.nrmse[i]
                  << ", persistence " << report.persistence.nrmse[i] << "\n";
    std::cerr << "report -> " << a.out << "\n";
    return 0;
}

int run_rollout(const RolloutArgs& a) {
    auto ckpt = fc::load_checkpoint(a.ckpt);
    auto model = fc::model_from_checkpoint<double>(ckpt);
    auto traj = fc::load_trajectory(a.traj);

    const auto need = static_cast<size_t>(a.start + a.steps + 1);
    if (traj.frames.size() < need)
        throw fc::DataError("trajectory has " + std::to_string(traj.frames.size()) +
                            " frames, need " + std::to_string(need) + " for start " +
                            std::to_string(a.start) + " and " + std::to_string(a.steps) +
                            " steps");

    std::vector<const fc::MeshFrame*> geometry;
    for (int h = 1; h <= a.steps; ++h)
        geometry.push_back(&traj.frames[static_cast<size_t>(a.start + h)]);

    auto frames = model.rollout(traj.frames[static_cast<size_t>(a.start)], geometry, a.steps,
                                a.order_seed, nullptr, a.cluster_seed);
    fc::Trajectory out;
    out.frames = std::move(frames);
    out.dt = traj.dt;
    out.geometry_tag = traj.geometry_tag + "/rollout";
    out.seed = traj.seed;
    fc::save_trajectory(out, a.out);
    std::cerr << a.steps << " predicted frames -> " << a.out << "\n";
    return 0;
}

void write_ppm_heatmap(const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw fc::FormatError("cannot open " + path);
    const int scale = std::max(1, 256 / static_cast<int>(m.rows()));
    const int w = static_cast<int>(m.cols()) * scale, h = static_cast<int>(m.rows()) * scale;
    os << "P6\n" << w << " " << h << "\n255\n";
    const double mx = std::max(m.maxCoeff(), 1e-12);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = m(y / scale, x / scale) / mx;
            // black -> red -> yellow ramp
            const auto r = static_cast<char>(255 * std::min(1.0, 2 * v));
            const auto g = static_cast<char>(255 * std::max(0.0, 2 * v - 1));
            os.put(r).put(g).put(0);
        }
    }
}

int run_attn(const AttnArgs& a) {
    auto ckpt = fc::load_checkpoint(a.ckpt);
    auto model = fc::model_from_checkpoint<double>(ckpt);
    auto traj = fc::load_trajectory(a.traj);
    if (a.step < 0 || static_cast<size_t>(a.step) >= traj.frames.size())
        throw fc::DataError("step " + std::to_string(a.step) + " outside trajectory with " +
                            std::to_string(traj.frames.size()) + " frames");

    const auto& frame = traj.frames[static_cast<size_t>(a.step)];
    auto asg = fc::same_size_kmeans(frame.positions,
                                    static_cast<uint32_t>(model.config.cluster_size),
                                    a.cluster_seed);
    auto geom = fc::make_cluster_geometry(frame.positions, asg, frame.edges);

    fc::AttentionRecord record;
    model.forward_step(frame, asg, geom, a.order_seed, &record);

    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& block : record.blocks) {
        nlohmann::json heads = nlohmann::json::array();
        for (const auto& head : block) {
            std::vector<double> row_major;
            row_major.reserve(static_cast<size_t>(head.size()));
            for (Eigen::Index r = 0; r < head.rows(); ++r)
                for (Eigen::Index c = 0; c < head.cols(); ++c) row_major.push_back(head(r, c));
            heads.push_back(row_major);
        }
        blocks.push_back({{"heads", heads}});
    }
    nlohmann::json bary = nlohmann::json::array();
    for (Eigen::Index k = 0; k < geom.barycenters.rows(); ++k)
        bary.push_back({geom.barycenters(k, 0), geom.barycenters(k, 1)});

    nlohmann::json j{{"step", a.step},
                     {"mode", fc::to_string(model.config.attention_mode)},
                     {"blocks", blocks},
                     {"barycenters", bary}};
    std::ofstream os(a.out);
    if (!os) throw fc::FormatError("cannot open " + a.out);
    os << j.dump(2) << "\n";

    if (!a.images.empty()) {
        fs::create_directories(a.images);
        for (size_t b = 0; b < record.blocks.size(); ++b)
            for (size_t h = 0; h < record.blocks[b].size(); ++h)
                write_ppm_heatmap(record.blocks[b][h],
                                  a.images + "/block" + std::to_string(b) + "_head" +
                                      std::to_string(h) + ".ppm");
        std::cerr << "heatmaps -> " << a.images << "\n";
    }
    std::cerr << record.blocks.size() << " blocks -> " << a.out << "\n";
    return 0;
}

int run_gradcheck(const GradcheckArgs& a) {
    fc::ModelConfig cfg;
    if (a.model_config.empty()) {
        cfg.hidden = 8;
        cfg.token_width = 16;
        cfg.heads = 1;
        cfg.gnn_layers = 1;
        cfg.attn_blocks = 1;
        cfg.cluster_size = 4;
    } else {
        cfg = fc::load_model_config(a.model_config);
    }

    auto setup = fc::make_gradcheck_setup(a.seed, cfg.pressure_channels);
    auto params = fc::ModelParams<double>::init(cfg, fc::Rng::mix(a.seed, 1));
    // A live head so every branch carries gradient.
    fc::Rng rng(fc::Rng::mix(a.seed, 2));
    fc::nn::init_linear(params.head.layers.back(), rng);

    auto report = fc::finite_difference_check(params, cfg, setup.trajectory, setup.clusters,
                                              setup.stats, a.horizon, 0.1, a.samples, a.eps,
                                              fc::Rng::mix(a.seed, 3), fc::Rng::mix(a.seed, 4));
    std::cout << "max relative error " << report.max_rel_error << " over " << report.num_checked
              << " parameters (worst: " << report.worst_tensor << ", analytic "
              << report.worst_analytic << ", numeric " << report.worst_numeric << ")\n";
    if (report.max_rel_error < a.tolerance) return 0;
    std::cerr << "error: gradient check failed: " << report.max_rel_error
              << " >= " << a.tolerance << "\n";
    return 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mesh transformer for autoregressive forecasting on dynamic triangle meshes"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* cgen = app.add_subcommand("gen", "generate a synthetic dataset");
    cgen->add_option("--family", gen.family, "taylor-green | vortex | rotor-wake")
        ->check(CLI::IsMember({"taylor-green", "vortex", "rotor-wake"}));
    cgen->add_option("--out", gen.out, "output dataset directory")->required();
    cgen->add_option("--n-traj", gen.n_traj, "number of trajectories");
    cgen->add_option("--steps", gen.steps, "frames per trajectory");
    cgen->add_option("--nodes", gen.nodes, "approximate mesh size");
    cgen->add_option("--dt", gen.dt, "time step in seconds");
    cgen->add_option("--seed", gen.seed, "generation seed");

    ClusterArgs cluster;
    auto* ccluster = app.add_subcommand("cluster", "precompute same-size k-means caches");
    ccluster->add_option("--data", cluster.data, "dataset directory")->required();
    ccluster->add_option("--size", cluster.size, "nodes per cluster");
    ccluster->add_option("--seed", cluster.seed, "clustering seed");

    StatsArgs stats;
    auto* cstats = app.add_subcommand("stats", "compute train-split normalization statistics");
    cstats->add_option("--data", stats.data, "dataset directory")->required();
    cstats->add_option("--out", stats.out, "output json (default <data>/stats.json)");

    TrainArgs train;
    auto* ctrain = app.add_subcommand("train", "train the mesh transformer");
    ctrain->add_option("--data", train.data, "dataset directory")->required();
    ctrain->add_option("--model-config", train.model_config, "model config json");
    ctrain->add_option("--train-config", train.train_config, "train config json");
    ctrain->add_option("--out", train.out, "checkpoint output path");
    ctrain->add_option("--resume", train.resume, "resume from checkpoint");
    ctrain->add_option("--stats", train.stats, "normalization stats json");
    ctrain->add_option("--log", train.log, "JSON-lines training log");
    ctrain->add_option("--cluster-seed", train.cluster_seed, "cluster cache seed");
    ctrain->add_flag("--deterministic", train.deterministic, "single-threaded, bit-reproducible");
    ctrain->add_option("--steps", train.steps, "override: optimizer steps");
    ctrain->add_option("--lr", train.lr, "override: learning rate");
    ctrain->add_option("--alpha", train.alpha, "override: pressure weight");
    ctrain->add_option("--horizon", train.horizon, "override: supervision horizon");
    ctrain->add_option("--seed", train.seed, "override: training seed");
    ctrain->add_option("--precision", train.precision, "override: f32 | f64")
        ->check(CLI::IsMember({"", "f32", "f64"}));
    ctrain->add_option("--mode", train.mode, "override: attention mode");
    ctrain->add_option("--cluster-size", train.cluster_size, "override: cluster size");

    EvalArgs eval;
    auto* ceval = app.add_subcommand("eval", "evaluate a checkpoint against a dataset split");
    ceval->add_option("--data", eval.data, "dataset directory")->required();
    ceval->add_option("--ckpt", eval.ckpt, "checkpoint path")->required();
    ceval->add_option("--horizons", eval.horizons, "comma-separated horizons, e.g. 1,10");
    ceval->add_option("--out", eval.out, "report json path");
    ceval->add_option("--csv", eval.csv, "also export per-horizon curves as csv");
    ceval->add_option("--ablation", eval.ablation, "evaluate under a different attention mode")
        ->check(CLI::IsMember({"full", "one-ring", "average", "gnn-coarse"}));
    ceval->add_option("--downsample", eval.downsample, "keep fraction for mesh downsampling");
    ceval->add_option("--downsample-seed", eval.downsample_seed, "downsampling seed");
    ceval->add_option("--split", eval.split, "train | valid | test | heldout")
        ->check(CLI::IsMember({"train", "valid", "test", "heldout"}));
    ceval->add_option("--start", eval.start, "start frame");
    ceval->add_option("--order-seed", eval.order_seed, "pooling order seed");
    ceval->add_option("--cluster-seed", eval.cluster_seed, "cluster cache seed");

    RolloutArgs rollout;
    auto* crollout = app.add_subcommand("rollout", "autoregressive forecast along a trajectory");
    crollout->add_option("--ckpt", rollout.ckpt, "checkpoint path")->required();
    crollout->add_option("--traj", rollout.traj, "trajectory file")->required();
    crollout->add_option("--steps", rollout.steps, "forecast horizon");
    crollout->add_option("--start", rollout.start, "start frame");
    crollout->add_option("--out", rollout.out, "output trajectory file");
    crollout->add_option("--order-seed", rollout.order_seed, "pooling order seed");
    crollout->add_option("--cluster-seed", rollout.cluster_seed, "clustering seed");

    AttnArgs attn;
    auto* cattn = app.add_subcommand("attn", "dump attention matrices for one step");
    cattn->add_option("--ckpt", attn.ckpt, "checkpoint path")->required();
    cattn->add_option("--traj", attn.traj, "trajectory file")->required();
    cattn->add_option("--step", attn.step, "frame index");
    cattn->add_option("--out", attn.out, "output json path");
    cattn->add_option("--images", attn.images, "also render per-head heatmaps here");
    cattn->add_option("--order-seed", attn.order_seed, "pooling order seed");
    cattn->add_option("--cluster-seed", attn.cluster_seed, "clustering seed");

    GradcheckArgs gradcheck;
    auto* cgrad = app.add_subcommand("gradcheck", "verify analytic gradients by finite differences");
    cgrad->add_option("--model-config", gradcheck.model_config,
                      "model config json (default: tiny verification config)");
    cgrad->add_option("--seed", gradcheck.seed, "setup seed");
    cgrad->add_option("--samples", gradcheck.samples, "parameters to sample");
    cgrad->add_option("--horizon", gradcheck.horizon, "unroll horizon");
    cgrad->add_option("--eps", gradcheck.eps, "finite-difference step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exits 0
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 1;
    }

    try {
        if (cgen->parsed()) return run_gen(gen);
        if (ccluster->parsed()) return run_cluster(cluster);
        if (cstats->parsed()) return run_stats(stats);
        if (ctrain->parsed()) return run_train(train);
        if (ceval->parsed()) return run_eval(eval);
        if (crollout->parsed()) return run_rollout(rollout);
        if (cattn->parsed()) return run_attn(attn);
        if (cgrad->parsed()) return run_gradcheck(gradcheck);
    } catch (const fc::FormatError& e) {
        std::cerr << "error: data: " << e.what() << "\n";
        return 2;
    } catch (const fc::DataError& e) {
        std::cerr << "error: data: " << e.what() << "\n";
        return 2;
    } catch (const fc::NumericError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
