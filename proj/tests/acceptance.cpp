// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion.
//
//   acceptance --group fast         criteria 1-4, 8-10, 12 (minutes)
//   acceptance --group experiments  criteria 5-7, 11 (training runs)
//   acceptance --group all
//   acceptance --criterion N

#include "flowcast/datagen.hpp"
#include "flowcast/delaunay.hpp"
#include "flowcast/dataset.hpp"
#include "flowcast/geometry.hpp"
#include "flowcast/metrics.hpp"
#include "flowcast/model.hpp"
#include "flowcast/training.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>

using namespace flowcast;
namespace fs = std::filesystem;

namespace {

std::string g_workdir = "acceptance_work";

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

using CriterionFn = std::function<Outcome()>;

// ---------------------------------------------------------------- criterion 1

Outcome criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    ModelConfig cfg;
    cfg.hidden = 8;
    cfg.token_width = 16;
    cfg.heads = 1;
    cfg.gnn_layers = 1;
    cfg.attn_blocks = 1;
    cfg.cluster_size = 4;  // 12 nodes -> 3 clusters

    auto setup = make_gradcheck_setup(3);
    auto params = ModelParams<double>::init(cfg, 5);
    Rng rng(7);
    nn::init_linear(params.head.layers.back(), rng);

    auto report = finite_difference_check(params, cfg, setup.trajectory, setup.clusters,
                                          setup.stats, /*horizon=*/2, 0.1, /*samples=*/250,
                                          /*eps=*/1e-5, 11, 13);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::ostringstream d;
    d << "max rel err " << report.max_rel_error << " over " << report.num_checked
      << " params (worst " << report.worst_tensor << "), " << secs << " s";
    return {report.max_rel_error < 1e-4 && report.num_checked >= 200 && secs < 60.0, d.str()};
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion_persistence_at_init() {
    const std::string dir = g_workdir + "/persistence";
    GenConfig gen;
    gen.family = FlowFamily::TaylorGreen;
    gen.n_traj = 3;
    gen.steps = 6;
    gen.nodes = 60;
    gen.seed = 21;
    auto manifest = generate_dataset(gen, dir);

    ModelConfig cfg;
    cfg.hidden = 32;
    cfg.token_width = 64;
    cfg.heads = 2;
    cfg.gnn_layers = 2;
    cfg.attn_blocks = 2;
    cfg.cluster_size = 10;

    std::vector<Trajectory> trajs;
    for (const auto& id : manifest.all_ids())
        trajs.push_back(load_trajectory(trajectory_path(dir, id)));
    std::vector<const Trajectory*> ptrs;
    for (const auto& t : trajs) ptrs.push_back(&t);
    auto stats = compute_norm_stats(ptrs);
    auto model = Model<double>::init(cfg, 9, stats);

    // Bit-exact persistence of forward_step.
    for (const auto& traj : trajs) {
        const auto& frame = traj.frames[0];
        auto asg = same_size_kmeans(frame.positions, 10, 1);
        auto geom = make_cluster_geometry(frame.positions, asg, frame.edges);
        auto pred = model.forward_step(frame, asg, geom, 3);
        if (!(pred.velocity == frame.velocity) || !(pred.pressure == frame.pressure))
            return {false, "forward_step at init is not bit-exact persistence"};
    }

    // N-RMSE at +1 equals the persistence baseline's.
    EvalOptions opts;
    opts.horizons = {1};
    std::vector<EvalItem> items;
    for (const auto& t : trajs) items.push_back({&t, nullptr});
    auto report = evaluate(model, items, opts);
    const double diff = std::abs(report.model.nrmse[0] - report.persistence.nrmse[0]);

    std::ostringstream d;
    d << "model +1 " << report.model.nrmse[0] << " vs persistence " << report.persistence.nrmse[0]
      << " (|diff| " << diff << ")";
    return {diff <= 1e-12, d.str()};
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion_clustering() {
    Rng rng(101);
    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 1 + static_cast<uint32_t>(rng.uniform_int(5000));
        const auto s = 1 + static_cast<uint32_t>(rng.uniform_int(64));
        Eigen::MatrixX2d pts(n, 2);
        for (uint32_t i = 0; i < n; ++i) {
            pts(i, 0) = rng.uniform();
            pts(i, 1) = rng.uniform();
        }
        std::vector<double> trace;
        auto a = same_size_kmeans(pts, s, trial, &trace, 40);

        if (a.num_clusters != (n + s - 1) / s) return {false, "wrong cluster count"};
        uint32_t total = 0, mn = UINT32_MAX, mx = 0;
        for (auto c : a.sizes) {
            total += c;
            mn = std::min(mn, c);
            mx = std::max(mx, c);
        }
        if (total != n) return {false, "assignment does not cover all nodes"};
        if (mx - mn > 1) return {false, "cluster sizes differ by more than 1"};
        for (size_t i = 1; i < trace.size(); ++i)
            if (trace[i] > trace[i - 1] + 1e-9)
                return {false, "objective increased across refinement iterations"};
        ++checked;
    }

    // Throughput: 10,000 points at s=10 in under 5 seconds.
    Eigen::MatrixX2d big(10000, 2);
    for (int i = 0; i < 10000; ++i) {
        big(i, 0) = rng.uniform();
        big(i, 1) = rng.uniform();
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto a = same_size_kmeans(big, 10, 7);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::ostringstream d;
    d << checked << " random cases ok; 10k points s=10 in " << secs << " s (K="
      << a.num_clusters << ")";
    return {secs < 5.0, d.str()};
}

// ---------------------------------------------------------------- criterion 4

Outcome criterion_attention() {
    GenConfig gen;
    gen.family = FlowFamily::VortexSystem;
    gen.n_traj = 1;
    gen.steps = 2;
    gen.nodes = 80;
    gen.seed = 31;
    const std::string dir = g_workdir + "/attention";
    auto manifest = generate_dataset(gen, dir);
    auto traj = load_trajectory(trajectory_path(dir, manifest.all_ids()[0]));
    const auto& frame = traj.frames[0];

    ModelConfig cfg;
    cfg.hidden = 16;
    cfg.token_width = 32;
    cfg.heads = 2;
    cfg.gnn_layers = 1;
    cfg.attn_blocks = 2;
    cfg.cluster_size = 8;

    auto asg = same_size_kmeans(frame.positions, 8, 1);
    auto geom = make_cluster_geometry(frame.positions, asg, frame.edges);
    NormStats stats;
    stats.p_mean = Eigen::VectorXd::Zero(1);

    // Row stochasticity in every softmax mode; one-ring support.
    for (auto mode : {AttentionMode::Full, AttentionMode::OneRing, AttentionMode::Average}) {
        cfg.attention_mode = mode;
        auto model = Model<double>::init(cfg, 5, stats);
        AttentionRecord rec;
        model.forward_step(frame, asg, geom, 3, &rec);
        for (const auto& block : rec.blocks)
            for (const auto& head : block)
                for (Eigen::Index r = 0; r < head.rows(); ++r) {
                    if (std::abs(head.row(r).sum() - 1.0) > 1e-6)
                        return {false, "attention row does not sum to 1 in mode " +
                                           to_string(mode)};
                    if (head.row(r).minCoeff() < 0) return {false, "negative attention weight"};
                    if (mode == AttentionMode::OneRing)
                        for (Eigen::Index c = 0; c < head.cols(); ++c)
                            if (!geom.adjacency(r, c) && head(r, c) != 0.0)
                                return {false, "one-ring attention outside the adjacency"};
                }
    }

    // Average mode equals the independent uniform-attention computation.
    cfg.attention_mode = AttentionMode::Average;
    auto model = Model<double>::init(cfg, 5, stats);
    auto ctx = make_frame_context<double>(frame, asg, geom, cfg);
    ad::Tape<double> tape;
    auto vars = bind_params(tape, model.params, false);
    StepGraph<double> graph(tape, vars, cfg, ctx);
    auto enc = graph.encode(tape.constant(model.normalize_velocity(frame.velocity)),
                            tape.constant(model.normalize_pressure(frame.pressure)));
    auto tokens = graph.pool(enc, 5);
    auto out = graph.attend(tokens);

    auto layer_norm = [](const MatrixXd& x, const ad::Mat<double>& gamma,
                         const ad::Mat<double>& beta) {
        MatrixXd y(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const double mu = x.row(r).mean();
            const double var = (x.row(r).array() - mu).square().mean();
            y.row(r) = ((x.row(r).array() - mu) / std::sqrt(var + 1e-5)) * gamma.row(0).array() +
                       beta.row(0).array();
        }
        return y;
    };
    MatrixXd w = tokens.value();
    const auto k = w.rows();
    for (const auto& block : model.params.blocks) {
        MatrixXd w1(k, w.cols() + ctx.bary_pe.cols());
        w1 << layer_norm(w, block.ln1.gamma, block.ln1.beta), ctx.bary_pe;
        MatrixXd values = (w1 * block.v.w).rowwise() + block.v.b.row(0);
        MatrixXd mixed = values.colwise().mean().replicate(k, 1);
        MatrixXd w3 = w + ((mixed * block.out.w).rowwise() + block.out.b.row(0));
        MatrixXd w4 = layer_norm(w3, block.ln2.gamma, block.ln2.beta);
        MatrixXd hidden =
            ((w4 * block.ffn.layers[0].w).rowwise() + block.ffn.layers[0].b.row(0)).cwiseMax(0.0);
        MatrixXd w5 = (hidden * block.ffn.layers[1].w).rowwise() + block.ffn.layers[1].b.row(0);
        w = w3 + w5;
    }
    w = layer_norm(w, model.params.final_ln.gamma, model.params.final_ln.beta);
    const double avg_err = (w - out.value()).cwiseAbs().maxCoeff();
    if (avg_err > 1e-6)
        return {false, "average mode deviates from the uniform oracle by " +
                           std::to_string(avg_err)};

    // K = 1 collapses the three softmax modes to identical outputs.
    ModelConfig one = cfg;
    one.cluster_size = 4096;
    auto asg1 = same_size_kmeans(frame.positions, 4096, 1);
    auto geom1 = make_cluster_geometry(frame.positions, asg1, frame.edges);
    if (asg1.num_clusters != 1) return {false, "expected a single cluster"};
    std::vector<Eigen::MatrixX2d> outs;
    for (auto mode : {AttentionMode::Full, AttentionMode::OneRing, AttentionMode::Average}) {
        one.attention_mode = mode;
        auto params = ModelParams<double>::init(one, 5);
        Rng rng(3);
        nn::init_linear(params.head.layers.back(), rng);
        Model<double> m(one, std::move(params), stats);
        outs.push_back(m.forward_step(frame, asg1, geom1, 3).velocity);
    }
    const double collapse = std::max((outs[0] - outs[1]).cwiseAbs().maxCoeff(),
                                     (outs[0] - outs[2]).cwiseAbs().maxCoeff());
    if (collapse > 1e-12)
        return {false, "K=1 modes differ by " + std::to_string(collapse)};

    std::ostringstream d;
    d << "rows stochastic (3 modes), one-ring support exact, uniform oracle err " << avg_err
      << ", K=1 collapse err " << collapse;
    return {true, d.str()};
}

// ---------------------------------------------------------------- criterion 5

Outcome criterion_overfit() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string dir = g_workdir + "/overfit";

    GenConfig gen;
    gen.family = FlowFamily::TaylorGreen;
    gen.n_traj = 1;
    gen.steps = 60;
    gen.nodes = 300;
    gen.dt = 0.1;
    gen.seed = 41;
    auto manifest = generate_dataset(gen, dir);
    auto traj = load_trajectory(trajectory_path(dir, manifest.all_ids()[0]));

    ModelConfig cfg;  // default sizes
    auto clusters = cluster_trajectory(traj, static_cast<uint32_t>(cfg.cluster_size), 0);
    auto stats = compute_norm_stats({&traj});

    TrainConfig tcfg;
    tcfg.steps = 2000;
    tcfg.horizon = 2;
    tcfg.seed = 5;
    tcfg.precision = "f32";
    tcfg.log_every = 200;

    // Loss at step 1 is the untrained model's loss; measure it (and the final
    // loss) on a fixed set of windows so the comparison is window-noise free.
    auto mean_window_loss = [&](ModelParams<double>& params) {
        double acc = 0;
        int count = 0;
        for (size_t start = 0; start + 2 < traj.frames.size(); start += 7) {
            acc += eval_window_loss(params, cfg, traj, clusters, stats, start, tcfg.horizon,
                                    tcfg.alpha, 1000 + start);
            ++count;
        }
        return acc / count;
    };

    auto init_params = ModelParams<double>::init(cfg, tcfg.seed);
    const double loss_before = mean_window_loss(init_params);

    TrainData data{{&traj}, {&clusters}};
    double first_logged = 0;
    auto ckpt = train(data, cfg, tcfg, stats, std::nullopt, [&](const TrainLogEntry& e) {
        if (e.step == 1) first_logged = e.loss;
        std::cerr << "  [overfit] step " << e.step << " loss " << e.loss << "\n";
    });
    const double loss_after = mean_window_loss(ckpt.params);

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double ratio = loss_before / std::max(loss_after, 1e-300);

    std::ostringstream d;
    d << "loss " << loss_before << " -> " << loss_after << " (x" << ratio << ", step-1 logged "
      << first_logged << "), " << secs << " s";
    return {ratio >= 100.0 && secs <= 1200.0, d.str()};
}

// ------------------------------------------------------- criteria 6, 7 and 11

struct ExperimentArtifacts {
    std::string dir;
    Checkpoint full, average, gnn;
    double model_nrmse10 = 0, persistence_nrmse10 = 0;
};

ModelConfig experiment_model_config(AttentionMode mode) {
    ModelConfig cfg;
    cfg.hidden = 64;
    cfg.token_width = 128;
    cfg.heads = 4;
    cfg.gnn_layers = 2;
    cfg.attn_blocks = 2;
    cfg.cluster_size = 10;
    cfg.attention_mode = mode;
    return cfg;
}

TrainConfig experiment_train_config() {
    TrainConfig tcfg;
    tcfg.steps = 3000;
    tcfg.horizon = 4;
    tcfg.seed = 11;
    tcfg.precision = "f32";
    tcfg.log_every = 500;
    return tcfg;
}

/// Builds the mixed dataset (25 Taylor-Green + 25 vortex trajectories) as one
/// directory with a combined manifest: 40 train, 10 held-out.
void build_mixed_dataset(const std::string& dir) {
    if (fs::exists(dir + "/manifest.json")) return;
    fs::create_directories(dir);

    GenConfig tg;
    tg.family = FlowFamily::TaylorGreen;
    tg.n_traj = 25;
    tg.steps = 60;
    tg.nodes = 250;
    tg.dt = 0.08;
    tg.seed = 51;
    generate_dataset(tg, dir + "/tg");

    GenConfig vx = tg;
    vx.family = FlowFamily::VortexSystem;
    vx.seed = 52;
    generate_dataset(vx, dir + "/vx");

    // Merge: move the files up and write one manifest interleaving families in
    // both the train and held-out splits.
    Manifest merged;
    merged.pressure_channels = 1;
    for (const auto& sub : {"tg", "vx"}) {
        auto m = load_manifest(dir + "/" + sub);
        for (const auto& id : m.all_ids()) {
            fs::rename(trajectory_path(dir + "/" + sub, id), trajectory_path(dir, id));
            fs::rename(meta_path_for(trajectory_path(dir + "/" + sub, id)),
                       meta_path_for(trajectory_path(dir, id)));
        }
        for (size_t i = 0; i < m.all_ids().size(); ++i) {
            const auto& id = m.all_ids()[i];
            if (i < 20)
                merged.train.push_back(id);
            else if (i < 22)
                merged.valid.push_back(id);
            else
                merged.test.push_back(id);
        }
        fs::remove_all(dir + "/" + sub);
    }
    save_manifest(merged, dir);
}

Checkpoint train_experiment_model(const std::string& dir, AttentionMode mode,
                                  const std::string& ckpt_path) {
    if (fs::exists(ckpt_path)) return load_checkpoint(ckpt_path);

    auto manifest = load_manifest(dir);
    auto cfg = experiment_model_config(mode);
    auto tcfg = experiment_train_config();
    auto split = load_split(dir, manifest.train, true, static_cast<uint32_t>(cfg.cluster_size), 0);
    auto stats = load_norm_stats(stats_path(dir));

    TrainData data;
    for (size_t i = 0; i < split.trajectories.size(); ++i) {
        data.trajectories.push_back(&split.trajectories[i]);
        data.clusters.push_back(&split.clusters[i]);
    }
    auto ckpt = train(data, cfg, tcfg, stats, std::nullopt, [&](const TrainLogEntry& e) {
        std::cerr << "  [" << to_string(mode) << "] step " << e.step << " loss " << e.loss
                  << "\n";
    });
    save_checkpoint(ckpt, ckpt_path);
    return ckpt;
}

EvalReport evaluate_experiment(const std::string& dir, const Checkpoint& ckpt, double downsample) {
    auto model = model_from_checkpoint<double>(ckpt);
    auto manifest = load_manifest(dir);
    std::vector<std::string> ids = manifest.valid;
    ids.insert(ids.end(), manifest.test.begin(), manifest.test.end());

    auto split = load_split(dir, ids, downsample <= 0,
                            static_cast<uint32_t>(model.config.cluster_size), 0);
    std::vector<EvalItem> items;
    for (size_t i = 0; i < split.trajectories.size(); ++i)
        items.push_back(
            {&split.trajectories[i], split.clusters.empty() ? nullptr : &split.clusters[i]});

    EvalOptions opts;
    opts.horizons = {1, 10};
    opts.order_seed = 77;
    opts.downsample = downsample;
    opts.downsample_seed = 5;
    return evaluate(model, items, opts);
}

ExperimentArtifacts& experiment_artifacts() {
    static ExperimentArtifacts art;
    if (!art.dir.empty()) return art;
    art.dir = g_workdir + "/mixed";
    build_mixed_dataset(art.dir);

    // Cluster caches and stats for the training resolution.
    auto manifest = load_manifest(art.dir);
    const auto cfg = experiment_model_config(AttentionMode::Full);
    for (const auto& id : manifest.all_ids()) {
        const auto path = trajectory_path(art.dir, id);
        const auto cache =
            cluster_cache_path(path, static_cast<uint32_t>(cfg.cluster_size), 0);
        if (!fs::exists(cache)) {
            auto traj = load_trajectory(path);
            precompute_clusters(traj, static_cast<uint32_t>(cfg.cluster_size), 0, cache);
        }
    }
    if (!fs::exists(stats_path(art.dir))) {
        std::vector<Trajectory> trajs;
        std::vector<const Trajectory*> ptrs;
        for (const auto& id : manifest.train)
            trajs.push_back(load_trajectory(trajectory_path(art.dir, id)));
        for (const auto& t : trajs) ptrs.push_back(&t);
        save_norm_stats(compute_norm_stats(ptrs), stats_path(art.dir));
    }

    art.full = train_experiment_model(art.dir, AttentionMode::Full, art.dir + "/full.ckpt");
    return art;
}

Outcome criterion_generalization() {
    const auto t0 = std::chrono::steady_clock::now();
    auto& art = experiment_artifacts();
    auto report = evaluate_experiment(art.dir, art.full, 0);
    art.model_nrmse10 = report.model.nrmse[1];
    art.persistence_nrmse10 = report.persistence.nrmse[1];
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::ostringstream d;
    d << "model +10 N-RMSE " << art.model_nrmse10 << " vs persistence "
      << art.persistence_nrmse10 << " (ratio "
      << art.model_nrmse10 / art.persistence_nrmse10 << "), " << secs << " s";
    return {art.model_nrmse10 <= 0.5 * art.persistence_nrmse10 && secs <= 3600.0, d.str()};
}

Outcome criterion_ablation() {
    auto& art = experiment_artifacts();
    art.average =
        train_experiment_model(art.dir, AttentionMode::Average, art.dir + "/average.ckpt");
    art.gnn = train_experiment_model(art.dir, AttentionMode::GnnCoarse, art.dir + "/gnn.ckpt");

    const double full = evaluate_experiment(art.dir, art.full, 0).model.nrmse[1];
    const double average = evaluate_experiment(art.dir, art.average, 0).model.nrmse[1];
    const double gnn = evaluate_experiment(art.dir, art.gnn, 0).model.nrmse[1];

    std::ostringstream d;
    d << "+10 N-RMSE: full " << full << ", average " << average << ", gnn_coarse " << gnn;
    return {full <= average && full <= gnn, d.str()};
}

Outcome criterion_downsampling() {
    auto& art = experiment_artifacts();
    const double native = evaluate_experiment(art.dir, art.full, 0).model.nrmse[1];
    const double down = evaluate_experiment(art.dir, art.full, 0.8).model.nrmse[1];
    const double rel = std::abs(down - native) / native;

    std::ostringstream d;
    d << "+10 N-RMSE native " << native << " vs 80% downsampled " << down << " (rel change "
      << rel << ")";
    return {rel <= 0.25, d.str()};
}

// ---------------------------------------------------------------- criterion 8

Outcome criterion_flops() {
    GenConfig gen;
    gen.family = FlowFamily::TaylorGreen;
    gen.n_traj = 1;
    gen.steps = 2;
    gen.nodes = 1000;
    gen.seed = 61;
    const std::string dir = g_workdir + "/flops";
    auto manifest = generate_dataset(gen, dir);
    auto traj = load_trajectory(trajectory_path(dir, manifest.all_ids()[0]));
    const auto& frame = traj.frames[0];

    NormStats stats;
    stats.p_mean = Eigen::VectorXd::Zero(1);

    std::ostringstream d;
    uint64_t prev = UINT64_MAX;
    bool ok = true;
    d << frame.num_nodes() << " nodes; attention-stage flops ";
    for (int s : {1, 5, 10, 20}) {
        ModelConfig cfg;  // default widths, paper sizes
        cfg.cluster_size = s;
        auto asg = same_size_kmeans(frame.positions, static_cast<uint32_t>(s), 1);
        auto geom = make_cluster_geometry(frame.positions, asg, frame.edges);
        auto model = Model<float>::init(cfg, 1, stats);
        FlopCounter flops;
        model.forward_step(frame, asg, geom, 1, nullptr, &flops);
        d << "s=" << s << " (K=" << asg.num_clusters << "): " << flops.attention_stage << "  ";
        ok = ok && flops.attention_stage < prev;
        prev = flops.attention_stage;
    }
    return {ok, d.str()};
}

// ---------------------------------------------------------------- criterion 9

Outcome criterion_metric_oracles() {
    Rng rng(71);
    // Random aligned frame sequences, naive accumulation vs the library.
    for (int trial = 0; trial < 20; ++trial) {
        const int steps = 1 + static_cast<int>(rng.uniform_int(6));
        const auto n = static_cast<Eigen::Index>(3 + rng.uniform_int(40));
        const int pc = 1 + static_cast<int>(rng.uniform_int(2));
        std::vector<MeshFrame> pred(static_cast<size_t>(steps)), truth(static_cast<size_t>(steps));
        for (int t = 0; t < steps; ++t) {
            for (auto* fr : {&pred[static_cast<size_t>(t)], &truth[static_cast<size_t>(t)]}) {
                fr->positions.setZero(n, 2);
                fr->node_types.assign(static_cast<size_t>(n), NodeType::Interior);
                fr->velocity.resize(n, 2);
                fr->pressure.resize(n, pc);
                for (Eigen::Index i = 0; i < n; ++i) {
                    fr->velocity(i, 0) = rng.uniform(-2.0, 2.0);
                    fr->velocity(i, 1) = rng.uniform(-2.0, 2.0);
                    for (int c = 0; c < pc; ++c) fr->pressure(i, c) = rng.uniform(-2.0, 2.0);
                }
            }
        }
        NormStats stats;
        stats.v_std = rng.uniform(0.3, 2.0);
        stats.p_std = rng.uniform(0.3, 2.0);
        stats.p_mean = Eigen::VectorXd::Zero(pc);

        std::vector<const MeshFrame*> pp, tt;
        for (int t = 0; t < steps; ++t) {
            pp.push_back(&pred[static_cast<size_t>(t)]);
            tt.push_back(&truth[static_cast<size_t>(t)]);
        }
        const std::vector<int> horizons{steps};
        const auto got_n = n_rmse(pp, tt, stats, horizons);
        const auto got_f = rmse_fields(pp, tt, horizons);

        double accv = 0, accp = 0, accn = 0;
        for (int t = 0; t < steps; ++t) {
            double sv = 0, sp = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                for (int c = 0; c < 2; ++c) {
                    const double e = pp[static_cast<size_t>(t)]->velocity(i, c) -
                                     tt[static_cast<size_t>(t)]->velocity(i, c);
                    sv += e * e;
                }
                for (int c = 0; c < pc; ++c) {
                    const double e = pp[static_cast<size_t>(t)]->pressure(i, c) -
                                     tt[static_cast<size_t>(t)]->pressure(i, c);
                    sp += e * e;
                }
            }
            const double rv = std::sqrt(sv / static_cast<double>(2 * n));
            const double rp = std::sqrt(sp / static_cast<double>(pc * n));
            accv += rv;
            accp += rp;
            accn += rv / stats.v_std + rp / stats.p_std;
        }
        if (std::abs(got_n[0] - accn / steps) > 1e-12) return {false, "n_rmse oracle mismatch"};
        if (std::abs(got_f.velocity[0] - accv / steps) > 1e-12 ||
            std::abs(got_f.pressure[0] - accp / steps) > 1e-12)
            return {false, "rmse_fields oracle mismatch"};
    }

    Eigen::VectorXd row(4);
    row << 0.5, 0.3, 0.15, 0.05;
    if (k_number(row) != 3) return {false, "k_number([0.5,0.3,0.15,0.05]) != 3"};
    if (k_number(Eigen::VectorXd::Constant(20, 0.05)) != 18) return {false, "uniform-20 != 18"};
    Eigen::VectorXd onehot = Eigen::VectorXd::Zero(5);
    onehot(2) = 1;
    if (k_number(onehot) != 1) return {false, "one-hot != 1"};

    return {true, "n_rmse / rmse_fields match the naive oracle to 1e-12; k_number hand cases ok"};
}

// --------------------------------------------------------------- criterion 10

Outcome criterion_dynamics_procedures() {
    // Drone free fall: y(1s) = -g/2 = -4.905 m.
    DroneParams params;
    DroneState s;
    for (int i = 0; i < 100; ++i) s = drone_step(s, 0.0, 0.0, 0.01, params);
    if (std::abs(s.position.y() + 4.905) > 1e-6)
        return {false, "free-fall displacement " + std::to_string(s.position.y())};

    // Hover equilibrium residual.
    const double os = params.hover_speed();
    DroneState hover;
    DroneState next = drone_step(hover, os, os, 1e-3, params);
    const double residual = std::max({std::abs(next.velocity.x()), std::abs(next.velocity.y()),
                                      std::abs(next.theta_dot)});
    if (residual > 1e-9) return {false, "hover residual " + std::to_string(residual)};

    // Poisson-disk min-distance oracle on a random cloud and a sampled mesh.
    Rng rng(81);
    std::vector<Vec2> cloud;
    for (int i = 0; i < 1500; ++i) cloud.emplace_back(rng.uniform(), rng.uniform());
    auto kept = poisson_disk_downsample(cloud, 0.04, 3);
    for (size_t i = 0; i < kept.size(); ++i)
        for (size_t j = i + 1; j < kept.size(); ++j)
            if ((cloud[kept[i]] - cloud[kept[j]]).norm() < 0.04)
                return {false, "poisson-disk pair below the radius"};

    auto mesh = sample_domain_mesh(DomainSpec::unit_square(), 400, 7);
    for (Eigen::Index i = mesh.num_boundary; i < mesh.frame.num_nodes(); ++i)
        for (Eigen::Index j = i + 1; j < mesh.frame.num_nodes(); ++j)
            if ((mesh.frame.positions.row(i) - mesh.frame.positions.row(j)).norm() <
                mesh.interior_radius - 1e-12)
                return {false, "sampled mesh violates the disk radius"};

    // Delaunay empty-circumcircle oracle on random point sets (n <= 60).
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng prng(900 + seed);
        std::vector<Vec2> pts;
        const int n = 10 + static_cast<int>(prng.uniform_int(51));
        for (int i = 0; i < n; ++i) pts.emplace_back(prng.uniform(), prng.uniform());
        auto tri = delaunay_triangulate(pts);
        double span = 1.0;
        const double tol = 1e-9 * span;
        for (const auto& t : tri.triangles) {
            Vec2 a = pts[t[0]], b = pts[t[1]], c = pts[t[2]];
            if (orient2d(a, b, c) < 0) std::swap(b, c);
            for (int i = 0; i < n; ++i) {
                if (static_cast<uint32_t>(i) == t[0] || static_cast<uint32_t>(i) == t[1] ||
                    static_cast<uint32_t>(i) == t[2])
                    continue;
                const Vec2& dd = pts[static_cast<size_t>(i)];
                const double adx = a.x() - dd.x(), ady = a.y() - dd.y();
                const double bdx = b.x() - dd.x(), bdy = b.y() - dd.y();
                const double cdx = c.x() - dd.x(), cdy = c.y() - dd.y();
                const double det =
                    adx * (bdy * (cdx * cdx + cdy * cdy) - cdy * (bdx * bdx + bdy * bdy)) -
                    ady * (bdx * (cdx * cdx + cdy * cdy) - cdx * (bdx * bdx + bdy * bdy)) +
                    (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy);
                if (det > tol) return {false, "empty-circumcircle violation"};
            }
        }
    }

    return {true, "free fall -4.905 m, hover residual <= 1e-9, poisson and delaunay oracles ok"};
}

// --------------------------------------------------------------- criterion 12

Outcome criterion_roundtrips() {
    const std::string dir = g_workdir + "/roundtrip";
    GenConfig gen;
    gen.family = FlowFamily::VortexSystem;
    gen.n_traj = 1;
    gen.steps = 8;
    gen.nodes = 60;
    gen.seed = 91;
    auto manifest = generate_dataset(gen, dir);
    const auto id = manifest.all_ids()[0];

    // Dataset byte-exactness through a load/save cycle.
    const auto original = slurp(trajectory_path(dir, id));
    auto traj = load_trajectory(trajectory_path(dir, id));
    save_trajectory(traj, dir + "/resaved.bin");
    if (slurp(dir + "/resaved.bin") != original)
        return {false, "trajectory re-save changed the bytes"};

    // Checkpoint byte-exactness and deterministic resume.
    ModelConfig cfg;
    cfg.hidden = 16;
    cfg.token_width = 32;
    cfg.heads = 2;
    cfg.gnn_layers = 1;
    cfg.attn_blocks = 1;
    cfg.cluster_size = 6;
    auto clusters = cluster_trajectory(traj, 6, 0);
    auto stats = compute_norm_stats({&traj});
    TrainData data{{&traj}, {&clusters}};

    for (const char* precision : {"f32", "f64"}) {
        TrainConfig tcfg;
        tcfg.horizon = 2;
        tcfg.precision = precision;
        tcfg.deterministic = true;
        tcfg.seed = 3;

        tcfg.steps = 6;
        auto direct = train(data, cfg, tcfg, stats);
        save_checkpoint(direct, dir + "/direct.ckpt");
        auto loaded = load_checkpoint(dir + "/direct.ckpt");
        save_checkpoint(loaded, dir + "/reloaded.ckpt");
        if (slurp(dir + "/direct.ckpt") != slurp(dir + "/reloaded.ckpt"))
            return {false, std::string("checkpoint re-save changed the bytes (") + precision + ")"};

        tcfg.steps = 3;
        auto half = train(data, cfg, tcfg, stats);
        tcfg.steps = 6;
        auto resumed = train(data, cfg, tcfg, stats, half);
        save_checkpoint(resumed, dir + "/resumed.ckpt");
        if (slurp(dir + "/direct.ckpt") != slurp(dir + "/resumed.ckpt"))
            return {false, std::string("resumed run differs from uninterrupted run (") +
                               precision + ")"};
    }

    return {true, "dataset and checkpoint round-trips byte-exact; resume bit-exact (f32 and f64)"};
}

struct Entry {
    int id;
    const char* name;
    const char* group;
    CriterionFn fn;
};

const Entry kCriteria[] = {
    {1, "gradient correctness", "fast", criterion_gradients},
    {2, "persistence at initialization", "fast", criterion_persistence_at_init},
    {3, "clustering invariants", "fast", criterion_clustering},
    {4, "attention invariants", "fast", criterion_attention},
    {5, "overfit check", "experiments", criterion_overfit},
    {6, "generalization vs persistence", "experiments", criterion_generalization},
    {7, "ablation ordering", "experiments", criterion_ablation},
    {8, "attention cost scaling", "fast", criterion_flops},
    {9, "metric oracles", "fast", criterion_metric_oracles},
    {10, "dynamics and sampling procedures", "fast", criterion_dynamics_procedures},
    {11, "mesh-downsampling robustness", "experiments", criterion_downsampling},
    {12, "format round-trips", "fast", criterion_roundtrips},
};

}  // namespace

int main(int argc, char** argv) {
    std::string group = "all";
    int only = -1;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--group") == 0 && i + 1 < argc) group = argv[++i];
        else if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
        else if (std::strcmp(argv[i], "--workdir") == 0 && i + 1 < argc) g_workdir = argv[++i];
        else {
            std::cerr << "usage: acceptance [--group fast|experiments|all] [--criterion N] "
                         "[--workdir DIR]\n";
            return 1;
        }
    }
    fs::create_directories(g_workdir);

    int failures = 0, ran = 0;
    for (const auto& entry : kCriteria) {
        if (only > 0 && entry.id != only) continue;
        if (only < 0 && group != "all" && group != entry.group) continue;
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = entry.fn();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << entry.id << " ("
                  << entry.name << "): " << outcome.detail << " [" << secs << " s]" << std::endl;
        if (!outcome.pass) ++failures;
    }
    if (ran == 0) {
        std::cerr << "no criteria selected\n";
        return 1;
    }
    return failures == 0 ? 0 : 1;
}
