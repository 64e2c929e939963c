#include "flowcast/training.hpp"

#include "flowcast/binio.hpp"
#include "flowcast/delaunay.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace flowcast {

void TrainConfig::validate() const {
    if (steps < 1) throw DataError("train config: steps must be >= 1");
    if (horizon < 1) throw DataError("train config: horizon must be >= 1");
    if (!(learning_rate > 0)) throw DataError("train config: learning_rate must be > 0");
    if (alpha < 0) throw DataError("train config: alpha must be >= 0");
    if (precision != "f32" && precision != "f64")
        throw DataError("train config: precision must be \"f32\" or \"f64\"");
}

// --- config json -----------------------------------------------------------------

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    return {{"hidden", cfg.hidden},
            {"gnn_layers", cfg.gnn_layers},
            {"token_width", cfg.token_width},
            {"attn_blocks", cfg.attn_blocks},
            {"heads", cfg.heads},
            {"pe_min_band", cfg.pe_min_band},
            {"pe_max_band", cfg.pe_max_band},
            {"cluster_size", cfg.cluster_size},
            {"attention_mode", to_string(cfg.attention_mode)},
            {"pressure_channels", cfg.pressure_channels}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.hidden = j.value("hidden", cfg.hidden);
    cfg.gnn_layers = j.value("gnn_layers", cfg.gnn_layers);
    cfg.token_width = j.value("token_width", cfg.token_width);
    cfg.attn_blocks = j.value("attn_blocks", cfg.attn_blocks);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.pe_min_band = j.value("pe_min_band", cfg.pe_min_band);
    cfg.pe_max_band = j.value("pe_max_band", cfg.pe_max_band);
    cfg.cluster_size = j.value("cluster_size", cfg.cluster_size);
    if (j.contains("attention_mode"))
        cfg.attention_mode = attention_mode_from_string(j.at("attention_mode").get<std::string>());
    cfg.pressure_channels = j.value("pressure_channels", cfg.pressure_channels);
    cfg.validate();
    return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    return {{"steps", cfg.steps},
            {"learning_rate", cfg.learning_rate},
            {"horizon", cfg.horizon},
            {"alpha", cfg.alpha},
            {"seed", cfg.seed},
            {"precision", cfg.precision},
            {"grad_clip", cfg.grad_clip},
            {"log_every", cfg.log_every},
            {"checkpoint_every", cfg.checkpoint_every},
            {"deterministic", cfg.deterministic}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.steps = j.value("steps", cfg.steps);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.precision = j.value("precision", cfg.precision);
    cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
    cfg.log_every = j.value("log_every", cfg.log_every);
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
    cfg.deterministic = j.value("deterministic", cfg.deterministic);
    cfg.validate();
    return cfg;
}

static nlohmann::json load_json_file(const std::string& path) {
    auto is = open_in(path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return j;
}

ModelConfig load_model_config(const std::string& path) {
    return model_config_from_json(load_json_file(path));
}

TrainConfig load_train_config(const std::string& path) {
    return train_config_from_json(load_json_file(path));
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.hidden == b.hidden && a.gnn_layers == b.gnn_layers &&
           a.token_width == b.token_width && a.attn_blocks == b.attn_blocks &&
           a.heads == b.heads && a.pe_min_band == b.pe_min_band &&
           a.pe_max_band == b.pe_max_band && a.cluster_size == b.cluster_size &&
           a.attention_mode == b.attention_mode && a.pressure_channels == b.pressure_channels;
}

// --- loss ------------------------------------------------------------------------

LossBreakdown multi_step_loss(const std::vector<const MeshFrame*>& predicted,
                              const std::vector<const MeshFrame*>& target, double alpha) {
    if (predicted.size() != target.size())
        throw DataError("loss: predicted and target horizons differ (" +
                        std::to_string(predicted.size()) + " vs " + std::to_string(target.size()) +
                        ")");
    LossBreakdown out;
    for (size_t h = 0; h < predicted.size(); ++h) {
        const auto& p = *predicted[h];
        const auto& t = *target[h];
        if (p.num_nodes() != t.num_nodes() || p.pressure_channels() != t.pressure_channels())
            throw DataError("loss: node/channel mismatch at step " + std::to_string(h));
        out.velocity += (p.velocity - t.velocity).array().square().mean();
        out.pressure += (p.pressure - t.pressure).array().square().mean();
    }
    out.total = out.velocity + alpha * out.pressure;
    return out;
}

// --- checkpoint io ------------------------------------------------------------------

namespace {

std::string hex_u64(uint64_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << v;
    return os.str();
}

uint64_t parse_hex_u64(const std::string& s) { return std::stoull(s, nullptr, 16); }

nlohmann::json stats_to_json(const NormStats& s) {
    return {{"v_mean", {s.v_mean.x(), s.v_mean.y()}},
            {"v_std", s.v_std},
            {"p_mean", std::vector<double>(s.p_mean.data(), s.p_mean.data() + s.p_mean.size())},
            {"p_std", s.p_std}};
}

NormStats stats_from_json(const nlohmann::json& j) {
    NormStats s;
    s.v_mean.x() = j.at("v_mean").at(0).get<double>();
    s.v_mean.y() = j.at("v_mean").at(1).get<double>();
    s.v_std = j.at("v_std").get<double>();
    const auto pm = j.at("p_mean").get<std::vector<double>>();
    s.p_mean = Eigen::Map<const Eigen::VectorXd>(pm.data(), static_cast<Eigen::Index>(pm.size()));
    s.p_std = j.at("p_std").get<double>();
    return s;
}

}  // namespace

void save_checkpoint(Checkpoint& ckpt, const std::string& path) {
    std::vector<std::pair<std::string, const ad::Mat<double>*>> tensors;
    ckpt.params.visit(
        [&](const std::string& name, ad::Mat<double>& m) { tensors.emplace_back(name, &m); });
    const size_t n_params = tensors.size();
    if (!ckpt.adam_m.empty()) {
        if (ckpt.adam_m.size() != n_params || ckpt.adam_v.size() != n_params)
            throw DataError("save_checkpoint: optimizer slot count mismatch");
        for (size_t i = 0; i < n_params; ++i)
            tensors.emplace_back("adam_m." + tensors[i].first, &ckpt.adam_m[i]);
        for (size_t i = 0; i < n_params; ++i)
            tensors.emplace_back("adam_v." + tensors[i].first, &ckpt.adam_v[i]);
    }

    nlohmann::json dir = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& [name, m] : tensors) {
        dir.push_back({{"name", name},
                       {"rows", m->rows()},
                       {"cols", m->cols()},
                       {"dtype", "f64"},
                       {"offset", offset}});
        offset += static_cast<uint64_t>(m->size()) * 8;
    }

    nlohmann::json header{{"model_config", model_config_to_json(ckpt.model_config)},
                          {"train_config", train_config_to_json(ckpt.train_config)},
                          {"stats", stats_to_json(ckpt.stats)},
                          {"step", ckpt.step},
                          {"rng_state",
                           {hex_u64(ckpt.rng_state[0]), hex_u64(ckpt.rng_state[1]),
                            hex_u64(ckpt.rng_state[2]), hex_u64(ckpt.rng_state[3])}},
                          {"has_optimizer", !ckpt.adam_m.empty()},
                          {"tensors", dir}};
    const std::string hs = header.dump();

    auto os = open_out(path);
    BinWriter w(os);
    w.magic("MTCK");
    w.u32(1);
    w.u32(static_cast<uint32_t>(hs.size()));
    w.bytes(hs.data(), hs.size());
    for (const auto& [name, m] : tensors) {
        (void)name;
        w.bytes(m->data(), static_cast<size_t>(m->size()) * 8);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    auto is = open_in(path);
    BinReader r(is, path);
    r.expect_magic("MTCK");
    const uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    const uint32_t hlen = r.u32("header length");
    std::string hs(hlen, '\0');
    r.bytes(hs.data(), hlen, "header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": bad header json: " + e.what());
    }

    Checkpoint ckpt;
    ckpt.model_config = model_config_from_json(header.at("model_config"));
    ckpt.train_config = train_config_from_json(header.at("train_config"));
    ckpt.stats = stats_from_json(header.at("stats"));
    ckpt.step = header.at("step").get<int64_t>();
    for (int i = 0; i < 4; ++i)
        ckpt.rng_state[static_cast<size_t>(i)] =
            parse_hex_u64(header.at("rng_state").at(i).get<std::string>());

    ckpt.params = ModelParams<double>::sized(ckpt.model_config);
    std::vector<std::pair<std::string, ad::Mat<double>*>> slots;
    ckpt.params.visit(
        [&](const std::string& name, ad::Mat<double>& m) { slots.emplace_back(name, &m); });
    const bool has_opt = header.value("has_optimizer", false);
    if (has_opt) {
        ckpt.adam_m.resize(slots.size());
        ckpt.adam_v.resize(slots.size());
        const size_t n = slots.size();
        for (size_t i = 0; i < n; ++i) {
            ckpt.adam_m[i].resizeLike(*slots[i].second);
            ckpt.adam_v[i].resizeLike(*slots[i].second);
            slots.emplace_back("adam_m." + slots[i].first, &ckpt.adam_m[i]);
        }
        for (size_t i = 0; i < n; ++i)
            slots.emplace_back("adam_v." + slots[i].first, &ckpt.adam_v[i]);
    }

    const auto& dir = header.at("tensors");
    if (dir.size() != slots.size())
        throw FormatError(path + ": tensor directory has " + std::to_string(dir.size()) +
                          " entries, expected " + std::to_string(slots.size()) +
                          " for this model config");
    for (size_t i = 0; i < slots.size(); ++i) {
        const auto& entry = dir.at(i);
        if (entry.at("name").get<std::string>() != slots[i].first)
            throw FormatError(path + ": tensor " + std::to_string(i) + " is \"" +
                              entry.at("name").get<std::string>() + "\", expected \"" +
                              slots[i].first + "\" (config mismatch?)");
        ad::Mat<double>& m = *slots[i].second;
        if (entry.at("rows").get<Eigen::Index>() != m.rows() ||
            entry.at("cols").get<Eigen::Index>() != m.cols())
            throw FormatError(path + ": tensor \"" + slots[i].first + "\" has shape " +
                              std::to_string(entry.at("rows").get<long>()) + "x" +
                              std::to_string(entry.at("cols").get<long>()) +
                              ", expected " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()));
        r.bytes(m.data(), static_cast<size_t>(m.size()) * 8, slots[i].first.c_str());
    }
    return ckpt;
}

// --- training loop -------------------------------------------------------------------

namespace {

template <typename T>
struct Trainer {
    const TrainData& data;
    ModelConfig mcfg;
    TrainConfig tcfg;
    NormStats stats;

    ModelParams<T> params;
    std::vector<ad::Mat<T>> adam_m, adam_v;
    int64_t step = 0;
    Rng rng;

    // caches keyed by (trajectory, frame)
    std::unordered_map<uint64_t, std::shared_ptr<FrameContext<T>>> contexts;
    std::unordered_map<uint64_t, std::shared_ptr<std::vector<uint32_t>>> transfers;

    static uint64_t key(size_t ti, size_t f) { return (static_cast<uint64_t>(ti) << 32) | f; }

    std::shared_ptr<FrameContext<T>> context(size_t ti, size_t f) {
        const uint64_t k = key(ti, f);
        auto it = contexts.find(k);
        if (it != contexts.end()) return it->second;
        if (contexts.size() > 4096) contexts.clear();
        const Trajectory& traj = *data.trajectories[ti];
        const ClusterAssignment& asg = (*data.clusters[ti])[f];
        ClusterGeometry geom =
            make_cluster_geometry(traj.frames[f].positions, asg, traj.frames[f].edges);
        auto ctx = std::make_shared<FrameContext<T>>(
            make_frame_context<T>(traj.frames[f], asg, geom, mcfg));
        contexts.emplace(k, ctx);
        return ctx;
    }

    /// Nearest-node map from frame f to frame f+1 of trajectory ti.
    std::shared_ptr<std::vector<uint32_t>> transfer(size_t ti, size_t f) {
        const uint64_t k = key(ti, f);
        auto it = transfers.find(k);
        if (it != transfers.end()) return it->second;
        const Trajectory& traj = *data.trajectories[ti];
        auto map = std::make_shared<std::vector<uint32_t>>(
            nearest_node_map(traj.frames[f].positions, traj.frames[f + 1].positions));
        transfers.emplace(k, map);
        return map;
    }

    ad::Mat<T> norm_v(const Eigen::MatrixX2d& v) const {
        MatrixXd out = v;
        out.col(0).array() -= stats.v_mean.x();
        out.col(1).array() -= stats.v_mean.y();
        out /= stats.v_std;
        return out.cast<T>();
    }

    ad::Mat<T> norm_p(const MatrixXd& p) const {
        MatrixXd out = p;
        for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c).array() -= stats.p_mean(c);
        out /= stats.p_std;
        return out.cast<T>();
    }

    Checkpoint run(const std::optional<Checkpoint>& resume, TrainLogSink log,
                   const std::string& checkpoint_path) {
        const int H = tcfg.horizon;
        if (data.trajectories.empty()) throw DataError("train: empty train split");
        if (data.clusters.size() != data.trajectories.size())
            throw DataError("train: cluster cache count does not match trajectory count");
        for (size_t ti = 0; ti < data.trajectories.size(); ++ti) {
            const auto frames = data.trajectories[ti]->frames.size();
            if (frames < static_cast<size_t>(H) + 1)
                throw DataError("train: trajectory " + std::to_string(ti) + " has " +
                                std::to_string(frames) + " frames, need at least H+1 = " +
                                std::to_string(H + 1));
            if (data.clusters[ti]->size() != frames)
                throw DataError("train: cluster cache for trajectory " + std::to_string(ti) +
                                " covers " + std::to_string(data.clusters[ti]->size()) +
                                " frames, expected " + std::to_string(frames));
        }

        if (resume) {
            if (!(resume->model_config == mcfg))
                throw DataError("train: checkpoint model config does not match requested config");
            params = const_cast<Checkpoint&>(*resume).params.template cast<T>(mcfg);
            step = resume->step;
            rng.set_state(resume->rng_state);
            adam_m.clear();
            adam_v.clear();
            for (const auto& m : resume->adam_m) adam_m.push_back(m.template cast<T>());
            for (const auto& m : resume->adam_v) adam_v.push_back(m.template cast<T>());
        } else {
            params = ModelParams<T>::init(mcfg, tcfg.seed);
            rng.reseed(Rng::mix(tcfg.seed, 0x747261696eULL));
        }

        std::vector<ad::Mat<T>*> slots;
        params.visit([&](const std::string&, ad::Mat<T>& m) { slots.push_back(&m); });
        if (adam_m.empty()) {
            for (auto* s : slots) {
                adam_m.push_back(ad::Mat<T>::Zero(s->rows(), s->cols()));
                adam_v.push_back(ad::Mat<T>::Zero(s->rows(), s->cols()));
            }
        }

        ad::Tape<T> tape;
        std::vector<ad::Var<T>> bound;
        const int64_t end_step = tcfg.steps;
        while (step < end_step) {
            const auto t0 = std::chrono::steady_clock::now();

            const auto ti = static_cast<size_t>(rng.uniform_int(data.trajectories.size()));
            const Trajectory& traj = *data.trajectories[ti];
            const auto start = static_cast<size_t>(
                rng.uniform_int(traj.frames.size() - static_cast<size_t>(H)));
            const uint64_t order_seed = rng.next_u64();

            tape.clear();
            bound.clear();
            ModelVars<T> vars = bind_params(tape, params, true, &bound);

            ad::Var<T> v = tape.constant(norm_v(traj.frames[start].velocity));
            ad::Var<T> p = tape.constant(norm_p(traj.frames[start].pressure));
            ad::Var<T> loss_v;
            ad::Var<T> loss_p;
            for (int h = 1; h <= H; ++h) {
                const size_t f = start + static_cast<size_t>(h) - 1;
                auto ctx = context(ti, f);
                StepGraph<T> graph(tape, vars, mcfg, *ctx);
                auto out = graph.step(v, p, Rng::mix(order_seed, static_cast<uint64_t>(h)));

                // Move the prediction onto the next (known) geometry.
                auto map = transfer(ti, f);
                v = ad::gather_rows(out.v_next, map);
                p = ad::gather_rows(out.p_next, map);

                ad::Var<T> tv = tape.constant(norm_v(traj.frames[f + 1].velocity));
                ad::Var<T> tp = tape.constant(norm_p(traj.frames[f + 1].pressure));
                ad::Var<T> ev = ad::mean_square(ad::sub(v, tv));
                ad::Var<T> ep = ad::mean_square(ad::sub(p, tp));
                loss_v = loss_v.valid() ? ad::add(loss_v, ev) : ev;
                loss_p = loss_p.valid() ? ad::add(loss_p, ep) : ep;
            }
            ad::Var<T> loss = ad::add(loss_v, ad::scale(loss_p, static_cast<T>(tcfg.alpha)));

            const double loss_val = static_cast<double>(loss.value()(0, 0));
            if (!std::isfinite(loss_val))
                throw NumericError("train: non-finite loss at step " + std::to_string(step + 1) +
                                   " (trajectory " + std::to_string(ti) + ", window start " +
                                   std::to_string(start) + ")");

            tape.backward(loss);

            std::vector<ad::Mat<T>> grads;
            grads.reserve(bound.size());
            for (auto bvar : bound) grads.push_back(tape.grad(bvar));

            if (tcfg.grad_clip > 0) {
                double sq = 0;
                for (const auto& g : grads) sq += static_cast<double>(g.squaredNorm());
                const double norm = std::sqrt(sq);
                if (norm > tcfg.grad_clip) {
                    const T s = static_cast<T>(tcfg.grad_clip / norm);
                    for (auto& g : grads) g *= s;
                }
            }

            // Adam with bias correction
            ++step;
            const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
            const T bc1 = static_cast<T>(1.0 - std::pow(b1, static_cast<double>(step)));
            const T bc2 = static_cast<T>(1.0 - std::pow(b2, static_cast<double>(step)));
            for (size_t i = 0; i < slots.size(); ++i) {
                adam_m[i] = adam_m[i] * static_cast<T>(b1) + grads[i] * static_cast<T>(1 - b1);
                adam_v[i] = (adam_v[i].array() * static_cast<T>(b2) +
                             grads[i].array().square() * static_cast<T>(1 - b2))
                                .matrix();
                slots[i]->array() -= static_cast<T>(tcfg.learning_rate) *
                                     (adam_m[i].array() / bc1) /
                                     ((adam_v[i].array() / bc2).sqrt() + static_cast<T>(eps));
            }

            const auto t1 = std::chrono::steady_clock::now();
            if (log && (step == 1 || step % tcfg.log_every == 0 || step == end_step)) {
                log({step, loss_val, static_cast<double>(loss_v.value()(0, 0)),
                     static_cast<double>(loss_p.value()(0, 0)),
                     std::chrono::duration<double, std::milli>(t1 - t0).count()});
            }
            if (!checkpoint_path.empty() && tcfg.checkpoint_every > 0 &&
                step % tcfg.checkpoint_every == 0 && step != end_step) {
                Checkpoint ck = snapshot();
                save_checkpoint(ck, checkpoint_path);
            }
        }

        Checkpoint final = snapshot();
        if (!checkpoint_path.empty()) save_checkpoint(final, checkpoint_path);
        return final;
    }

    Checkpoint snapshot() {
        Checkpoint ck;
        ck.model_config = mcfg;
        ck.train_config = tcfg;
        ck.stats = stats;
        ck.step = step;
        ck.rng_state = rng.state();
        ck.params = params.template cast<double>(mcfg);
        for (const auto& m : adam_m) ck.adam_m.push_back(m.template cast<double>());
        for (const auto& m : adam_v) ck.adam_v.push_back(m.template cast<double>());
        return ck;
    }
};

}  // namespace

Checkpoint train(const TrainData& data, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                 const NormStats& stats, const std::optional<Checkpoint>& resume, TrainLogSink log,
                 const std::string& checkpoint_path) {
    model_cfg.validate();
    train_cfg.validate();

    const int saved_threads = Eigen::nbThreads();
    if (train_cfg.deterministic) Eigen::setNbThreads(1);

    Checkpoint out;
    try {
        if (train_cfg.precision == "f64") {
            Trainer<double> tr{data, model_cfg, train_cfg, stats};
            out = tr.run(resume, log, checkpoint_path);
        } else {
            Trainer<float> tr{data, model_cfg, train_cfg, stats};
            out = tr.run(resume, log, checkpoint_path);
        }
    } catch (...) {
        Eigen::setNbThreads(saved_threads);
        throw;
    }
    Eigen::setNbThreads(saved_threads);
    return out;
}

// --- finite differences ----------------------------------------------------------------

namespace {

double window_loss(ModelParams<double>& params, const ModelConfig& cfg, const Trajectory& traj,
                   const std::vector<ClusterAssignment>& clusters, const NormStats& stats,
                   size_t start, int horizon, double alpha, uint64_t order_seed, bool with_grads,
                   std::vector<ad::Mat<double>>* grads_out) {
    ad::Tape<double> tape;
    std::vector<ad::Var<double>> bound;
    ModelVars<double> vars = bind_params(tape, params, with_grads, with_grads ? &bound : nullptr);

    auto norm_v = [&](const Eigen::MatrixX2d& v) {
        MatrixXd out = v;
        out.col(0).array() -= stats.v_mean.x();
        out.col(1).array() -= stats.v_mean.y();
        return MatrixXd(out / stats.v_std);
    };
    auto norm_p = [&](const MatrixXd& p) {
        MatrixXd out = p;
        for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c).array() -= stats.p_mean(c);
        return MatrixXd(out / stats.p_std);
    };

    std::vector<FrameContext<double>> ctxs;
    for (int h = 0; h < horizon; ++h) {
        const auto f = start + static_cast<size_t>(h);
        ClusterGeometry geom = make_cluster_geometry(traj.frames[f].positions, clusters[f],
                                                     traj.frames[f].edges);
        ctxs.push_back(make_frame_context<double>(traj.frames[f], clusters[f], geom, cfg));
    }

    ad::Var<double> v = tape.constant(norm_v(traj.frames[start].velocity));
    ad::Var<double> p = tape.constant(norm_p(traj.frames[start].pressure));
    ad::Var<double> loss;
    for (int h = 1; h <= horizon; ++h) {
        const auto f = start + static_cast<size_t>(h - 1);
        StepGraph<double> graph(tape, vars, cfg, ctxs[static_cast<size_t>(h - 1)]);
        auto out = graph.step(v, p, Rng::mix(order_seed, static_cast<uint64_t>(h)));
        auto map = std::make_shared<std::vector<uint32_t>>(
            nearest_node_map(traj.frames[f].positions, traj.frames[f + 1].positions));
        v = ad::gather_rows(out.v_next, map);
        p = ad::gather_rows(out.p_next, map);
        ad::Var<double> term =
            ad::add(ad::mean_square(ad::sub(v, tape.constant(norm_v(traj.frames[f + 1].velocity)))),
                    ad::scale(ad::mean_square(
                                  ad::sub(p, tape.constant(norm_p(traj.frames[f + 1].pressure)))),
                              alpha));
        loss = loss.valid() ? ad::add(loss, term) : term;
    }

    const double value = loss.value()(0, 0);
    if (with_grads) {
        tape.backward(loss);
        grads_out->clear();
        for (auto bvar : bound) grads_out->push_back(tape.grad(bvar));
    }
    return value;
}

}  // namespace

double eval_window_loss(ModelParams<double>& params, const ModelConfig& cfg,
                        const Trajectory& traj, const std::vector<ClusterAssignment>& clusters,
                        const NormStats& stats, size_t start, int horizon, double alpha,
                        uint64_t order_seed) {
    if (traj.frames.size() < start + static_cast<size_t>(horizon) + 1)
        throw DataError("eval_window_loss: window exceeds the trajectory");
    return window_loss(params, cfg, traj, clusters, stats, start, horizon, alpha, order_seed,
                       false, nullptr);
}

FdCheckReport finite_difference_check(ModelParams<double>& params, const ModelConfig& cfg,
                                      const Trajectory& example,
                                      const std::vector<ClusterAssignment>& clusters,
                                      const NormStats& stats, int horizon, double alpha,
                                      int num_samples, double eps, uint64_t sample_seed,
                                      uint64_t order_seed) {
    if (example.frames.size() < static_cast<size_t>(horizon) + 1)
        throw DataError("finite_difference_check: example needs at least horizon+1 frames");

    std::vector<ad::Mat<double>> analytic;
    const double base = window_loss(params, cfg, example, clusters, stats, 0, horizon, alpha,
                                    order_seed, true, &analytic);
    if (!std::isfinite(base)) throw NumericError("finite_difference_check: non-finite loss");

    std::vector<ad::Mat<double>*> slots;
    std::vector<std::string> names;
    params.visit([&](const std::string& name, ad::Mat<double>& m) {
        slots.push_back(&m);
        names.push_back(name);
    });

    int64_t total = 0;
    for (auto* s : slots) total += s->size();

    Rng rng(Rng::mix(sample_seed, 0x6664636bULL));
    const auto want = std::min<int64_t>(num_samples, total);
    std::vector<uint64_t> picks;
    {
        std::vector<uint8_t> taken(static_cast<size_t>(total), 0);
        while (static_cast<int64_t>(picks.size()) < want) {
            const uint64_t flat = rng.uniform_int(static_cast<uint64_t>(total));
            if (taken[flat]) continue;
            taken[flat] = 1;
            picks.push_back(flat);
        }
    }

    FdCheckReport report;
    for (const uint64_t flat : picks) {
        // locate tensor and element
        uint64_t rem = flat;
        size_t slot = 0;
        while (rem >= static_cast<uint64_t>(slots[slot]->size())) {
            rem -= static_cast<uint64_t>(slots[slot]->size());
            ++slot;
        }
        double* elem = slots[slot]->data() + rem;
        const double saved = *elem;

        *elem = saved + eps;
        const double lp = window_loss(params, cfg, example, clusters, stats, 0, horizon, alpha,
                                      order_seed, false, nullptr);
        *elem = saved - eps;
        const double lm = window_loss(params, cfg, example, clusters, stats, 0, horizon, alpha,
                                      order_seed, false, nullptr);
        *elem = saved;

        const double numeric = (lp - lm) / (2 * eps);
        const double a = analytic[slot].data()[rem];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        const double rel = std::abs(a - numeric) / denom;
        if (!std::isfinite(rel)) throw NumericError("finite_difference_check: non-finite value");
        ++report.num_checked;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_tensor = names[slot];
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    return report;
}

GradcheckSetup make_gradcheck_setup(uint64_t seed, int pressure_channels) {
    Rng rng(Rng::mix(seed, 0x67636b73ULL));

    // 12 jittered grid points in the unit square, triangulated.
    std::vector<Vec2> pts;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            pts.emplace_back((c + 0.5 + 0.3 * (rng.uniform() - 0.5)) / 4.0,
                             (r + 0.5 + 0.3 * (rng.uniform() - 0.5)) / 3.0);
    auto tri = delaunay_triangulate(pts);

    Trajectory traj;
    traj.dt = 0.1;
    traj.geometry_tag = "gradcheck";
    traj.seed = seed;
    const auto n = static_cast<Eigen::Index>(pts.size());
    for (int f = 0; f < 3; ++f) {
        MeshFrame frame;
        frame.positions.resize(n, 2);
        for (Eigen::Index i = 0; i < n; ++i)
            frame.positions.row(i) = pts[static_cast<size_t>(i)].transpose();
        frame.node_types.assign(static_cast<size_t>(n), NodeType::Interior);
        frame.node_types[0] = NodeType::Wall;
        frame.node_types[1] = NodeType::Inlet;
        frame.node_types[2] = NodeType::Outlet;
        frame.velocity.resize(n, 2);
        frame.pressure.resize(n, pressure_channels);
        for (Eigen::Index i = 0; i < n; ++i) {
            frame.velocity(i, 0) = rng.uniform(-1.0, 1.0);
            frame.velocity(i, 1) = rng.uniform(-1.0, 1.0);
            for (int c = 0; c < pressure_channels; ++c) frame.pressure(i, c) = rng.uniform(-1.0, 1.0);
        }
        frame.edges = tri.edges;
        traj.frames.push_back(std::move(frame));
    }

    GradcheckSetup setup;
    setup.clusters = cluster_trajectory(traj, 4, seed);  // 12 nodes / 4 -> 3 clusters
    setup.trajectory = std::move(traj);
    setup.stats.v_mean = Vec2(0.0, 0.0);
    setup.stats.v_std = 1.0;
    setup.stats.p_mean = Eigen::VectorXd::Zero(pressure_channels);
    setup.stats.p_std = 1.0;
    return setup;
}

}  // namespace flowcast
