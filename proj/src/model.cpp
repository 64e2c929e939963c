#include "flowcast/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flowcast {

std::string to_string(AttentionMode mode) {
    switch (mode) {
        case AttentionMode::Full: return "full";
        case AttentionMode::OneRing: return "one_ring";
        case AttentionMode::Average: return "average";
        case AttentionMode::GnnCoarse: return "gnn_coarse";
    }
    return "full";
}

AttentionMode attention_mode_from_string(const std::string& s) {
    if (s == "full") return AttentionMode::Full;
    if (s == "one_ring" || s == "one-ring") return AttentionMode::OneRing;
    if (s == "average") return AttentionMode::Average;
    if (s == "gnn_coarse" || s == "gnn-coarse") return AttentionMode::GnnCoarse;
    throw DataError("unknown attention mode: " + s);
}

void ModelConfig::validate() const {
    if (hidden < 1 || gnn_layers < 1 || token_width < 1 || attn_blocks < 1 || heads < 1)
        throw DataError("model config: hidden, gnn_layers, token_width, attn_blocks, heads must be >= 1");
    if (token_width % heads != 0)
        throw DataError("model config: token_width must be divisible by heads");
    if (cluster_size < 1) throw DataError("model config: cluster_size must be >= 1");
    if (pressure_channels < 1) throw DataError("model config: pressure_channels must be >= 1");
    if (pe_min_band > pe_max_band) throw DataError("model config: empty positional encoding band range");
}

Eigen::VectorXd positional_encoding(const Vec2& x, int min_band, int max_band) {
    const int bands = max_band - min_band + 1;
    Eigen::VectorXd out(4 * bands);
    int at = 0;
    for (int i = min_band; i <= max_band; ++i) {
        const double w = std::pow(2.0, i) * std::numbers::pi;
        out(at++) = std::cos(w * x.x());
        out(at++) = std::cos(w * x.y());
        out(at++) = std::sin(w * x.x());
        out(at++) = std::sin(w * x.y());
    }
    return out;
}

// --- parameter shaping -----------------------------------------------------------

template <typename T>
ModelParams<T> ModelParams<T>::sized(const ModelConfig& cfg) {
    cfg.validate();
    const Eigen::Index h = cfg.hidden;
    const Eigen::Index w = cfg.token_width;
    const Eigen::Index f = cfg.local_enc_dim();
    const Eigen::Index pe = cfg.pe_dim();

    ModelParams p;
    p.phi_node.resize({cfg.node_in_dim(), h, h}, nn::Act::Relu, false);
    p.phi_edge.resize({3, h, h}, nn::Act::Relu, false);

    p.encoder.resize(static_cast<size_t>(cfg.gnn_layers));
    for (auto& layer : p.encoder) {
        layer.psi_edge.resize({2 * (h + f) + h, h, h, h}, nn::Act::Relu, true);
        layer.psi_node.resize({(h + f) + h, h, h, h}, nn::Act::Relu, true);
    }

    p.gru.resize(h + f, w);
    p.phi_cluster.resize({w, w, w}, nn::Act::Relu, false);

    p.blocks.resize(static_cast<size_t>(cfg.attn_blocks));
    for (auto& b : p.blocks) {
        b.ln1.resize(w);
        b.q.resize(w + pe, w);
        // The key projection carries no bias: a shared shift of all keys moves
        // every logit in a softmax row equally and cancels exactly.
        b.k.resize(w + pe, w, false);
        b.v.resize(w + pe, w);
        b.out.resize(w, w);
        b.ln2.resize(w);
        b.ffn.resize({w, w, w}, nn::Act::Relu, false);
        b.coarse_edge_enc.resize({3, w, w}, nn::Act::Relu, false);
        b.coarse_psi_edge.resize({2 * (w + pe) + w, w, w, w}, nn::Act::Relu, true);
        b.coarse_psi_node.resize({(w + pe) + w, w, w, w}, nn::Act::Relu, true);
    }
    p.final_ln.resize(w);

    const Eigen::Index d = h + w + f;  // decoder node input [eta, w_k, f]
    p.dec_psi_edge.resize({2 * d + h, h, h, h}, nn::Act::Relu, true);
    p.dec_psi_node.resize({d + h, h, h, h}, nn::Act::Relu, true);
    p.head.resize({h, h, h, cfg.out_dim()}, nn::Act::Tanh, false);
    return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& cfg, uint64_t seed) {
    ModelParams p = sized(cfg);
    Rng rng(Rng::mix(seed, 0x6d6f64656cULL));

    nn::init_mlp(p.phi_node, rng);
    nn::init_mlp(p.phi_edge, rng);
    for (auto& layer : p.encoder) {
        nn::init_mlp(layer.psi_edge, rng);
        nn::init_mlp(layer.psi_node, rng);
    }
    nn::init_gru(p.gru, rng);
    nn::init_mlp(p.phi_cluster, rng);
    for (auto& b : p.blocks) {
        nn::init_layer_norm(b.ln1);
        nn::init_linear(b.q, rng);
        nn::init_linear(b.k, rng);
        nn::init_linear(b.v, rng);
        nn::init_linear(b.out, rng);
        nn::init_layer_norm(b.ln2);
        nn::init_mlp(b.ffn, rng);
        nn::init_mlp(b.coarse_edge_enc, rng);
        nn::init_mlp(b.coarse_psi_edge, rng);
        nn::init_mlp(b.coarse_psi_node, rng);
    }
    nn::init_layer_norm(p.final_ln);
    nn::init_mlp(p.dec_psi_edge, rng);
    nn::init_mlp(p.dec_psi_node, rng);
    nn::init_mlp(p.head, rng);

    // Zeroed output layer: a fresh model predicts zero deltas, i.e. persistence.
    p.head.layers.back().w.setZero();
    p.head.layers.back().b.setZero();
    return p;
}

template <typename T>
ModelVars<T> bind_params(Tape<T>& tape, const ModelParams<T>& params, bool needs_grad,
                         std::vector<Var<T>>* bound) {
    nn::Binder<T> binder{&tape, bound, needs_grad};
    ModelVars<T> v;
    v.phi_node = binder.bind(params.phi_node);
    v.phi_edge = binder.bind(params.phi_edge);
    for (auto& layer : params.encoder)
        v.encoder.push_back({binder.bind(layer.psi_edge), binder.bind(layer.psi_node)});
    v.gru = binder.bind(params.gru);
    v.phi_cluster = binder.bind(params.phi_cluster);
    for (auto& b : params.blocks) {
        typename ModelVars<T>::AttnBlock bv;
        bv.ln1 = binder.bind(b.ln1);
        bv.q = binder.bind(b.q);
        bv.k = binder.bind(b.k);
        bv.v = binder.bind(b.v);
        bv.out = binder.bind(b.out);
        bv.ln2 = binder.bind(b.ln2);
        bv.ffn = binder.bind(b.ffn);
        bv.coarse_edge_enc = binder.bind(b.coarse_edge_enc);
        bv.coarse_psi_edge = binder.bind(b.coarse_psi_edge);
        bv.coarse_psi_node = binder.bind(b.coarse_psi_node);
        v.blocks.push_back(std::move(bv));
    }
    v.final_ln = binder.bind(params.final_ln);
    v.dec_psi_edge = binder.bind(params.dec_psi_edge);
    v.dec_psi_node = binder.bind(params.dec_psi_node);
    v.head = binder.bind(params.head);
    return v;
}

// --- frame context -----------------------------------------------------------------

template <typename T>
FrameContext<T> make_frame_context(const MeshFrame& frame, const ClusterAssignment& assignment,
                                   const ClusterGeometry& geometry, const ModelConfig& cfg) {
    FrameContext<T> ctx;
    const auto n = frame.num_nodes();
    ctx.num_nodes = n;
    ctx.num_clusters = assignment.num_clusters;

    auto recv = std::make_shared<std::vector<uint32_t>>();
    auto send = std::make_shared<std::vector<uint32_t>>();
    recv->reserve(2 * frame.edges.size());
    send->reserve(2 * frame.edges.size());
    for (const auto& e : frame.edges) {
        recv->push_back(e.a);
        send->push_back(e.b);
        recv->push_back(e.b);
        send->push_back(e.a);
    }
    ctx.recv = recv;
    ctx.send = send;

    const auto ne = static_cast<Eigen::Index>(recv->size());
    ctx.edge_inputs.resize(ne, 3);
    for (Eigen::Index d = 0; d < ne; ++d) {
        const Vec2 off = frame.positions.row((*recv)[static_cast<size_t>(d)]) -
                         frame.positions.row((*send)[static_cast<size_t>(d)]);
        ctx.edge_inputs(d, 0) = static_cast<T>(off.x());
        ctx.edge_inputs(d, 1) = static_cast<T>(off.y());
        ctx.edge_inputs(d, 2) = static_cast<T>(off.norm());
    }

    ctx.node_onehot = Mat<T>::Zero(n, 4);
    for (Eigen::Index i = 0; i < n; ++i)
        ctx.node_onehot(i, static_cast<int>(frame.node_types[static_cast<size_t>(i)])) = T(1);

    ctx.local_enc.resize(n, cfg.local_enc_dim());
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec2 x = frame.positions.row(i).transpose();
        const uint32_t k = assignment.assignment[static_cast<size_t>(i)];
        const Vec2 rel = geometry.barycenters.row(k).transpose() - x;
        ctx.local_enc.row(i).head(cfg.pe_dim()) =
            positional_encoding(x, cfg.pe_min_band, cfg.pe_max_band).cast<T>();
        ctx.local_enc.row(i).tail(cfg.pe_dim()) =
            positional_encoding(rel, cfg.pe_min_band, cfg.pe_max_band).cast<T>();
    }

    const auto k = assignment.num_clusters;
    ctx.bary_pe.resize(k, cfg.pe_dim());
    for (uint32_t c = 0; c < k; ++c)
        ctx.bary_pe.row(c) = positional_encoding(geometry.barycenters.row(c).transpose(),
                                                 cfg.pe_min_band, cfg.pe_max_band)
                                 .cast<T>();

    ctx.node_cluster = std::make_shared<std::vector<uint32_t>>(assignment.assignment);
    ctx.members.resize(k);
    for (uint32_t c = 0; c < k; ++c) ctx.members[c] = assignment.members_of(c);

    auto adj = std::make_shared<Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>>(
        geometry.adjacency);
    ctx.adjacency = adj;

    auto crecv = std::make_shared<std::vector<uint32_t>>();
    auto csend = std::make_shared<std::vector<uint32_t>>();
    for (uint32_t a = 0; a < k; ++a)
        for (uint32_t b = 0; b < k; ++b)
            if (a != b && (*adj)(a, b)) {
                crecv->push_back(a);
                csend->push_back(b);
            }
    ctx.coarse_recv = crecv;
    ctx.coarse_send = csend;
    ctx.coarse_edge_inputs.resize(static_cast<Eigen::Index>(crecv->size()), 3);
    for (size_t d = 0; d < crecv->size(); ++d) {
        const Vec2 off = geometry.barycenters.row((*crecv)[d]) - geometry.barycenters.row((*csend)[d]);
        ctx.coarse_edge_inputs(static_cast<Eigen::Index>(d), 0) = static_cast<T>(off.x());
        ctx.coarse_edge_inputs(static_cast<Eigen::Index>(d), 1) = static_cast<T>(off.y());
        ctx.coarse_edge_inputs(static_cast<Eigen::Index>(d), 2) = static_cast<T>(off.norm());
    }
    return ctx;
}

// --- forward graph ---------------------------------------------------------------

namespace {

/// psi([x_i, x_j, e_ij]) over directed edges, with the first layer evaluated
/// as per-part projections of the node table followed by row gathers. Avoids
/// materializing the wide concatenated edge table; identical math.
template <typename T>
Var<T> edge_message_mlp(const nn::MlpV<T>& mlp, Var<T> node_feats, Var<T> edge_feats,
                        const std::shared_ptr<const std::vector<uint32_t>>& recv,
                        const std::shared_ptr<const std::vector<uint32_t>>& send) {
    const Eigen::Index nf = node_feats.cols();
    const Eigen::Index ec = edge_feats.cols();
    Var<T> u = ad::matmul_wrows(node_feats, mlp.layers[0].w, 0, nf);
    Var<T> s = ad::matmul_wrows(node_feats, mlp.layers[0].w, nf, nf);
    Var<T> pe = ad::matmul_wrows(edge_feats, mlp.layers[0].w, 2 * nf, ec);
    Var<T> h = ad::add_rowvec(
        ad::add(ad::add(ad::gather_rows(u, recv), ad::gather_rows(s, send)), pe),
        mlp.layers[0].b);
    for (size_t i = 1; i < mlp.layers.size(); ++i) {
        h = mlp.act == nn::Act::Relu ? ad::relu(h) : ad::tanh_(h);
        h = nn::apply(mlp.layers[i], h);
    }
    if (mlp.output_norm) h = nn::apply(mlp.norm, h);
    return h;
}

}  // namespace

template <typename T>
typename StepGraph<T>::Encoded StepGraph<T>::encode(Var<T> v_norm, Var<T> p_norm) const {
    Var<T> f = tape_.constant(ctx_.local_enc);
    Var<T> onehot = tape_.constant(ctx_.node_onehot);

    Var<T> eta = nn::apply(vars_.phi_node, ad::concat_cols(v_norm, p_norm, onehot));
    Var<T> e = nn::apply(vars_.phi_edge, tape_.constant(ctx_.edge_inputs));

    for (const auto& layer : vars_.encoder) {
        Var<T> node_f = ad::concat_cols(eta, f);
        Var<T> eps = edge_message_mlp(layer.psi_edge, node_f, e, ctx_.recv, ctx_.send);
        e = ad::add(e, eps);
        Var<T> agg = ad::scatter_sum_rows(eps, ctx_.recv, ctx_.num_nodes);
        eta = ad::add(eta, nn::apply(layer.psi_node, ad::concat_cols(node_f, agg)));
    }
    return {eta, e, f};
}

template <typename T>
Var<T> StepGraph<T>::pool(const Encoded& enc, uint64_t order_seed,
                          const std::vector<std::vector<uint32_t>>* explicit_order) const {
    const auto k = static_cast<Eigen::Index>(ctx_.num_clusters);
    const Eigen::Index w = cfg_.token_width;

    // Per-cluster member order, seeded independently of cluster iteration order.
    std::vector<std::vector<uint32_t>> order(ctx_.members.size());
    size_t max_size = 0;
    for (size_t c = 0; c < ctx_.members.size(); ++c) {
        order[c] = explicit_order ? (*explicit_order)[c] : ctx_.members[c];
        if (!explicit_order) {
            Rng rng(Rng::mix(order_seed, 0x706f6f6cULL + c));
            rng.shuffle(order[c]);
        }
        max_size = std::max(max_size, order[c].size());
    }

    Var<T> inputs = ad::concat_cols(enc.eta, enc.f);
    // The input-to-gate projections are batched over all nodes up front; the
    // sequential scan only gathers the projected rows.
    Var<T> xr_all = nn::apply(vars_.gru.ir, inputs);
    Var<T> xz_all = nn::apply(vars_.gru.iz, inputs);
    Var<T> xn_all = nn::apply(vars_.gru.in, inputs);
    Var<T> h = tape_.constant(Mat<T>::Zero(k, w));

    for (size_t j = 0; j < max_size; ++j) {
        auto active = std::make_shared<std::vector<uint32_t>>();
        auto nodes = std::make_shared<std::vector<uint32_t>>();
        for (size_t c = 0; c < order.size(); ++c) {
            if (j < order[c].size()) {
                active->push_back(static_cast<uint32_t>(c));
                nodes->push_back(order[c][j]);
            }
        }
        Var<T> h_active = ad::gather_rows(h, active);
        Var<T> h_next = nn::gru_step_pre(vars_.gru, ad::gather_rows(xr_all, nodes),
                                         ad::gather_rows(xz_all, nodes),
                                         ad::gather_rows(xn_all, nodes), h_active);
        h = ad::row_update(h, active, h_next);
    }
    return nn::apply(vars_.phi_cluster, h);
}

template <typename T>
Var<T> StepGraph<T>::attend_block(Var<T> w, const typename ModelVars<T>::AttnBlock& block,
                                  AttentionRecord* record, FlopCounter* flops) const {
    const auto k = static_cast<uint64_t>(ctx_.num_clusters);
    const auto width = static_cast<uint64_t>(cfg_.token_width);
    const auto dh = static_cast<uint64_t>(cfg_.head_dim());
    const auto in_dim = width + static_cast<uint64_t>(cfg_.pe_dim());
    const auto mode = cfg_.attention_mode;

    Var<T> w1 = ad::concat_cols(nn::apply(block.ln1, w), tape_.constant(ctx_.bary_pe));
    if (flops) flops->attention_stage += 8 * k * width;  // layer norm

    Var<T> mixed;  // the MHA (or substitute) output, K x W
    if (mode == AttentionMode::GnnCoarse) {
        Var<T> ec = nn::apply(block.coarse_edge_enc, tape_.constant(ctx_.coarse_edge_inputs));
        Var<T> eps =
            edge_message_mlp(block.coarse_psi_edge, w1, ec, ctx_.coarse_recv, ctx_.coarse_send);
        Var<T> agg = ad::scatter_sum_rows(eps, ctx_.coarse_recv,
                                          static_cast<Eigen::Index>(ctx_.num_clusters));
        mixed = nn::apply(block.coarse_psi_node, ad::concat_cols(w1, agg));
        if (flops) {
            const auto ce = static_cast<uint64_t>(ctx_.coarse_recv->size());
            flops->add_gemm(ce, 3, width);
            flops->add_gemm(ce, width, width);
            flops->add_gemm(ce, 2 * in_dim + width, width);
            flops->add_gemm(ce, width, width);
            flops->add_gemm(ce, width, width);
            flops->add_gemm(k, in_dim + width, width);
            flops->add_gemm(k, width, width);
            flops->add_gemm(k, width, width);
        }
    } else {
        Var<T> q = nn::apply(block.q, w1);
        Var<T> kk = nn::apply(block.k, w1);
        Var<T> vv = nn::apply(block.v, w1);
        if (flops) {
            flops->add_gemm(k, in_dim, width);  // q
            flops->add_gemm(k, in_dim, width);  // k
            flops->add_gemm(k, in_dim, width);  // v
        }

        std::vector<Var<T>> heads;
        std::vector<Eigen::MatrixXd>* rec_heads = nullptr;
        if (record) {
            record->blocks.emplace_back();
            rec_heads = &record->blocks.back();
        }
        for (int hidx = 0; hidx < cfg_.heads; ++hidx) {
            Var<T> vh = ad::slice_cols(vv, hidx * static_cast<Eigen::Index>(dh),
                                       static_cast<Eigen::Index>(dh));
            if (mode == AttentionMode::Average) {
                heads.push_back(ad::broadcast_rows(ad::mean_rows(vh),
                                                   static_cast<Eigen::Index>(ctx_.num_clusters)));
                if (rec_heads)
                    rec_heads->push_back(Eigen::MatrixXd::Constant(
                        static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k), 1.0 / double(k)));
                if (flops) flops->attention_stage += k * dh;
                continue;
            }
            Var<T> qh = ad::slice_cols(q, hidx * static_cast<Eigen::Index>(dh),
                                       static_cast<Eigen::Index>(dh));
            Var<T> kh = ad::slice_cols(kk, hidx * static_cast<Eigen::Index>(dh),
                                       static_cast<Eigen::Index>(dh));
            Var<T> scores = ad::scale(ad::matmul_nt(qh, kh), T(1) / std::sqrt(T(dh)));
            Var<T> attn = (mode == AttentionMode::OneRing) ? ad::softmax_rows(scores, ctx_.adjacency)
                                                           : ad::softmax_rows(scores);
            heads.push_back(ad::matmul(attn, vh));
            if (rec_heads) rec_heads->push_back(attn.value().template cast<double>());
            if (flops) {
                flops->attention_matmuls += k * k * dh * 2;  // QK^T and AV multiplies
                flops->add_gemm(k, dh, k);                   // QK^T
                flops->add_gemm(k, k, dh);                   // AV
                flops->attention_stage += 5 * k * k;         // softmax and scaling
            }
        }
        mixed = heads.size() == 1 ? heads[0] : ad::concat_cols(heads);
    }

    Var<T> w3 = ad::add(w, nn::apply(block.out, mixed));
    if (flops) flops->add_gemm(k, width, width);
    Var<T> w4 = nn::apply(block.ln2, w3);
    Var<T> w5 = nn::apply(block.ffn, w4);
    if (flops) {
        flops->attention_stage += 8 * k * width;
        flops->add_gemm(k, width, width);
        flops->add_gemm(k, width, width);
    }
    return ad::add(w3, w5);
}

template <typename T>
Var<T> StepGraph<T>::attend(Var<T> tokens, AttentionRecord* record, FlopCounter* flops) const {
    if (record) {
        record->mode = cfg_.attention_mode;
        record->blocks.clear();
    }
    if (cfg_.attention_mode == AttentionMode::OneRing && !ctx_.adjacency)
        throw DataError("attend: one_ring mode requires cluster adjacency");
    Var<T> w = tokens;
    for (const auto& block : vars_.blocks) w = attend_block(w, block, record, flops);
    w = nn::apply(vars_.final_ln, w);
    if (flops)
        flops->attention_stage +=
            8 * static_cast<uint64_t>(ctx_.num_clusters) * static_cast<uint64_t>(cfg_.token_width);
    return w;
}

template <typename T>
typename StepGraph<T>::Deltas StepGraph<T>::decode(const Encoded& enc, Var<T> tokens_final) const {
    Var<T> wk = ad::gather_rows(tokens_final, ctx_.node_cluster);
    Var<T> d = ad::concat_cols(enc.eta, wk, enc.f);

    Var<T> eps = edge_message_mlp(vars_.dec_psi_edge, d, enc.e, ctx_.recv, ctx_.send);
    Var<T> agg = ad::scatter_sum_rows(eps, ctx_.recv, ctx_.num_nodes);
    Var<T> z = ad::add(enc.eta, nn::apply(vars_.dec_psi_node, ad::concat_cols(d, agg)));

    Var<T> delta = nn::apply(vars_.head, z);
    return {ad::slice_cols(delta, 0, 2), ad::slice_cols(delta, 2, cfg_.pressure_channels)};
}

template <typename T>
typename StepGraph<T>::Outputs StepGraph<T>::step(Var<T> v_norm, Var<T> p_norm, uint64_t order_seed,
                                                  AttentionRecord* record, FlopCounter* flops) const {
    Encoded enc = encode(v_norm, p_norm);
    Var<T> tokens = pool(enc, order_seed);
    Var<T> tokens_final = attend(tokens, record, flops);
    Deltas deltas = decode(enc, tokens_final);
    return {ad::add(v_norm, deltas.dv), ad::add(p_norm, deltas.dp), deltas};
}

// --- value-level model --------------------------------------------------------------

std::vector<uint32_t> nearest_node_map(const Eigen::MatrixX2d& from, const Eigen::MatrixX2d& to) {
    std::vector<uint32_t> map(static_cast<size_t>(to.rows()));
    for (Eigen::Index i = 0; i < to.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        uint32_t best_j = 0;
        for (Eigen::Index j = 0; j < from.rows(); ++j) {
            const double d = (from.row(j) - to.row(i)).squaredNorm();
            if (d < best) {
                best = d;
                best_j = static_cast<uint32_t>(j);
            }
        }
        map[static_cast<size_t>(i)] = best_j;
    }
    return map;
}

template <typename T>
Mat<T> Model<T>::normalize_velocity(const Eigen::MatrixX2d& v) const {
    MatrixXd out = v;
    out.col(0).array() -= stats.v_mean.x();
    out.col(1).array() -= stats.v_mean.y();
    out /= stats.v_std;
    return out.cast<T>();
}

template <typename T>
Mat<T> Model<T>::normalize_pressure(const MatrixXd& p) const {
    if (stats.p_mean.size() != p.cols())
        throw DataError("normalize_pressure: stats cover " + std::to_string(stats.p_mean.size()) +
                        " channels, field has " + std::to_string(p.cols()));
    MatrixXd out = p;
    for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c).array() -= stats.p_mean(c);
    out /= stats.p_std;
    return out.cast<T>();
}

template <typename T>
MeshFrame Model<T>::forward_step(const MeshFrame& frame, const ClusterAssignment& assignment,
                                 const ClusterGeometry& geometry, uint64_t order_seed,
                                 AttentionRecord* record, FlopCounter* flops) const {
    auto ctx = make_frame_context<T>(frame, assignment, geometry, config);
    Tape<T> tape;
    ModelVars<T> vars = bind_params(tape, params, false);
    StepGraph<T> graph(tape, vars, config, ctx);

    Var<T> v_norm = tape.constant(normalize_velocity(frame.velocity));
    Var<T> p_norm = tape.constant(normalize_pressure(frame.pressure));
    auto out = graph.step(v_norm, p_norm, order_seed, record, flops);

    // Physical outputs: the raw input fields plus the de-normalized deltas, so
    // a zero delta reproduces the input bits exactly.
    MeshFrame pred = frame;
    pred.velocity += out.deltas.dv.value().template cast<double>() * stats.v_std;
    pred.pressure += out.deltas.dp.value().template cast<double>() * stats.p_std;
    return pred;
}

template <typename T>
std::vector<MeshFrame> Model<T>::rollout(const MeshFrame& initial,
                                         const std::vector<const MeshFrame*>& future_geometry,
                                         int horizon, uint64_t order_seed,
                                         const std::vector<const ClusterAssignment*>* assignments,
                                         uint64_t cluster_seed) const {
    if (horizon < 1) throw DataError("rollout: horizon must be >= 1");
    if (static_cast<int>(future_geometry.size()) < horizon)
        throw DataError("rollout: need at least `horizon` future geometries, got " +
                        std::to_string(future_geometry.size()));
    for (const auto* g : future_geometry)
        if (g->pressure_channels() != initial.pressure_channels())
            throw DataError("rollout: pressure channel mismatch between frame and geometry");

    std::vector<ClusterAssignment> computed;
    auto assignment_for = [&](int i) -> const ClusterAssignment& {
        if (assignments) return *(*assignments)[static_cast<size_t>(i)];
        const MeshFrame& f = i == 0 ? initial : *future_geometry[static_cast<size_t>(i - 1)];
        computed.push_back(same_size_kmeans(f.positions, static_cast<uint32_t>(config.cluster_size),
                                            cluster_seed));
        return computed.back();
    };

    std::vector<MeshFrame> out;
    out.reserve(static_cast<size_t>(horizon));
    const MeshFrame* current = &initial;
    for (int h = 0; h < horizon; ++h) {
        const ClusterAssignment& asg = assignment_for(h);
        ClusterGeometry geom = make_cluster_geometry(current->positions, asg, current->edges);
        MeshFrame pred = forward_step(*current, asg, geom, Rng::mix(order_seed, h));

        // Transfer the predicted fields onto the next known geometry.
        const MeshFrame& next_geom = *future_geometry[static_cast<size_t>(h)];
        MeshFrame next = next_geom;
        const auto map = nearest_node_map(pred.positions, next_geom.positions);
        for (Eigen::Index i = 0; i < next.positions.rows(); ++i) {
            next.velocity.row(i) = pred.velocity.row(map[static_cast<size_t>(i)]);
            next.pressure.row(i) = pred.pressure.row(map[static_cast<size_t>(i)]);
        }
        out.push_back(std::move(next));
        current = &out.back();
    }
    return out;
}

// --- explicit instantiations -----------------------------------------------------

template struct ModelParams<float>;
template struct ModelParams<double>;
template struct FrameContext<float>;
template struct FrameContext<double>;
template class StepGraph<float>;
template class StepGraph<double>;
template class Model<float>;
template class Model<double>;

template ModelVars<float> bind_params<float>(Tape<float>&, const ModelParams<float>&, bool,
                                             std::vector<Var<float>>*);
template ModelVars<double> bind_params<double>(Tape<double>&, const ModelParams<double>&, bool,
                                               std::vector<Var<double>>*);
template FrameContext<float> make_frame_context<float>(const MeshFrame&, const ClusterAssignment&,
                                                       const ClusterGeometry&, const ModelConfig&);
template FrameContext<double> make_frame_context<double>(const MeshFrame&, const ClusterAssignment&,
                                                         const ClusterGeometry&, const ModelConfig&);

}  // namespace flowcast
