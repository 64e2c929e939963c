#pragma once

#include "flowcast/clustering.hpp"
#include "flowcast/common.hpp"
#include "flowcast/mesh.hpp"
#include "flowcast/nn.hpp"
#include "flowcast/rng.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace flowcast {

using ad::Mat;
using ad::Tape;
using ad::Var;

/// How the coarse tokens exchange information.
///   Full      - softmax attention over all tokens
///   OneRing   - attention masked to the cluster one-ring
///   Average   - attention matrix replaced by the uniform matrix 1/K
///   GnnCoarse - the MHA sub-step replaced by message passing on the coarse graph
enum class AttentionMode { Full, OneRing, Average, GnnCoarse };

std::string to_string(AttentionMode mode);
AttentionMode attention_mode_from_string(const std::string& s);

struct ModelConfig {
    int hidden = 128;       // node/edge embedding width
    int gnn_layers = 4;     // L, encoder message-passing layers
    int token_width = 512;  // W, cluster token width
    int attn_blocks = 4;    // M
    int heads = 4;
    int pe_min_band = -3;  // positional encoding exponents, inclusive
    int pe_max_band = 3;
    int cluster_size = 10;  // s
    AttentionMode attention_mode = AttentionMode::Full;
    int pressure_channels = 1;

    int pe_dim() const { return 4 * (pe_max_band - pe_min_band + 1); }  // |F(x)|, 28 by default
    int local_enc_dim() const { return 2 * pe_dim(); }                  // |f_i|, 56 by default
    int node_in_dim() const { return 2 + pressure_channels + 4; }       // v, p, onehot(type)
    int head_dim() const { return token_width / heads; }
    int out_dim() const { return 2 + pressure_channels; }

    void validate() const;
};

/// F(x): for each band i, the block [cos(2^i pi x0), cos(2^i pi x1),
/// sin(2^i pi x0), sin(2^i pi x1)], bands in ascending order.
Eigen::VectorXd positional_encoding(const Vec2& x, int min_band = -3, int max_band = 3);

/// Row-stochastic attention matrices captured during one forward step,
/// indexed [block][head]; empty in GnnCoarse mode.
struct AttentionRecord {
    AttentionMode mode = AttentionMode::Full;
    std::vector<std::vector<Eigen::MatrixXd>> blocks;
};

/// Work counters for the token-mixing stage.
struct FlopCounter {
    uint64_t attention_matmuls = 0;  // multiplies in QK^T and AV products only
    uint64_t attention_stage = 0;    // all floating-point work inside attend()

    void add_gemm(uint64_t m, uint64_t k, uint64_t n) { attention_stage += 2 * m * k * n; }
};

// --- parameters ---------------------------------------------------------------

template <typename T>
struct ModelParams {
    nn::MlpP<T> phi_node, phi_edge;

    struct EncoderLayer {
        nn::MlpP<T> psi_edge, psi_node;
    };
    std::vector<EncoderLayer> encoder;  // L entries

    nn::GruP<T> gru;
    nn::MlpP<T> phi_cluster;

    struct AttnBlock {
        nn::LayerNormP<T> ln1, ln2;
        nn::LinearP<T> q, k, v;  // (W + |F|) -> W, all heads packed
        nn::LinearP<T> out;      // W -> W
        nn::MlpP<T> ffn;
        // message-passing alternative used in GnnCoarse mode
        nn::MlpP<T> coarse_edge_enc, coarse_psi_edge, coarse_psi_node;
    };
    std::vector<AttnBlock> blocks;  // M entries
    nn::LayerNormP<T> final_ln;

    nn::MlpP<T> dec_psi_edge, dec_psi_node;
    nn::MlpP<T> head;  // TanH MLP emitting (delta_v, delta_p)

    /// Shape every tensor from the config (values uninitialized).
    static ModelParams sized(const ModelConfig& cfg);

    /// Uniform +-sqrt(1/fan_in) weights, zero biases, zeroed decoder head
    /// output layer (so a fresh model is the persistence forecaster).
    static ModelParams init(const ModelConfig& cfg, uint64_t seed);

    /// Visits every tensor as f(name, Mat<T>&), in a fixed order that defines
    /// the checkpoint layout and the optimizer slot order.
    template <typename F>
    void visit(F&& f) {
        nn::visit(phi_node, "phi_node", f);
        nn::visit(phi_edge, "phi_edge", f);
        for (size_t l = 0; l < encoder.size(); ++l) {
            const std::string p = "enc" + std::to_string(l);
            nn::visit(encoder[l].psi_edge, p + ".psi_edge", f);
            nn::visit(encoder[l].psi_node, p + ".psi_node", f);
        }
        nn::visit(gru, "gru", f);
        nn::visit(phi_cluster, "phi_cluster", f);
        for (size_t m = 0; m < blocks.size(); ++m) {
            const std::string p = "attn" + std::to_string(m);
            auto& b = blocks[m];
            nn::visit(b.ln1, p + ".ln1", f);
            nn::visit(b.q, p + ".q", f);
            nn::visit(b.k, p + ".k", f);
            nn::visit(b.v, p + ".v", f);
            nn::visit(b.out, p + ".out", f);
            nn::visit(b.ln2, p + ".ln2", f);
            nn::visit(b.ffn, p + ".ffn", f);
            nn::visit(b.coarse_edge_enc, p + ".coarse_edge_enc", f);
            nn::visit(b.coarse_psi_edge, p + ".coarse_psi_edge", f);
            nn::visit(b.coarse_psi_node, p + ".coarse_psi_node", f);
        }
        nn::visit(final_ln, "final_ln", f);
        nn::visit(dec_psi_edge, "dec.psi_edge", f);
        nn::visit(dec_psi_node, "dec.psi_node", f);
        nn::visit(head, "dec.head", f);
    }

    int64_t parameter_count() {
        int64_t n = 0;
        visit([&](const std::string&, Mat<T>& m) { n += m.size(); });
        return n;
    }

    template <typename U>
    ModelParams<U> cast(const ModelConfig& cfg) {
        ModelParams<U> out = ModelParams<U>::sized(cfg);
        std::vector<Mat<T>*> src;
        visit([&](const std::string&, Mat<T>& m) { src.push_back(&m); });
        size_t i = 0;
        out.visit([&](const std::string&, Mat<U>& m) { m = src[i++]->template cast<U>(); });
        return out;
    }
};

template <typename T>
struct ModelVars {
    nn::MlpV<T> phi_node, phi_edge;
    struct EncoderLayer {
        nn::MlpV<T> psi_edge, psi_node;
    };
    std::vector<EncoderLayer> encoder;
    nn::GruV<T> gru;
    nn::MlpV<T> phi_cluster;
    struct AttnBlock {
        nn::LayerNormV<T> ln1, ln2;
        nn::LinearV<T> q, k, v, out;
        nn::MlpV<T> ffn;
        nn::MlpV<T> coarse_edge_enc, coarse_psi_edge, coarse_psi_node;
    };
    std::vector<AttnBlock> blocks;
    nn::LayerNormV<T> final_ln;
    nn::MlpV<T> dec_psi_edge, dec_psi_node;
    nn::MlpV<T> head;
};

/// Registers every parameter tensor on the tape, in visit order. `bound`, when
/// given, receives the leaves in the same order (used to read gradients back).
template <typename T>
ModelVars<T> bind_params(Tape<T>& tape, const ModelParams<T>& params, bool needs_grad,
                         std::vector<Var<T>>* bound = nullptr);

// --- per-frame constants --------------------------------------------------------

/// Everything the forward pass needs that depends only on geometry, clustering
/// and config (not on fields or parameters): directed edges with raw features,
/// local encodings f_i, one-hot types, barycenter encodings, masks.
template <typename T>
struct FrameContext {
    Eigen::Index num_nodes = 0;
    uint32_t num_clusters = 0;
    std::shared_ptr<const std::vector<uint32_t>> recv, send;  // directed edges, both orientations
    Mat<T> edge_inputs;                                       // 2E x 3: (xi - xj, |xi - xj|)
    Mat<T> node_onehot;                                       // N x 4
    Mat<T> local_enc;                                         // N x 56, f_i
    Mat<T> bary_pe;                                           // K x 28, F(barycenter)
    std::shared_ptr<const std::vector<uint32_t>> node_cluster;  // N, cluster of each node
    std::vector<std::vector<uint32_t>> members;                 // K member lists, ascending
    std::shared_ptr<const Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>> adjacency;
    std::shared_ptr<const std::vector<uint32_t>> coarse_recv, coarse_send;  // coarse graph, no self loops
    Mat<T> coarse_edge_inputs;                                              // directed coarse edges x 3
};

template <typename T>
FrameContext<T> make_frame_context(const MeshFrame& frame, const ClusterAssignment& assignment,
                                   const ClusterGeometry& geometry, const ModelConfig& cfg);

// --- forward graph ---------------------------------------------------------------

/// Builds the forward computation for one time step on an existing tape.
/// Field inputs are tape nodes, so multi-step unrolls differentiate through
/// the whole horizon.
template <typename T>
class StepGraph {
public:
    StepGraph(Tape<T>& tape, const ModelVars<T>& vars, const ModelConfig& cfg,
              const FrameContext<T>& ctx)
        : tape_(tape), vars_(vars), cfg_(cfg), ctx_(ctx) {}

    struct Encoded {
        Var<T> eta;  // N x hidden
        Var<T> e;    // 2E x hidden, directed
        Var<T> f;    // N x 56 constant
    };

    /// Node and edge encoders followed by L residual message-passing layers.
    /// `v_norm`/`p_norm` are fields in normalized units.
    Encoded encode(Var<T> v_norm, Var<T> p_norm) const;

    /// Sequential GRU pooling of each cluster in a seeded random member order.
    /// `explicit_order`, when given, overrides the seeded per-cluster orders
    /// (one node sequence per cluster).
    Var<T> pool(const Encoded& enc, uint64_t order_seed,
                const std::vector<std::vector<uint32_t>>* explicit_order = nullptr) const;

    /// M pre-LN attention blocks plus the final layer norm.
    Var<T> attend(Var<T> tokens, AttentionRecord* record = nullptr,
                  FlopCounter* flops = nullptr) const;

    struct Deltas {
        Var<T> dv;  // N x 2, normalized units
        Var<T> dp;  // N x Pc
    };

    /// Decoder GNN over mesh edges plus the TanH head.
    Deltas decode(const Encoded& enc, Var<T> tokens_final) const;

    struct Outputs {
        Var<T> v_next, p_next;  // normalized units
        Deltas deltas;
    };

    /// encode -> pool -> attend -> decode -> residual update.
    Outputs step(Var<T> v_norm, Var<T> p_norm, uint64_t order_seed,
                 AttentionRecord* record = nullptr, FlopCounter* flops = nullptr) const;

private:
    Var<T> attend_block(Var<T> w, const typename ModelVars<T>::AttnBlock& block,
                        AttentionRecord* record, FlopCounter* flops) const;

    Tape<T>& tape_;
    const ModelVars<T>& vars_;
    const ModelConfig& cfg_;
    const FrameContext<T>& ctx_;
};

// --- value-level model ------------------------------------------------------------

/// Nearest-node transfer map: result[i] = index of the node in `from` closest
/// to `to` row i (ties to the lower index).
std::vector<uint32_t> nearest_node_map(const Eigen::MatrixX2d& from, const Eigen::MatrixX2d& to);

/// The mesh transformer with its normalization statistics. `T` is the compute
/// precision; parameters are held in the same precision.
template <typename T>
class Model {
public:
    ModelConfig config;
    ModelParams<T> params;
    NormStats stats;

    Model(ModelConfig cfg, ModelParams<T> p, NormStats s)
        : config(std::move(cfg)), params(std::move(p)), stats(std::move(s)) {}

    static Model init(const ModelConfig& cfg, uint64_t seed, NormStats stats = {}) {
        cfg.validate();
        if (stats.p_mean.size() == 0)
            stats.p_mean = Eigen::VectorXd::Zero(cfg.pressure_channels);
        return Model(cfg, ModelParams<T>::init(cfg, seed), std::move(stats));
    }

    /// One forecast step; returns a frame with the input geometry and the
    /// predicted physical fields at t+1.
    MeshFrame forward_step(const MeshFrame& frame, const ClusterAssignment& assignment,
                           const ClusterGeometry& geometry, uint64_t order_seed,
                           AttentionRecord* record = nullptr, FlopCounter* flops = nullptr) const;

    /// Autoregressive rollout over `horizon` steps. `future_geometry[i]` is the
    /// known mesh at t+1+i (fields ignored); predicted fields are transferred
    /// between meshes by nearest-node lookup. `assignments`, when given, holds
    /// the cluster assignment for the input frame followed by one per future
    /// geometry; otherwise clusters are computed with `cluster_seed`.
    std::vector<MeshFrame> rollout(const MeshFrame& initial,
                                   const std::vector<const MeshFrame*>& future_geometry,
                                   int horizon, uint64_t order_seed,
                                   const std::vector<const ClusterAssignment*>* assignments = nullptr,
                                   uint64_t cluster_seed = 0) const;

    /// Normalized field matrices for a frame.
    Mat<T> normalize_velocity(const Eigen::MatrixX2d& v) const;
    Mat<T> normalize_pressure(const MatrixXd& p) const;
};

using ModelF = Model<float>;
using ModelD = Model<double>;

}  // namespace flowcast
