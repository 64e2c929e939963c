#pragma once

#include "flowcast/rng.hpp"
#include "flowcast/tape.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace flowcast::nn {

using ad::Mat;
using ad::Tape;
using ad::Var;

enum class Act { Relu, Tanh };

// --- parameter structs (plain storage) ---------------------------------------

template <typename T>
struct LinearP {
    Mat<T> w;  // in x out
    Mat<T> b;  // 1 x out; absent when has_bias is false
    bool has_bias = true;

    void resize(Eigen::Index in, Eigen::Index out, bool bias = true) {
        w.resize(in, out);
        has_bias = bias;
        b.resize(1, bias ? out : 0);
    }
};

template <typename T>
struct LayerNormP {
    Mat<T> gamma;  // 1 x c
    Mat<T> beta;   // 1 x c

    void resize(Eigen::Index c) {
        gamma.resize(1, c);
        beta.resize(1, c);
    }
};

/// MLP with a fixed activation between layers (never after the last linear)
/// and an optional layer normalization on the output.
template <typename T>
struct MlpP {
    std::vector<LinearP<T>> layers;
    Act act = Act::Relu;
    bool output_norm = false;
    LayerNormP<T> norm;

    /// dims = {in, h1, ..., out}
    void resize(const std::vector<Eigen::Index>& dims, Act activation, bool with_norm) {
        act = activation;
        output_norm = with_norm;
        layers.resize(dims.size() - 1);
        for (size_t i = 0; i + 1 < dims.size(); ++i) layers[i].resize(dims[i], dims[i + 1]);
        if (with_norm) norm.resize(dims.back());
    }

    Eigen::Index out_dim() const { return layers.back().w.cols(); }
};

/// Single-layer GRU cell parameters (reset, update, candidate gates; separate
/// input and hidden biases).
template <typename T>
struct GruP {
    LinearP<T> ir, iz, in;  // input -> gates
    LinearP<T> hr, hz, hn;  // hidden -> gates

    void resize(Eigen::Index in_dim, Eigen::Index hidden) {
        for (auto* l : {&ir, &iz, &in}) l->resize(in_dim, hidden);
        for (auto* l : {&hr, &hz, &hn}) l->resize(hidden, hidden);
    }
};

// --- parameter visitation -----------------------------------------------------

/// Callback signature: f(const std::string& name, Mat<T>& tensor).
template <typename T, typename F>
void visit(LinearP<T>& p, const std::string& name, F&& f) {
    f(name + ".w", p.w);
    if (p.has_bias) f(name + ".b", p.b);
}

template <typename T, typename F>
void visit(LayerNormP<T>& p, const std::string& name, F&& f) {
    f(name + ".gamma", p.gamma);
    f(name + ".beta", p.beta);
}

template <typename T, typename F>
void visit(MlpP<T>& p, const std::string& name, F&& f) {
    for (size_t i = 0; i < p.layers.size(); ++i)
        visit(p.layers[i], name + ".l" + std::to_string(i), f);
    if (p.output_norm) visit(p.norm, name + ".ln", f);
}

template <typename T, typename F>
void visit(GruP<T>& p, const std::string& name, F&& f) {
    visit(p.ir, name + ".ir", f);
    visit(p.iz, name + ".iz", f);
    visit(p.in, name + ".in", f);
    visit(p.hr, name + ".hr", f);
    visit(p.hz, name + ".hz", f);
    visit(p.hn, name + ".hn", f);
}

// --- initialization -----------------------------------------------------------

/// Weights uniform in +-sqrt(1/fan_in) (fan_in = input dimension), biases
/// zero. Entries are drawn in column-major storage order.
template <typename T>
void init_linear(LinearP<T>& p, Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(p.w.rows()));
    for (Eigen::Index i = 0; i < p.w.size(); ++i)
        p.w.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    if (p.has_bias) p.b.setZero();
}

template <typename T>
void init_layer_norm(LayerNormP<T>& p) {
    p.gamma.setOnes();
    p.beta.setZero();
}

template <typename T>
void init_mlp(MlpP<T>& p, Rng& rng) {
    for (auto& l : p.layers) init_linear(l, rng);
    if (p.output_norm) init_layer_norm(p.norm);
}

template <typename T>
void init_gru(GruP<T>& p, Rng& rng) {
    for (auto* l : {&p.ir, &p.iz, &p.in, &p.hr, &p.hz, &p.hn}) init_linear(*l, rng);
}

// --- tape application -----------------------------------------------------------

/// Mirror structs holding tape handles for one forward build.

template <typename T>
struct LinearV {
    Var<T> w, b;  // b is invalid when the layer has no bias
};

template <typename T>
struct LayerNormV {
    Var<T> gamma, beta;
};

template <typename T>
struct MlpV {
    std::vector<LinearV<T>> layers;
    Act act = Act::Relu;
    bool output_norm = false;
    LayerNormV<T> norm;
};

template <typename T>
struct GruV {
    LinearV<T> ir, iz, in, hr, hz, hn;
};

/// Registers parameter tensors as tape leaves. The traversal order matches
/// visit(), which the trainer relies on to pair leaves with tensors.
template <typename T>
struct Binder {
    Tape<T>* tape;
    std::vector<Var<T>>* bound = nullptr;  // optional flat collection, visit order
    bool needs_grad = true;

    Var<T> leaf(const Mat<T>& m) {
        Var<T> v = tape->leaf(m, needs_grad);
        if (bound) bound->push_back(v);
        return v;
    }

    LinearV<T> bind(const LinearP<T>& p) {
        return {leaf(p.w), p.has_bias ? leaf(p.b) : Var<T>{}};
    }

    LayerNormV<T> bind(const LayerNormP<T>& p) { return {leaf(p.gamma), leaf(p.beta)}; }

    MlpV<T> bind(const MlpP<T>& p) {
        MlpV<T> v;
        v.act = p.act;
        v.output_norm = p.output_norm;
        for (const auto& l : p.layers) v.layers.push_back(bind(l));
        if (p.output_norm) v.norm = bind(p.norm);
        return v;
    }

    GruV<T> bind(const GruP<T>& p) {
        return {bind(p.ir), bind(p.iz), bind(p.in), bind(p.hr), bind(p.hz), bind(p.hn)};
    }
};

template <typename T>
Var<T> apply(const LinearV<T>& l, Var<T> x) {
    return l.b.valid() ? ad::linear(x, l.w, l.b) : ad::matmul(x, l.w);
}

template <typename T>
Var<T> apply(const LayerNormV<T>& ln, Var<T> x) {
    return ad::layer_norm(x, ln.gamma, ln.beta);
}

template <typename T>
Var<T> apply(const MlpV<T>& mlp, Var<T> x) {
    Var<T> h = x;
    for (size_t i = 0; i < mlp.layers.size(); ++i) {
        h = apply(mlp.layers[i], h);
        if (i + 1 < mlp.layers.size()) h = mlp.act == Act::Relu ? ad::relu(h) : ad::tanh_(h);
    }
    if (mlp.output_norm) h = apply(mlp.norm, h);
    return h;
}

/// GRU step with the input-to-gate projections already applied (they can be
/// batched over all nodes before the sequential scan).
template <typename T>
Var<T> gru_step_pre(const GruV<T>& g, Var<T> xr, Var<T> xz, Var<T> xn, Var<T> h) {
    Var<T> r = ad::sigmoid(ad::add(xr, apply(g.hr, h)));
    Var<T> z = ad::sigmoid(ad::add(xz, apply(g.hz, h)));
    Var<T> n = ad::tanh_(ad::add(xn, ad::cmul(r, apply(g.hn, h))));
    // n + z * (h - n)
    return ad::add(n, ad::cmul(z, ad::sub(h, n)));
}

/// One GRU step: h' = (1 - z) * n + z * h.
template <typename T>
Var<T> gru_step(const GruV<T>& g, Var<T> x, Var<T> h) {
    return gru_step_pre(g, apply(g.ir, x), apply(g.iz, x), apply(g.in, x), h);
}

}  // namespace flowcast::nn
