#pragma once

#include "flowcast/common.hpp"

#include <cassert>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

namespace flowcast::ad {

// Row-major storage: the forward graph is dominated by row gathers,
// scatters and per-row reductions over node and edge tables.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; invalidated by Tape::clear().
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int32_t idx = -1;

    bool valid() const { return tape != nullptr && idx >= 0; }
    const Mat<T>& value() const { return tape->value(*this); }
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

/// Dynamic reverse-mode tape over dense matrices. Every operation records a
/// closure that scatters the output gradient back to its inputs; backward()
/// walks the recorded nodes once, in reverse.
template <typename T>
class Tape {
public:
    using BackFn = std::function<void(Tape&, const Mat<T>&)>;

    Var<T> leaf(Mat<T> value, bool needs_grad = false) {
        return push(std::move(value), needs_grad, nullptr);
    }

    Var<T> constant(Mat<T> value) { return leaf(std::move(value), false); }

    Var<T> scalar(T v) {
        Mat<T> m(1, 1);
        m(0, 0) = v;
        return leaf(std::move(m), false);
    }

    const Mat<T>& value(Var<T> v) const { return nodes_[static_cast<size_t>(v.idx)].value; }

    /// Gradient of the last backward() root w.r.t. node v (zero matrix if the
    /// node was not reached).
    Mat<T> grad(Var<T> v) const {
        const auto& g = grads_[static_cast<size_t>(v.idx)];
        if (g.size() == 0) return Mat<T>::Zero(value(v).rows(), value(v).cols());
        return g;
    }

    void backward(Var<T> root) {
        assert(root.tape == this);
        assert(value(root).size() == 1 && "backward expects a scalar root");
        grads_.assign(nodes_.size(), Mat<T>());
        grads_[static_cast<size_t>(root.idx)] = Mat<T>::Ones(1, 1);
        for (int32_t i = root.idx; i >= 0; --i) {
            auto& node = nodes_[static_cast<size_t>(i)];
            if (!node.back || !node.needs_grad) continue;
            const auto& g = grads_[static_cast<size_t>(i)];
            if (g.size() == 0) continue;
            node.back(*this, g);
        }
    }

    /// Adds an arbitrary Eigen expression to a node's gradient without
    /// materializing intermediate copies.
    template <typename Derived>
    void accumulate(int32_t idx, const Eigen::MatrixBase<Derived>& g) {
        if (!nodes_[static_cast<size_t>(idx)].needs_grad) return;
        auto& slot = grads_[static_cast<size_t>(idx)];
        if (slot.size() == 0) {
            slot.resize(g.rows(), g.cols());
            slot.noalias() = g;
        } else {
            slot.noalias() += g;
        }
    }

    void accumulate_move(int32_t idx, Mat<T>&& g) {
        if (!nodes_[static_cast<size_t>(idx)].needs_grad) return;
        auto& slot = grads_[static_cast<size_t>(idx)];
        if (slot.size() == 0)
            slot = std::move(g);
        else
            slot += g;
    }

    /// Mutable gradient storage for ops that scatter into sub-blocks; zeroed
    /// on first access. Callers must check needs_grad first.
    Mat<T>& grad_slot(int32_t idx) {
        auto& slot = grads_[static_cast<size_t>(idx)];
        if (slot.size() == 0) {
            const auto& v = nodes_[static_cast<size_t>(idx)].value;
            slot = Mat<T>::Zero(v.rows(), v.cols());
        }
        return slot;
    }

    bool needs_grad(int32_t idx) const { return nodes_[static_cast<size_t>(idx)].needs_grad; }

    /// Attach the backward closure after the node exists, for ops whose
    /// backward reads the node's own output value.
    void set_back(Var<T> v, BackFn back) { nodes_[static_cast<size_t>(v.idx)].back = std::move(back); }

    void clear() {
        nodes_.clear();
        grads_.clear();
    }

    size_t size() const { return nodes_.size(); }

    Var<T> push(Mat<T> value, bool needs_grad, BackFn back) {
        nodes_.push_back({std::move(value), std::move(back), needs_grad});
        return Var<T>{this, static_cast<int32_t>(nodes_.size() - 1)};
    }

private:
    struct Node {
        Mat<T> value;
        BackFn back;
        bool needs_grad;
    };
    std::vector<Node> nodes_;
    std::vector<Mat<T>> grads_;
};

// --- elementwise and arithmetic ---------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    Tape<T>& t = *a.tape;
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    return t.push(t.value(a) + t.value(b), ng, [ia = a.idx, ib = b.idx](Tape<T>& tp, const Mat<T>& g) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, g);
    });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    Tape<T>& t = *a.tape;
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    return t.push(t.value(a) - t.value(b), ng, [ia = a.idx, ib = b.idx](Tape<T>& tp, const Mat<T>& g) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, -g);
    });
}

/// Elementwise product.
template <typename T>
Var<T> cmul(Var<T> a, Var<T> b) {
    Tape<T>& t = *a.tape;
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    return t.push(t.value(a).cwiseProduct(t.value(b)), ng,
                  [ia = a.idx, ib = b.idx](Tape<T>& tp, const Mat<T>& g) {
                      tp.accumulate(ia, g.cwiseProduct(tp.value(Var<T>{&tp, ib})));
                      tp.accumulate(ib, g.cwiseProduct(tp.value(Var<T>{&tp, ia})));
                  });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
    Tape<T>& t = *a.tape;
    return t.push(t.value(a) * c, t.needs_grad(a.idx), [ia = a.idx, c](Tape<T>& tp, const Mat<T>& g) {
        tp.accumulate(ia, g * c);
    });
}

/// X + row vector broadcast over rows (bias add).
template <typename T>
Var<T> add_rowvec(Var<T> x, Var<T> r) {
    Tape<T>& t = *x.tape;
    assert(t.value(r).rows() == 1 && t.value(r).cols() == t.value(x).cols());
    Mat<T> y = t.value(x);
    y.rowwise() += t.value(r).row(0);
    const bool ng = t.needs_grad(x.idx) || t.needs_grad(r.idx);
    return t.push(std::move(y), ng, [ix = x.idx, ir = r.idx](Tape<T>& tp, const Mat<T>& g) {
        tp.accumulate(ix, g);
        tp.accumulate(ir, g.colwise().sum());
    });
}

template <typename T>
Var<T> relu(Var<T> x) {
    Tape<T>& t = *x.tape;
    return t.push(t.value(x).cwiseMax(T(0)), t.needs_grad(x.idx),
                  [ix = x.idx](Tape<T>& tp, const Mat<T>& g) {
                      const Mat<T>& xv = tp.value(Var<T>{&tp, ix});
                      tp.accumulate(
                          ix, g.cwiseProduct((xv.array() > T(0)).template cast<T>().matrix()));
                  });
}

template <typename T>
Var<T> tanh_(Var<T> x) {
    Tape<T>& t = *x.tape;
    Mat<T> y = t.value(x).array().tanh().matrix();
    Var<T> out = t.push(std::move(y), t.needs_grad(x.idx), nullptr);
    // capture the output value through its index to avoid a copy
    t.set_back(out, [ix = x.idx, iy = out.idx](Tape<T>& tp, const Mat<T>& g) {
        const Mat<T>& yv = tp.value(Var<T>{&tp, iy});
        tp.accumulate(ix, (g.array() * (T(1) - yv.array().square())).matrix());
    });
    return out;
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
    Tape<T>& t = *x.tape;
    Mat<T> y = (T(1) / (T(1) + (-t.value(x).array()).exp())).matrix();
    Var<T> out = t.push(std::move(y), t.needs_grad(x.idx), nullptr);
    t.set_back(out, [ix = x.idx, iy = out.idx](Tape<T>& tp, const Mat<T>& g) {
        const Mat<T>& yv = tp.value(Var<T>{&tp, iy});
        tp.accumulate(ix, (g.array() * yv.array() * (T(1) - yv.array())).matrix());
    });
    return out;
}

// --- matrix products ---------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    Tape<T>& t = *a.tape;
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    Mat<T> y = t.value(a) * t.value(b);
    return t.push(std::move(y), ng, [ia = a.idx, ib = b.idx](Tape<T>& tp, const Mat<T>& g) {
        tp.accumulate(ia, g * tp.value(Var<T>{&tp, ib}).transpose());
        tp.accumulate(ib, tp.value(Var<T>{&tp, ia}).transpose() * g);
    });
}

/// A * B^T.
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    Tape<T>& t = *a.tape;
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    Mat<T> y = t.value(a) * t.value(b).transpose();
    return t.push(std::move(y), ng, [ia = a.idx, ib = b.idx](Tape<T>& tp, const Mat<T>& g) {
        tp.accumulate(ia, g * tp.value(Var<T>{&tp, ib}));
        tp.accumulate(ib, g.transpose() * tp.value(Var<T>{&tp, ia}));
    });
}

/// X * W.middleRows(r0, nr): multiply against a row slice of a parameter
/// matrix, so concatenated inputs can be projected part by part without
/// materializing the concatenation.
template <typename T>
Var<T> matmul_wrows(Var<T> x, Var<T> w, Eigen::Index r0, Eigen::Index nr) {
    Tape<T>& t = *x.tape;
    assert(t.value(x).cols() == nr);
    Mat<T> y(t.value(x).rows(), t.value(w).cols());
    y.noalias() = t.value(x) * t.value(w).middleRows(r0, nr);
    const bool ng = t.needs_grad(x.idx) || t.needs_grad(w.idx);
    return t.push(std::move(y), ng,
                  [ix = x.idx, iw = w.idx, r0, nr](Tape<T>& tp, const Mat<T>& g) {
                      const Mat<T>& wv = tp.value(Var<T>{&tp, iw});
                      const Mat<T>& xv = tp.value(Var<T>{&tp, ix});
                      if (tp.needs_grad(ix))
                          tp.accumulate(ix, g * wv.middleRows(r0, nr).transpose());
                      if (tp.needs_grad(iw))
                          tp.grad_slot(iw).middleRows(r0, nr).noalias() += xv.transpose() * g;
                  });
}

/// X * W + bias, the dense layer primitive.
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
    Tape<T>& t = *x.tape;
    Mat<T> y = t.value(x) * t.value(w);
    y.rowwise() += t.value(b).row(0);
    const bool ng = t.needs_grad(x.idx) || t.needs_grad(w.idx) || t.needs_grad(b.idx);
    return t.push(std::move(y), ng,
                  [ix = x.idx, iw = w.idx, ib = b.idx](Tape<T>& tp, const Mat<T>& g) {
                      tp.accumulate(ix, g * tp.value(Var<T>{&tp, iw}).transpose());
                      tp.accumulate(iw, tp.value(Var<T>{&tp, ix}).transpose() * g);
                      tp.accumulate(ib, g.colwise().sum());
                  });
}

// --- shape ops ----------------------------------------------------------------

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    assert(!parts.empty());
    Tape<T>& t = *parts.front().tape;
    const Eigen::Index rows = t.value(parts.front()).rows();
    Eigen::Index cols = 0;
    bool ng = false;
    for (const auto& p : parts) {
        assert(t.value(p).rows() == rows);
        cols += t.value(p).cols();
        ng = ng || t.needs_grad(p.idx);
    }
    Mat<T> y(rows, cols);
    Eigen::Index at = 0;
    std::vector<int32_t> idxs;
    std::vector<Eigen::Index> widths;
    for (const auto& p : parts) {
        const auto w = t.value(p).cols();
        y.middleCols(at, w) = t.value(p);
        at += w;
        idxs.push_back(p.idx);
        widths.push_back(w);
    }
    return t.push(std::move(y), ng,
                  [idxs = std::move(idxs), widths = std::move(widths)](Tape<T>& tp, const Mat<T>& g) {
                      Eigen::Index at = 0;
                      for (size_t i = 0; i < idxs.size(); ++i) {
                          tp.accumulate(idxs[i], g.middleCols(at, widths[i]));
                          at += widths[i];
                      }
                  });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
    return concat_cols(std::vector<Var<T>>{a, b});
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b, Var<T> c) {
    return concat_cols(std::vector<Var<T>>{a, b, c});
}

template <typename T>
Var<T> slice_cols(Var<T> x, Eigen::Index c0, Eigen::Index n) {
    Tape<T>& t = *x.tape;
    Mat<T> y = t.value(x).middleCols(c0, n);
    return t.push(std::move(y), t.needs_grad(x.idx),
                  [ix = x.idx, c0, n](Tape<T>& tp, const Mat<T>& g) {
                      if (!tp.needs_grad(ix)) return;
                      tp.grad_slot(ix).middleCols(c0, n) += g;
                  });
}

/// Y(r, :) = X(idx[r], :).
template <typename T>
Var<T> gather_rows(Var<T> x, std::shared_ptr<const std::vector<uint32_t>> idx) {
    Tape<T>& t = *x.tape;
    const Mat<T>& xv = t.value(x);
    Mat<T> y(static_cast<Eigen::Index>(idx->size()), xv.cols());
    for (size_t r = 0; r < idx->size(); ++r)
        y.row(static_cast<Eigen::Index>(r)) = xv.row((*idx)[r]);
    return t.push(std::move(y), t.needs_grad(x.idx),
                  [ix = x.idx, idx](Tape<T>& tp, const Mat<T>& g) {
                      if (!tp.needs_grad(ix)) return;
                      auto& gx = tp.grad_slot(ix);
                      for (size_t r = 0; r < idx->size(); ++r)
                          gx.row((*idx)[r]) += g.row(static_cast<Eigen::Index>(r));
                  });
}

/// Y(i, :) = sum over rows r of X with idx[r] == i; Y has `out_rows` rows.
template <typename T>
Var<T> scatter_sum_rows(Var<T> x, std::shared_ptr<const std::vector<uint32_t>> idx,
                        Eigen::Index out_rows) {
    Tape<T>& t = *x.tape;
    const Mat<T>& xv = t.value(x);
    Mat<T> y = Mat<T>::Zero(out_rows, xv.cols());
    for (size_t r = 0; r < idx->size(); ++r) y.row((*idx)[r]) += xv.row(static_cast<Eigen::Index>(r));
    return t.push(std::move(y), t.needs_grad(x.idx), [ix = x.idx, idx](Tape<T>& tp, const Mat<T>& g) {
        Mat<T> gx(static_cast<Eigen::Index>(idx->size()), g.cols());
        for (size_t r = 0; r < idx->size(); ++r)
            gx.row(static_cast<Eigen::Index>(r)) = g.row((*idx)[r]);
        tp.accumulate_move(ix, std::move(gx));
    });
}

/// Copy of H with H(idx[r], :) replaced by Xnew(r, :). Used for the batched
/// GRU state update.
template <typename T>
Var<T> row_update(Var<T> h, std::shared_ptr<const std::vector<uint32_t>> idx, Var<T> xnew) {
    Tape<T>& t = *h.tape;
    Mat<T> y = t.value(h);
    const Mat<T>& nv = t.value(xnew);
    for (size_t r = 0; r < idx->size(); ++r) y.row((*idx)[r]) = nv.row(static_cast<Eigen::Index>(r));
    const bool ng = t.needs_grad(h.idx) || t.needs_grad(xnew.idx);
    return t.push(std::move(y), ng, [ih = h.idx, in = xnew.idx, idx](Tape<T>& tp, const Mat<T>& g) {
        Mat<T> gh = g;
        Mat<T> gn(static_cast<Eigen::Index>(idx->size()), g.cols());
        for (size_t r = 0; r < idx->size(); ++r) {
            gn.row(static_cast<Eigen::Index>(r)) = g.row((*idx)[r]);
            gh.row((*idx)[r]).setZero();
        }
        tp.accumulate_move(ih, std::move(gh));
        tp.accumulate_move(in, std::move(gn));
    });
}

template <typename T>
Var<T> mean_rows(Var<T> x) {
    Tape<T>& t = *x.tape;
    Mat<T> y = t.value(x).colwise().mean();
    const auto rows = t.value(x).rows();
    return t.push(std::move(y), t.needs_grad(x.idx), [ix = x.idx, rows](Tape<T>& tp, const Mat<T>& g) {
        tp.accumulate(ix, (g / T(rows)).replicate(rows, 1));
    });
}

template <typename T>
Var<T> broadcast_rows(Var<T> x, Eigen::Index rows) {
    Tape<T>& t = *x.tape;
    assert(t.value(x).rows() == 1);
    Mat<T> y = t.value(x).replicate(rows, 1);
    return t.push(std::move(y), t.needs_grad(x.idx), [ix = x.idx](Tape<T>& tp, const Mat<T>& g) {
        tp.accumulate(ix, g.colwise().sum());
    });
}

// --- normalization, attention, reductions -------------------------------------

/// Row-wise layer normalization with learnable gain/bias (1 x C each).
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
    Tape<T>& t = *x.tape;
    const Mat<T>& xv = t.value(x);
    const Eigen::Index c = xv.cols();

    Mat<T> xhat(xv.rows(), c);
    Mat<T> inv_std(xv.rows(), 1);
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const T mu = xv.row(r).mean();
        const auto d = (xv.row(r).array() - mu);
        const T var = d.square().sum() / T(c);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std(r, 0) = is;
        xhat.row(r) = (d * is).matrix();
    }
    Mat<T> y = xhat;
    y.array().rowwise() *= t.value(gamma).row(0).array();
    y.rowwise() += t.value(beta).row(0);

    const bool ng = t.needs_grad(x.idx) || t.needs_grad(gamma.idx) || t.needs_grad(beta.idx);
    auto xhat_p = std::make_shared<Mat<T>>(std::move(xhat));
    auto istd_p = std::make_shared<Mat<T>>(std::move(inv_std));
    return t.push(std::move(y), ng,
                  [ix = x.idx, ig = gamma.idx, ib = beta.idx, xhat_p, istd_p, c](Tape<T>& tp,
                                                                                 const Mat<T>& g) {
                      const Mat<T>& xh = *xhat_p;
                      tp.accumulate(ib, g.colwise().sum());
                      tp.accumulate(ig, g.cwiseProduct(xh).colwise().sum());
                      if (!tp.needs_grad(ix)) return;
                      const auto& gamma_v = tp.value(Var<T>{&tp, ig});
                      Mat<T> gx(xh.rows(), c);
                      for (Eigen::Index r = 0; r < xh.rows(); ++r) {
                          const auto gh = (g.row(r).array() * gamma_v.row(0).array()).eval();
                          const T m1 = gh.mean();
                          const T m2 = (gh * xh.row(r).array()).mean();
                          gx.row(r) =
                              ((gh - m1 - xh.row(r).array() * m2) * (*istd_p)(r, 0)).matrix();
                      }
                      tp.accumulate_move(ix, std::move(gx));
                  });
}

/// Row-wise softmax. If `mask` is given, entries with mask == 0 get
/// probability exactly 0 (their logits are excluded from the row).
template <typename T>
Var<T> softmax_rows(Var<T> x,
                    std::shared_ptr<const Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>>
                        mask = nullptr) {
    Tape<T>& t = *x.tape;
    const Mat<T>& xv = t.value(x);
    Mat<T> y(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        T mx = -std::numeric_limits<T>::infinity();
        for (Eigen::Index cidx = 0; cidx < xv.cols(); ++cidx)
            if (!mask || (*mask)(r, cidx)) mx = std::max(mx, xv(r, cidx));
        T denom = 0;
        for (Eigen::Index cidx = 0; cidx < xv.cols(); ++cidx) {
            const T e = (!mask || (*mask)(r, cidx)) ? std::exp(xv(r, cidx) - mx) : T(0);
            y(r, cidx) = e;
            denom += e;
        }
        y.row(r) /= denom;
    }
    Var<T> out = t.push(std::move(y), t.needs_grad(x.idx), nullptr);
    t.set_back(out, [ix = x.idx, iy = out.idx](Tape<T>& tp, const Mat<T>& g) {
        const Mat<T>& yv = tp.value(Var<T>{&tp, iy});
        Mat<T> gx(yv.rows(), yv.cols());
        for (Eigen::Index r = 0; r < yv.rows(); ++r) {
            const T dot = g.row(r).dot(yv.row(r));
            gx.row(r) = yv.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
        }
        tp.accumulate_move(ix, std::move(gx));
    });
    return out;
}

template <typename T>
Var<T> mean_all(Var<T> x) {
    Tape<T>& t = *x.tape;
    Mat<T> y(1, 1);
    y(0, 0) = t.value(x).mean();
    const auto rows = t.value(x).rows();
    const auto cols = t.value(x).cols();
    return t.push(std::move(y), t.needs_grad(x.idx),
                  [ix = x.idx, rows, cols](Tape<T>& tp, const Mat<T>& g) {
                      tp.accumulate(ix, Mat<T>::Constant(rows, cols, g(0, 0) / T(rows * cols)));
                  });
}

template <typename T>
Var<T> sum_all(Var<T> x) {
    Tape<T>& t = *x.tape;
    Mat<T> y(1, 1);
    y(0, 0) = t.value(x).sum();
    const auto rows = t.value(x).rows();
    const auto cols = t.value(x).cols();
    return t.push(std::move(y), t.needs_grad(x.idx),
                  [ix = x.idx, rows, cols](Tape<T>& tp, const Mat<T>& g) {
                      tp.accumulate(ix, Mat<T>::Constant(rows, cols, g(0, 0)));
                  });
}

/// Mean of squared entries, the MSE building block.
template <typename T>
Var<T> mean_square(Var<T> x) {
    return mean_all(cmul(x, x));
}

}  // namespace flowcast::ad
