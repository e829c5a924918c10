// Dense double-precision tensors with reverse-mode automatic differentiation.
//
// The Graph is a tape built during one forward pass and discarded after
// backward. Ops take a Graph*; passing nullptr runs the op in inference mode
// and produces a detached result. Gradients accumulate into leaf tensors
// (parameters) and are zeroed explicitly by the optimizer, never by the tape.
//
// Raw GEMM kernels are backed by Eigen; everything above them (op semantics,
// tape mechanics, backward formulas) lives here.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "unmt/rng.hpp"

namespace unmt {

using Shape = std::vector<size_t>;

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (size_t e : s) n *= e;
    return n;
}

class Graph;

struct TensorData {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;   // same length as value when tracked, else empty
    bool requires_grad = false;
    int node = -1;              // creation index on the tape, -1 off-tape
    Graph* owner = nullptr;
};

// Shared-storage handle. Copies alias the same buffer, like a view.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto d = std::make_shared<TensorData>();
        d->shape = std::move(shape);
        d->value.assign(shape_numel(d->shape), 0.0);
        d->requires_grad = requires_grad;
        if (requires_grad) d->grad.assign(d->value.size(), 0.0);
        return Tensor(std::move(d));
    }

    static Tensor from(Shape shape, std::vector<double> value, bool requires_grad = false) {
        if (shape_numel(shape) != value.size())
            throw std::invalid_argument("tensor: shape does not match data length");
        auto d = std::make_shared<TensorData>();
        d->shape = std::move(shape);
        d->value = std::move(value);
        d->requires_grad = requires_grad;
        if (requires_grad) d->grad.assign(d->value.size(), 0.0);
        return Tensor(std::move(d));
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    bool defined() const { return static_cast<bool>(d_); }
    const Shape& shape() const { return d_->shape; }
    size_t numel() const { return d_->value.size(); }
    size_t rows() const { return d_->shape.empty() ? 0 : d_->shape[0]; }
    size_t cols() const { return d_->shape.size() == 2 ? d_->shape[1] : 1; }
    bool is_scalar() const { return numel() == 1; }
    double item() const {
        if (!is_scalar()) throw std::invalid_argument("tensor: item() on non-scalar");
        return d_->value[0];
    }

    std::vector<double>& value() { return d_->value; }
    const std::vector<double>& value() const { return d_->value; }
    std::vector<double>& grad() { return d_->grad; }
    const std::vector<double>& grad() const { return d_->grad; }
    bool requires_grad() const { return d_->requires_grad; }
    int node() const { return d_->node; }

    void zero_grad() { std::fill(d_->grad.begin(), d_->grad.end(), 0.0); }

    // Graph-free deep copy; never receives gradient.
    Tensor detach() const {
        auto d = std::make_shared<TensorData>();
        d->shape = d_->shape;
        d->value = d_->value;
        return Tensor(std::move(d));
    }

    std::shared_ptr<TensorData> data_ptr() const { return d_; }

private:
    explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
    friend class Graph;
    std::shared_ptr<TensorData> d_;
};

// Whether gradient should flow into this tensor: leaves opt in through
// requires_grad, intermediates are tracked by the tape that created them.
inline bool tracked(const Tensor& t) { return t.requires_grad() || t.node() >= 0; }
inline bool tracked_data(const std::shared_ptr<TensorData>& d) {
    return d->requires_grad || d->node >= 0;
}

class Graph {
public:
    // Allocates the output tensor of an op and puts it on the tape.
    Tensor make_output(Shape shape) {
        auto d = std::make_shared<TensorData>();
        d->shape = std::move(shape);
        d->value.assign(shape_numel(d->shape), 0.0);
        d->grad.assign(d->value.size(), 0.0);
        d->node = static_cast<int>(nodes_.size());
        d->owner = this;
        produced_.push_back(d);
        nodes_.emplace_back();  // backward filled in by set_backward
        return Tensor(std::move(d));
    }

    void set_backward(const Tensor& out, std::function<void()> fn) {
        nodes_[static_cast<size_t>(out.node())] = std::move(fn);
    }

    size_t size() const { return nodes_.size(); }

    // Seeds d(root)/d(root) = 1 and replays the tape in reverse creation
    // order, which is a valid topological order by construction. Intermediate
    // gradients are cleared first so backward can be called more than once on
    // the same tape for independent roots; leaf gradients accumulate.
    void backward(const Tensor& root) {
        if (!root.is_scalar())
            throw std::invalid_argument("backward: root must be a scalar");
        if (root.node() < 0 || root.data_ptr()->owner != this)
            throw std::invalid_argument("backward: root is not on this graph");
        for (auto& d : produced_) std::fill(d->grad.begin(), d->grad.end(), 0.0);
        root.data_ptr()->grad[0] = 1.0;
        for (int i = root.node(); i >= 0; --i) {
            if (nodes_[static_cast<size_t>(i)]) nodes_[static_cast<size_t>(i)]();
        }
    }

private:
    std::vector<std::function<void()>> nodes_;
    std::vector<std::shared_ptr<TensorData>> produced_;
};

namespace detail {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

inline MapC as_mat(const std::vector<double>& v, size_t r, size_t c) {
    return MapC(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline MapM as_mat(std::vector<double>& v, size_t r, size_t c) {
    return MapM(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

inline void require_2d(const Tensor& t, const char* who) {
    if (t.shape().size() != 2) throw std::invalid_argument(std::string(who) + ": expected a 2-D tensor");
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() != b.shape()) throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

inline Tensor add(Graph* g, const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    if (!g) {
        Tensor out = Tensor::zeros(a.shape());
        for (size_t i = 0; i < a.numel(); ++i) out.value()[i] = a.value()[i] + b.value()[i];
        return out;
    }
    Tensor out = g->make_output(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) out.value()[i] = a.value()[i] + b.value()[i];
    auto ad = a.data_ptr(), bd = b.data_ptr(), od = out.data_ptr();
    g->set_backward(out, [ad, bd, od] {
        if (tracked_data(ad)) for (size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
        if (tracked_data(bd)) for (size_t i = 0; i < od->grad.size(); ++i) bd->grad[i] += od->grad[i];
    });
    return out;
}

inline Tensor sub(Graph* g, const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor out = g ? g->make_output(a.shape()) : Tensor::zeros(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) out.value()[i] = a.value()[i] - b.value()[i];
    if (g) {
        auto ad = a.data_ptr(), bd = b.data_ptr(), od = out.data_ptr();
        g->set_backward(out, [ad, bd, od] {
            if (tracked_data(ad)) for (size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
            if (tracked_data(bd)) for (size_t i = 0; i < od->grad.size(); ++i) bd->grad[i] -= od->grad[i];
        });
    }
    return out;
}

inline Tensor mul(Graph* g, const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor out = g ? g->make_output(a.shape()) : Tensor::zeros(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) out.value()[i] = a.value()[i] * b.value()[i];
    if (g) {
        auto ad = a.data_ptr(), bd = b.data_ptr(), od = out.data_ptr();
        g->set_backward(out, [ad, bd, od] {
            if (tracked_data(ad)) for (size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i] * bd->value[i];
            if (tracked_data(bd)) for (size_t i = 0; i < od->grad.size(); ++i) bd->grad[i] += od->grad[i] * ad->value[i];
    });
    }
    return out;
}

inline Tensor scale(Graph* g, const Tensor& a, double c) {
    Tensor out = g ? g->make_output(a.shape()) : Tensor::zeros(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) out.value()[i] = a.value()[i] * c;
    if (g) {
        auto ad = a.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [ad, od, c] {
            if (tracked_data(ad)) for (size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i] * c;
        });
    }
    return out;
}

inline Tensor relu(Graph* g, const Tensor& a) {
    Tensor out = g ? g->make_output(a.shape()) : Tensor::zeros(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) out.value()[i] = a.value()[i] > 0.0 ? a.value()[i] : 0.0;
    if (g) {
        auto ad = a.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [ad, od] {
            if (!tracked_data(ad)) return;
            for (size_t i = 0; i < od->grad.size(); ++i)
                if (ad->value[i] > 0.0) ad->grad[i] += od->grad[i];
        });
    }
    return out;
}

// x (N x d) + bias broadcast over rows; bias is a (d) vector or (1 x d) row.
inline Tensor add_bias(Graph* g, const Tensor& x, const Tensor& b) {
    detail::require_2d(x, "add_bias");
    const size_t n = x.shape()[0], d = x.shape()[1];
    if (b.numel() != d) throw std::invalid_argument("add_bias: bias width mismatch");
    Tensor out = g ? g->make_output(x.shape()) : Tensor::zeros(x.shape());
    for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < d; ++c)
            out.value()[r * d + c] = x.value()[r * d + c] + b.value()[c];
    if (g) {
        auto xd = x.data_ptr(); auto bd = b.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [xd, bd, od, n, d] {
            if (tracked_data(xd))
                for (size_t i = 0; i < od->grad.size(); ++i) xd->grad[i] += od->grad[i];
            if (tracked_data(bd))
                for (size_t r = 0; r < n; ++r)
                    for (size_t c = 0; c < d; ++c) bd->grad[c] += od->grad[r * d + c];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

inline Tensor matmul(Graph* g, const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false) {
    detail::require_2d(a, "matmul");
    detail::require_2d(b, "matmul");
    const size_t am = a.shape()[0], an = a.shape()[1];
    const size_t bm = b.shape()[0], bn = b.shape()[1];
    const size_t m = trans_a ? an : am;
    const size_t k = trans_a ? am : an;
    const size_t k2 = trans_b ? bn : bm;
    const size_t n = trans_b ? bm : bn;
    if (k != k2) throw std::invalid_argument("matmul: inner dimensions do not match");

    Tensor out = g ? g->make_output({m, n}) : Tensor::zeros({m, n});
    {
        auto A = detail::as_mat(a.value(), am, an);
        auto B = detail::as_mat(b.value(), bm, bn);
        auto O = detail::as_mat(out.value(), m, n);
        if (!trans_a && !trans_b)      O.noalias() = A * B;
        else if (trans_a && !trans_b)  O.noalias() = A.transpose() * B;
        else if (!trans_a && trans_b)  O.noalias() = A * B.transpose();
        else                           O.noalias() = A.transpose() * B.transpose();
    }
    if (g) {
        auto ad = a.data_ptr(); auto bd = b.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [ad, bd, od, am, an, bm, bn, m, n, trans_a, trans_b] {
            auto G = detail::as_mat(od->grad, m, n);
            auto A = detail::as_mat(ad->value, am, an);
            auto B = detail::as_mat(bd->value, bm, bn);
            if (tracked_data(ad)) {
                auto dA = detail::as_mat(ad->grad, am, an);
                if (!trans_a && !trans_b)      dA.noalias() += G * B.transpose();
                else if (!trans_a && trans_b)  dA.noalias() += G * B;
                else if (trans_a && !trans_b)  dA.noalias() += B * G.transpose();
                else                           dA.noalias() += B.transpose() * G.transpose();
            }
            if (tracked_data(bd)) {
                auto dB = detail::as_mat(bd->grad, bm, bn);
                if (!trans_a && !trans_b)      dB.noalias() += A.transpose() * G;
                else if (trans_a && !trans_b)  dB.noalias() += A * G;
                else if (!trans_a && trans_b)  dB.noalias() += G.transpose() * A;
                else                           dB.noalias() += G.transpose() * A.transpose();
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// row-wise normalization / softmax / losses
// ---------------------------------------------------------------------------

inline Tensor layer_norm(Graph* g, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
    detail::require_2d(x, "layer_norm");
    const size_t n = x.shape()[0], d = x.shape()[1];
    if (gain.numel() != d || bias.numel() != d)
        throw std::invalid_argument("layer_norm: gain/bias width mismatch");
    Tensor out = g ? g->make_output(x.shape()) : Tensor::zeros(x.shape());
    std::vector<double> inv_std(n), xhat;
    if (g) xhat.resize(n * d);
    for (size_t r = 0; r < n; ++r) {
        const double* xv = &x.value()[r * d];
        double mean = 0.0;
        for (size_t c = 0; c < d; ++c) mean += xv[c];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (size_t c = 0; c < d; ++c) var += (xv[c] - mean) * (xv[c] - mean);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (size_t c = 0; c < d; ++c) {
            const double xh = (xv[c] - mean) * is;
            if (g) xhat[r * d + c] = xh;
            out.value()[r * d + c] = xh * gain.value()[c] + bias.value()[c];
        }
    }
    if (g) {
        auto xd = x.data_ptr(); auto gd = gain.data_ptr(); auto bd = bias.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [xd, gd, bd, od, n, d, inv_std = std::move(inv_std), xhat = std::move(xhat)] {
            for (size_t r = 0; r < n; ++r) {
                const double* go = &od->grad[r * d];
                const double* xh = &xhat[r * d];
                if (tracked_data(gd))
                    for (size_t c = 0; c < d; ++c) gd->grad[c] += go[c] * xh[c];
                if (tracked_data(bd))
                    for (size_t c = 0; c < d; ++c) bd->grad[c] += go[c];
                if (tracked_data(xd)) {
                    // d x = (gy - mean(gy) - xhat * mean(gy*xhat)) * inv_std, gy = go*gain
                    double mean_gy = 0.0, mean_gyxh = 0.0;
                    for (size_t c = 0; c < d; ++c) {
                        const double gy = go[c] * gd->value[c];
                        mean_gy += gy;
                        mean_gyxh += gy * xh[c];
                    }
                    mean_gy /= static_cast<double>(d);
                    mean_gyxh /= static_cast<double>(d);
                    for (size_t c = 0; c < d; ++c) {
                        const double gy = go[c] * gd->value[c];
                        xd->grad[r * d + c] += (gy - mean_gy - xh[c] * mean_gyxh) * inv_std[r];
                    }
                }
            }
        });
    }
    return out;
}

// Numerically stable softmax of a plain vector (max-subtracted).
inline std::vector<double> softmax(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("softmax: empty input");
    double mx = v[0];
    for (double x : v) {
        if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite input");
        mx = std::max(mx, x);
    }
    std::vector<double> out(v.size());
    double z = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        z += out[i];
    }
    for (double& x : out) x /= z;
    return out;
}

inline Tensor softmax_rows(Graph* g, const Tensor& x) {
    detail::require_2d(x, "softmax_rows");
    const size_t n = x.shape()[0], d = x.shape()[1];
    Tensor out = g ? g->make_output(x.shape()) : Tensor::zeros(x.shape());
    for (size_t r = 0; r < n; ++r) {
        const double* xv = &x.value()[r * d];
        double mx = xv[0];
        for (size_t c = 0; c < d; ++c) {
            if (!std::isfinite(xv[c])) throw std::invalid_argument("softmax_rows: non-finite input");
            mx = std::max(mx, xv[c]);
        }
        double z = 0.0;
        double* ov = &out.value()[r * d];
        for (size_t c = 0; c < d; ++c) {
            ov[c] = std::exp(xv[c] - mx);
            z += ov[c];
        }
        for (size_t c = 0; c < d; ++c) ov[c] /= z;
    }
    if (g) {
        auto xd = x.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [xd, od, n, d] {
            if (!tracked_data(xd)) return;
            for (size_t r = 0; r < n; ++r) {
                const double* p = &od->value[r * d];
                const double* go = &od->grad[r * d];
                double dot = 0.0;
                for (size_t c = 0; c < d; ++c) dot += p[c] * go[c];
                for (size_t c = 0; c < d; ++c) xd->grad[r * d + c] += p[c] * (go[c] - dot);
            }
        });
    }
    return out;
}

// Weighted mean of per-row cross entropies: sum_i w_i * (-log softmax(x_i)[t_i]) / sum_i w_i.
// Rows with weight zero are ignored; if every weight is zero the loss is the
// constant 0 (used for degenerate batches).
inline Tensor cross_entropy_rows(Graph* g, const Tensor& logits, const std::vector<int>& targets,
                                 const std::vector<double>& weights) {
    detail::require_2d(logits, "cross_entropy_rows");
    const size_t n = logits.shape()[0], d = logits.shape()[1];
    if (targets.size() != n || weights.size() != n)
        throw std::invalid_argument("cross_entropy_rows: targets/weights length mismatch");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("cross_entropy_rows: negative weight");
        wsum += w;
    }
    Tensor out = g ? g->make_output({1}) : Tensor::zeros({1});
    if (wsum == 0.0) return out;

    std::vector<double> probs;
    if (g) probs.resize(n * d);
    double loss = 0.0;
    for (size_t r = 0; r < n; ++r) {
        if (weights[r] == 0.0 && !g) continue;
        const int t = targets[r];
        if (t < 0 || static_cast<size_t>(t) >= d)
            throw std::invalid_argument("cross_entropy_rows: target out of range");
        const double* xv = &logits.value()[r * d];
        double mx = xv[0];
        for (size_t c = 0; c < d; ++c) mx = std::max(mx, xv[c]);
        double z = 0.0;
        for (size_t c = 0; c < d; ++c) {
            const double e = std::exp(xv[c] - mx);
            if (g) probs[r * d + c] = e;
            z += e;
        }
        if (g) for (size_t c = 0; c < d; ++c) probs[r * d + c] /= z;
        const double logp = (xv[static_cast<size_t>(t)] - mx) - std::log(z);
        loss += weights[r] * (-logp);
    }
    out.value()[0] = loss / wsum;
    if (g) {
        auto xd = logits.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [xd, od, targets, weights, wsum, n, d, probs = std::move(probs)] {
            if (!tracked_data(xd)) return;
            const double go = od->grad[0];
            for (size_t r = 0; r < n; ++r) {
                if (weights[r] == 0.0) continue;
                const double s = go * weights[r] / wsum;
                const size_t t = static_cast<size_t>(targets[r]);
                for (size_t c = 0; c < d; ++c)
                    xd->grad[r * d + c] += s * (probs[r * d + c] - (c == t ? 1.0 : 0.0));
            }
        });
    }
    return out;
}

// Single-vector convenience: -log softmax(logits)[target].
inline Tensor cross_entropy(Graph* g, const Tensor& logits, int target) {
    if (logits.shape().size() != 1 && !(logits.shape().size() == 2 && logits.shape()[0] == 1))
        throw std::invalid_argument("cross_entropy: expected a single logit vector");
    const size_t d = logits.numel();
    if (target < 0 || static_cast<size_t>(target) >= d)
        throw std::invalid_argument("cross_entropy: target out of range");
    const double* xv = logits.value().data();
    double mx = xv[0];
    for (size_t c = 0; c < d; ++c) {
        if (!std::isfinite(xv[c])) throw std::invalid_argument("cross_entropy: non-finite input");
        mx = std::max(mx, xv[c]);
    }
    double z = 0.0;
    std::vector<double> probs(d);
    for (size_t c = 0; c < d; ++c) { probs[c] = std::exp(xv[c] - mx); z += probs[c]; }
    for (size_t c = 0; c < d; ++c) probs[c] /= z;
    Tensor out = g ? g->make_output({1}) : Tensor::zeros({1});
    out.value()[0] = -((xv[static_cast<size_t>(target)] - mx) - std::log(z));
    if (g) {
        auto xd = logits.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [xd, od, target, d, probs = std::move(probs)] {
            if (!tracked_data(xd)) return;
            const double go = od->grad[0];
            for (size_t c = 0; c < d; ++c)
                xd->grad[c] += go * (probs[c] - (c == static_cast<size_t>(target) ? 1.0 : 0.0));
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// gather / embedding
// ---------------------------------------------------------------------------

// Rows of table selected by ids; backward scatter-adds (single-threaded on
// purpose: repeated ids must accumulate deterministically).
inline Tensor embed(Graph* g, const Tensor& table, const std::vector<int>& ids) {
    detail::require_2d(table, "embed");
    const size_t v = table.shape()[0], d = table.shape()[1];
    for (int id : ids)
        if (id < 0 || static_cast<size_t>(id) >= v)
            throw std::invalid_argument("embed: token id out of range");
    Tensor out = g ? g->make_output({ids.size(), d}) : Tensor::zeros({ids.size(), d});
    for (size_t r = 0; r < ids.size(); ++r)
        std::copy_n(&table.value()[static_cast<size_t>(ids[r]) * d], d, &out.value()[r * d]);
    if (g) {
        auto td = table.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [td, od, ids, d] {
            if (!tracked_data(td)) return;
            for (size_t r = 0; r < ids.size(); ++r) {
                double* dst = &td->grad[static_cast<size_t>(ids[r]) * d];
                const double* src = &od->grad[r * d];
                for (size_t c = 0; c < d; ++c) dst[c] += src[c];
            }
        });
    }
    return out;
}

inline Tensor gather_rows(Graph* g, const Tensor& x, const std::vector<size_t>& rows) {
    detail::require_2d(x, "gather_rows");
    const size_t n = x.shape()[0], d = x.shape()[1];
    for (size_t r : rows)
        if (r >= n) throw std::invalid_argument("gather_rows: row index out of range");
    Tensor out = g ? g->make_output({rows.size(), d}) : Tensor::zeros({rows.size(), d});
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy_n(&x.value()[rows[i] * d], d, &out.value()[i * d]);
    if (g) {
        auto xd = x.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [xd, od, rows, d] {
            if (!tracked_data(xd)) return;
            for (size_t i = 0; i < rows.size(); ++i) {
                double* dst = &xd->grad[rows[i] * d];
                const double* src = &od->grad[i * d];
                for (size_t c = 0; c < d; ++c) dst[c] += src[c];
            }
        });
    }
    return out;
}

// Adds the first L rows of a fixed positional table to x, where x is
// (B*L x d) and row r of x gets pos row (r mod L). The table takes no grad.
inline Tensor add_position(Graph* g, const Tensor& x, const std::vector<double>& pos, size_t seq_len) {
    detail::require_2d(x, "add_position");
    const size_t n = x.shape()[0], d = x.shape()[1];
    if (pos.size() < seq_len * d) throw std::invalid_argument("add_position: positional table too short");
    Tensor out = g ? g->make_output(x.shape()) : Tensor::zeros(x.shape());
    for (size_t r = 0; r < n; ++r) {
        const double* pv = &pos[(r % seq_len) * d];
        for (size_t c = 0; c < d; ++c) out.value()[r * d + c] = x.value()[r * d + c] + pv[c];
    }
    if (g) {
        auto xd = x.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [xd, od] {
            if (!tracked_data(xd)) return;
            for (size_t i = 0; i < od->grad.size(); ++i) xd->grad[i] += od->grad[i];
        });
    }
    return out;
}

// sum of all elements -> scalar
inline Tensor sum(Graph* g, const Tensor& x) {
    Tensor out = g ? g->make_output({1}) : Tensor::zeros({1});
    double s = 0.0;
    for (double v : x.value()) s += v;
    out.value()[0] = s;
    if (g) {
        auto xd = x.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [xd, od] {
            if (!tracked_data(xd)) return;
            for (size_t i = 0; i < xd->grad.size(); ++i) xd->grad[i] += od->grad[0];
        });
    }
    return out;
}

// sum_i x_i * w_i with a constant weight vector; handy for scalarizing
// arbitrary outputs in gradient checks.
inline Tensor weighted_sum(Graph* g, const Tensor& x, const std::vector<double>& w) {
    if (w.size() != x.numel()) throw std::invalid_argument("weighted_sum: weight length mismatch");
    Tensor out = g ? g->make_output({1}) : Tensor::zeros({1});
    double s = 0.0;
    for (size_t i = 0; i < w.size(); ++i) s += x.value()[i] * w[i];
    out.value()[0] = s;
    if (g) {
        auto xd = x.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [xd, od, w] {
            if (!tracked_data(xd)) return;
            for (size_t i = 0; i < w.size(); ++i) xd->grad[i] += od->grad[0] * w[i];
        });
    }
    return out;
}

// Inverted-dropout with a caller-owned stream; p == 0 is the identity.
inline Tensor dropout(Graph* g, const Tensor& x, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
    if (p == 0.0) return x;
    const double keep = 1.0 - p;
    std::vector<uint8_t> mask(x.numel());
    for (auto& m : mask) m = rand_uniform(rng) >= p ? 1 : 0;
    Tensor out = g ? g->make_output(x.shape()) : Tensor::zeros(x.shape());
    for (size_t i = 0; i < x.numel(); ++i)
        out.value()[i] = mask[i] ? x.value()[i] / keep : 0.0;
    if (g) {
        auto xd = x.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [xd, od, mask = std::move(mask), keep] {
            if (!tracked_data(xd)) return;
            for (size_t i = 0; i < od->grad.size(); ++i)
                if (mask[i]) xd->grad[i] += od->grad[i] / keep;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// fused multi-head scaled-dot-product attention
// ---------------------------------------------------------------------------

// q: (B*Lq x d), k/v: (B*Lk x d), all already projected. Key positions at or
// beyond k_lens[b] are masked out; causal additionally restricts query i to
// keys <= i (requires Lq == Lk). Softmax rows that are fully masked (queries
// in padding) degrade to uniform over the allowed prefix, which is harmless
// because those rows never reach the loss.
inline Tensor attention(Graph* g, const Tensor& q, const Tensor& k, const Tensor& v,
                        size_t batch, size_t lq, size_t lk, size_t heads,
                        const std::vector<int>& k_lens, bool causal) {
    detail::require_2d(q, "attention");
    const size_t d = q.shape()[1];
    if (d % heads != 0) throw std::invalid_argument("attention: width not divisible by heads");
    if (q.shape()[0] != batch * lq || k.shape()[0] != batch * lk || v.shape()[0] != batch * lk)
        throw std::invalid_argument("attention: layout mismatch");
    if (k.shape()[1] != d || v.shape()[1] != d)
        throw std::invalid_argument("attention: width mismatch");
    if (k_lens.size() != batch) throw std::invalid_argument("attention: k_lens size mismatch");
    if (causal && lq != lk) throw std::invalid_argument("attention: causal needs square attention");

    const size_t hd = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    Tensor out = g ? g->make_output(q.shape()) : Tensor::zeros(q.shape());
    // per (sentence, head) softmax probabilities, saved for backward
    std::vector<double> probs;
    if (g) probs.assign(batch * heads * lq * lk, 0.0);

    std::vector<double> scores(lk);
    for (size_t b = 0; b < batch; ++b) {
        const size_t klen = static_cast<size_t>(std::max(1, k_lens[b]));
        for (size_t h = 0; h < heads; ++h) {
            const size_t off = h * hd;
            for (size_t i = 0; i < lq; ++i) {
                const double* qv = &q.value()[(b * lq + i) * d + off];
                const size_t kmax = causal ? std::min(klen, i + 1) : klen;
                double mx = -1e300;
                for (size_t j = 0; j < kmax; ++j) {
                    const double* kv = &k.value()[(b * lk + j) * d + off];
                    double s = 0.0;
                    for (size_t c = 0; c < hd; ++c) s += qv[c] * kv[c];
                    scores[j] = s * inv_sqrt;
                    mx = std::max(mx, scores[j]);
                }
                double z = 0.0;
                for (size_t j = 0; j < kmax; ++j) {
                    scores[j] = std::exp(scores[j] - mx);
                    z += scores[j];
                }
                double* ov = &out.value()[(b * lq + i) * d + off];
                for (size_t c = 0; c < hd; ++c) ov[c] = 0.0;
                for (size_t j = 0; j < kmax; ++j) {
                    const double p = scores[j] / z;
                    if (g) probs[((b * heads + h) * lq + i) * lk + j] = p;
                    const double* vv = &v.value()[(b * lk + j) * d + off];
                    for (size_t c = 0; c < hd; ++c) ov[c] += p * vv[c];
                }
            }
        }
    }
    if (g) {
        auto qd = q.data_ptr(); auto kd = k.data_ptr(); auto vd = v.data_ptr(); auto od = out.data_ptr();
        g->set_backward(out, [qd, kd, vd, od, batch, lq, lk, heads, hd, d, inv_sqrt, k_lens, causal,
                              probs = std::move(probs)] {
            const bool tq = tracked_data(qd), tk = tracked_data(kd), tv = tracked_data(vd);
            if (!tq && !tk && !tv) return;
            std::vector<double> dp(lk);
            for (size_t b = 0; b < batch; ++b) {
                const size_t klen = static_cast<size_t>(std::max(1, k_lens[b]));
                for (size_t h = 0; h < heads; ++h) {
                    const size_t off = h * hd;
                    for (size_t i = 0; i < lq; ++i) {
                        const size_t kmax = causal ? std::min(klen, i + 1) : klen;
                        const double* go = &od->grad[(b * lq + i) * d + off];
                        const double* pr = &probs[((b * heads + h) * lq + i) * lk];
                        // dV and dP
                        double dot = 0.0;
                        for (size_t j = 0; j < kmax; ++j) {
                            const double* vv = &vd->value[(b * lk + j) * d + off];
                            double s = 0.0;
                            for (size_t c = 0; c < hd; ++c) s += go[c] * vv[c];
                            dp[j] = s;
                            dot += s * pr[j];
                            if (tv) {
                                double* dvv = &vd->grad[(b * lk + j) * d + off];
                                for (size_t c = 0; c < hd; ++c) dvv[c] += pr[j] * go[c];
                            }
                        }
                        // dScores = P o (dP - dot), then into q and k
                        const double* qv = &qd->value[(b * lq + i) * d + off];
                        double* dqv = tq ? &qd->grad[(b * lq + i) * d + off] : nullptr;
                        for (size_t j = 0; j < kmax; ++j) {
                            const double ds = pr[j] * (dp[j] - dot) * inv_sqrt;
                            if (ds == 0.0) continue;
                            const double* kv = &kd->value[(b * lk + j) * d + off];
                            if (tq) for (size_t c = 0; c < hd; ++c) dqv[c] += ds * kv[c];
                            if (tk) {
                                double* dkv = &kd->grad[(b * lk + j) * d + off];
                                for (size_t c = 0; c < hd; ++c) dkv[c] += ds * qv[c];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace unmt
