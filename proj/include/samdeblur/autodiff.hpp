// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

// Tape-based reverse-mode differentiation over BasicTensor.
//
// A BasicGraph records nodes in execution order. Each op appends one node
// holding its forward value and a closure that pushes the node's gradient into
// its inputs. backward() walks the tape in reverse recording order exactly
// once, so a node's gradient is complete (all fan-out contributions summed)
// before its own closure runs.
//
// Conventions: conv2d is cross-correlation (no kernel flip) with zero "same"
// padding and stride 1; relu passes no gradient at exactly 0; l1_loss has a
// zero subgradient at exact ties. There is no broadcasting.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "samdeblur/errors.hpp"
#include "samdeblur/tensor.hpp"

namespace samdeblur {

/// Handle to a node on a BasicGraph.
struct Var {
    std::size_t id = 0;
    friend bool operator==(Var, Var) = default;
};

template <class Real>
class BasicGraph {
public:
    using TensorT = BasicTensor<Real>;
    using BackwardFn = std::function<void(BasicGraph&, const TensorT& out_grad)>;

    /// Records a leaf. Leaves created with requires_grad accumulate gradients.
    Var leaf(TensorT value, bool requires_grad = true) {
        nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
        return Var{nodes_.size() - 1};
    }

    Var constant(TensorT value) { return leaf(std::move(value), false); }

    /// Records an op result. `backward` is only kept when some input needs it.
    Var record(TensorT value, bool requires_grad, BackwardFn backward) {
        nodes_.push_back(Node{std::move(value), {}, requires_grad, requires_grad ? std::move(backward) : BackwardFn{}});
        return Var{nodes_.size() - 1};
    }

    const TensorT& value(Var v) const { return node(v).value; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Smallest |input| seen by any relu on this graph (+inf if none).
    double relu_margin() const noexcept { return relu_margin_; }
    void note_relu_input(double v) noexcept { relu_margin_ = std::min(relu_margin_, std::abs(v)); }

    /// Gradient of the last backward() target w.r.t. v; zeros if nothing reached v.
    TensorT grad(Var v) const {
        const Node& n = node(v);
        if (n.grad.size() == 0 && n.value.size() != 0) return TensorT(n.value.shape());
        return n.grad;
    }

    /// Mutable gradient buffer, allocated on first use. Used by op closures.
    TensorT& grad_buffer(Var v) {
        Node& n = node(v);
        if (n.grad.shape() != n.value.shape()) n.grad = TensorT(n.value.shape());
        return n.grad;
    }

    void backward(Var loss) {
        if (value(loss).size() != 1) throw ContractError("backward requires a scalar loss, got shape " +
                                                         shape_string(value(loss).shape()));
        for (auto& n : nodes_) n.grad = TensorT();
        grad_buffer(loss)[0] = Real(1);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward || n.grad.size() == 0) continue;
            // The closure may touch grad buffers of earlier nodes only, which
            // never reallocates nodes_, but it must not alias n.grad.
            const TensorT g = std::move(n.grad);
            n.backward(*this, g);
            nodes_[i].grad = g;
        }
    }

private:
    struct Node {
        TensorT value;
        TensorT grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    Node& node(Var v) {
        if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this graph");
        return nodes_[v.id];
    }
    const Node& node(Var v) const {
        if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this graph");
        return nodes_[v.id];
    }

    std::vector<Node> nodes_;
    double relu_margin_ = std::numeric_limits<double>::infinity();
};

using Graph = BasicGraph<double>;
using GraphF = BasicGraph<float>;

// ---------------------------------------------------------------------------
// Ops

/// out[y,x,o] = bias[o] + sum_{dy,dx,i} in_pad[y+dy-r, x+dx-r, i] * kernel[dy,dx,i,o]
template <class Real>
BasicTensor<Real> conv2d_forward(const BasicTensor<Real>& in, const BasicTensor<Real>& kernel,
                                 const BasicTensor<Real>& bias) {
    require_rank(in, 3, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    require_rank(bias, 1, "conv2d bias");
    const std::size_t H = in.dim(0), W = in.dim(1), Cin = in.dim(2);
    const std::size_t Kh = kernel.dim(0), Kw = kernel.dim(1), Cout = kernel.dim(3);
    if (kernel.dim(2) != Cin)
        throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.dim(2)) + " input channels, got " +
                         std::to_string(Cin));
    if (bias.dim(0) != Cout) throw ShapeError("conv2d: bias length does not match output channels");
    if (Kh % 2 == 0 || Kw % 2 == 0) throw ShapeError("conv2d: kernel size must be odd");

    const long rh = static_cast<long>(Kh / 2), rw = static_cast<long>(Kw / 2);
    BasicTensor<Real> out(Shape{H, W, Cout});
    const Real* __restrict ip = in.data().data();
    const Real* __restrict kp = kernel.data().data();
    Real* __restrict op = out.data().data();
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            Real* __restrict orow = op + (y * W + x) * Cout;
            for (std::size_t o = 0; o < Cout; ++o) orow[o] = bias[o];
            for (std::size_t dy = 0; dy < Kh; ++dy) {
                const long sy = static_cast<long>(y + dy) - rh;
                if (sy < 0 || sy >= static_cast<long>(H)) continue;
                for (std::size_t dx = 0; dx < Kw; ++dx) {
                    const long sx = static_cast<long>(x + dx) - rw;
                    if (sx < 0 || sx >= static_cast<long>(W)) continue;
                    const Real* __restrict irow = ip + (static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)) * Cin;
                    const Real* __restrict ktap = kp + (dy * Kw + dx) * Cin * Cout;
                    for (std::size_t i = 0; i < Cin; ++i) {
                        const Real v = irow[i];
                        const Real* __restrict kk = ktap + i * Cout;
                        for (std::size_t o = 0; o < Cout; ++o) orow[o] += v * kk[o];
                    }
                }
            }
        }
    }
    return out;
}

template <class Real>
Var conv2d(BasicGraph<Real>& g, Var in, Var kernel, Var bias) {
    auto out = conv2d_forward(g.value(in), g.value(kernel), g.value(bias));
    const bool rg = g.requires_grad(in) || g.requires_grad(kernel) || g.requires_grad(bias);
    return g.record(std::move(out), rg, [in, kernel, bias](BasicGraph<Real>& gr, const BasicTensor<Real>& gout) {
        const auto& x = gr.value(in);
        const auto& k = gr.value(kernel);
        const std::size_t H = x.dim(0), W = x.dim(1), Cin = x.dim(2);
        const std::size_t Kh = k.dim(0), Kw = k.dim(1), Cout = k.dim(3);
        const long rh = static_cast<long>(Kh / 2), rw = static_cast<long>(Kw / 2);
        const bool want_in = gr.requires_grad(in), want_k = gr.requires_grad(kernel);

        if (gr.requires_grad(bias)) {
            auto& gb = gr.grad_buffer(bias);
            for (std::size_t p = 0; p < H * W; ++p)
                for (std::size_t o = 0; o < Cout; ++o) gb[o] += gout[p * Cout + o];
        }
        if (!want_in && !want_k) return;

        Real* __restrict gx = want_in ? gr.grad_buffer(in).data().data() : nullptr;
        Real* __restrict gk = want_k ? gr.grad_buffer(kernel).data().data() : nullptr;
        const Real* __restrict xp = x.data().data();
        const Real* __restrict kp = k.data().data();
        const Real* __restrict gp = gout.data().data();
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t xx = 0; xx < W; ++xx) {
                const Real* __restrict grow = gp + (y * W + xx) * Cout;
                for (std::size_t dy = 0; dy < Kh; ++dy) {
                    const long sy = static_cast<long>(y + dy) - rh;
                    if (sy < 0 || sy >= static_cast<long>(H)) continue;
                    for (std::size_t dx = 0; dx < Kw; ++dx) {
                        const long sx = static_cast<long>(xx + dx) - rw;
                        if (sx < 0 || sx >= static_cast<long>(W)) continue;
                        const std::size_t src = (static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)) * Cin;
                        const std::size_t tap = (dy * Kw + dx) * Cin * Cout;
                        for (std::size_t i = 0; i < Cin; ++i) {
                            const Real* __restrict kk = kp + tap + i * Cout;
                            if (gx) {
                                Real acc = 0;
                                for (std::size_t o = 0; o < Cout; ++o) acc += grow[o] * kk[o];
                                gx[src + i] += acc;
                            }
                            if (gk) {
                                const Real v = xp[src + i];
                                Real* __restrict gkk = gk + tap + i * Cout;
                                for (std::size_t o = 0; o < Cout; ++o) gkk[o] += v * grow[o];
                            }
                        }
                    }
                }
            }
        }
    });
}

template <class Real>
Var relu(BasicGraph<Real>& g, Var x) {
    auto out = g.value(x);
    for (auto& v : out.storage()) {
        g.note_relu_input(static_cast<double>(v));
        v = v > Real(0) ? v : Real(0);
    }
    return g.record(std::move(out), g.requires_grad(x), [x](BasicGraph<Real>& gr, const BasicTensor<Real>& gout) {
        const auto& in = gr.value(x);
        auto& gx = gr.grad_buffer(x);
        for (std::size_t i = 0; i < in.size(); ++i)
            if (in[i] > Real(0)) gx[i] += gout[i];
    });
}

template <class Real>
Var add(BasicGraph<Real>& g, Var a, Var b) {
    require_same_shape(g.value(a), g.value(b), "add");
    auto out = g.value(a);
    const auto& bv = g.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    const bool rg = g.requires_grad(a) || g.requires_grad(b);
    return g.record(std::move(out), rg, [a, b](BasicGraph<Real>& gr, const BasicTensor<Real>& gout) {
        for (Var v : {a, b}) {
            if (!gr.requires_grad(v)) continue;
            auto& gv = gr.grad_buffer(v);
            for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += gout[i];
        }
    });
}

template <class Real>
Var mul_scalar(BasicGraph<Real>& g, Var x, Real s) {
    auto out = g.value(x);
    for (auto& v : out.storage()) v *= s;
    return g.record(std::move(out), g.requires_grad(x), [x, s](BasicGraph<Real>& gr, const BasicTensor<Real>& gout) {
        auto& gx = gr.grad_buffer(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s * gout[i];
    });
}

/// Channel-axis concatenation, a's channels first.
template <class Real>
BasicTensor<Real> concat_channels_forward(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
    require_rank(a, 3, "concat_channels");
    require_rank(b, 3, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1))
        throw ShapeError("concat_channels: spatial mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    const std::size_t P = a.dim(0) * a.dim(1), Ca = a.dim(2), Cb = b.dim(2);
    BasicTensor<Real> out(Shape{a.dim(0), a.dim(1), Ca + Cb});
    for (std::size_t p = 0; p < P; ++p) {
        std::copy_n(a.data().data() + p * Ca, Ca, out.data().data() + p * (Ca + Cb));
        std::copy_n(b.data().data() + p * Cb, Cb, out.data().data() + p * (Ca + Cb) + Ca);
    }
    return out;
}

template <class Real>
Var concat_channels(BasicGraph<Real>& g, Var a, Var b) {
    auto out = concat_channels_forward(g.value(a), g.value(b));
    const bool rg = g.requires_grad(a) || g.requires_grad(b);
    return g.record(std::move(out), rg, [a, b](BasicGraph<Real>& gr, const BasicTensor<Real>& gout) {
        const std::size_t Ca = gr.value(a).dim(2), Cb = gr.value(b).dim(2);
        const std::size_t P = gr.value(a).dim(0) * gr.value(a).dim(1);
        if (gr.requires_grad(a)) {
            auto& ga = gr.grad_buffer(a);
            for (std::size_t p = 0; p < P; ++p)
                for (std::size_t c = 0; c < Ca; ++c) ga[p * Ca + c] += gout[p * (Ca + Cb) + c];
        }
        if (gr.requires_grad(b)) {
            auto& gb = gr.grad_buffer(b);
            for (std::size_t p = 0; p < P; ++p)
                for (std::size_t c = 0; c < Cb; ++c) gb[p * Cb + c] += gout[p * (Ca + Cb) + Ca + c];
        }
    });
}

/// 2x2 mean pooling; H and W must be even.
template <class Real>
Var avg_pool2(BasicGraph<Real>& g, Var x) {
    const auto& in = g.value(x);
    require_rank(in, 3, "avg_pool2");
    const std::size_t H = in.dim(0), W = in.dim(1), C = in.dim(2);
    if (H % 2 || W % 2) throw ShapeError("avg_pool2 needs even dimensions, got " + shape_string(in.shape()));
    BasicTensor<Real> out(Shape{H / 2, W / 2, C});
    for (std::size_t y = 0; y < H / 2; ++y)
        for (std::size_t xx = 0; xx < W / 2; ++xx)
            for (std::size_t c = 0; c < C; ++c)
                out.at(y, xx, c) = (in.at(2 * y, 2 * xx, c) + in.at(2 * y, 2 * xx + 1, c) +
                                    in.at(2 * y + 1, 2 * xx, c) + in.at(2 * y + 1, 2 * xx + 1, c)) *
                                   Real(0.25);
    return g.record(std::move(out), g.requires_grad(x), [x](BasicGraph<Real>& gr, const BasicTensor<Real>& gout) {
        auto& gx = gr.grad_buffer(x);
        const std::size_t H2 = gout.dim(0), W2 = gout.dim(1), C2 = gout.dim(2);
        for (std::size_t y = 0; y < H2; ++y)
            for (std::size_t xx = 0; xx < W2; ++xx)
                for (std::size_t c = 0; c < C2; ++c) {
                    const Real q = gout.at(y, xx, c) * Real(0.25);
                    gx.at(2 * y, 2 * xx, c) += q;
                    gx.at(2 * y, 2 * xx + 1, c) += q;
                    gx.at(2 * y + 1, 2 * xx, c) += q;
                    gx.at(2 * y + 1, 2 * xx + 1, c) += q;
                }
    });
}

/// 2x nearest-neighbour upsampling.
template <class Real>
Var upsample_nearest(BasicGraph<Real>& g, Var x) {
    const auto& in = g.value(x);
    require_rank(in, 3, "upsample_nearest");
    const std::size_t H = in.dim(0), W = in.dim(1), C = in.dim(2);
    BasicTensor<Real> out(Shape{2 * H, 2 * W, C});
    for (std::size_t y = 0; y < 2 * H; ++y)
        for (std::size_t xx = 0; xx < 2 * W; ++xx)
            for (std::size_t c = 0; c < C; ++c) out.at(y, xx, c) = in.at(y / 2, xx / 2, c);
    return g.record(std::move(out), g.requires_grad(x), [x](BasicGraph<Real>& gr, const BasicTensor<Real>& gout) {
        auto& gx = gr.grad_buffer(x);
        for (std::size_t y = 0; y < gout.dim(0); ++y)
            for (std::size_t xx = 0; xx < gout.dim(1); ++xx)
                for (std::size_t c = 0; c < gout.dim(2); ++c) gx.at(y / 2, xx / 2, c) += gout.at(y, xx, c);
    });
}

/// Mean absolute error, returned as a shape-(1) tensor.
template <class Real>
Var l1_loss(BasicGraph<Real>& g, Var pred, Var target) {
    const auto& p = g.value(pred);
    const auto& t = g.value(target);
    require_same_shape(p, t, "l1_loss");
    if (p.size() == 0) throw ShapeError("l1_loss of empty tensors");
    Real acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - t[i]);
    BasicTensor<Real> out(Shape{1}, acc / static_cast<Real>(p.size()));
    const bool rg = g.requires_grad(pred) || g.requires_grad(target);
    return g.record(std::move(out), rg, [pred, target](BasicGraph<Real>& gr, const BasicTensor<Real>& gout) {
        const auto& pv = gr.value(pred);
        const auto& tv = gr.value(target);
        const Real scale = gout[0] / static_cast<Real>(pv.size());
        auto sign = [](Real d) { return d > 0 ? Real(1) : (d < 0 ? Real(-1) : Real(0)); };
        if (gr.requires_grad(pred)) {
            auto& gp = gr.grad_buffer(pred);
            for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += scale * sign(pv[i] - tv[i]);
        }
        if (gr.requires_grad(target)) {
            auto& gt = gr.grad_buffer(target);
            for (std::size_t i = 0; i < pv.size(); ++i) gt[i] -= scale * sign(pv[i] - tv[i]);
        }
    });
}

// ---------------------------------------------------------------------------
// Finite-difference verification

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares the recorded gradient of a scalar function against central
/// differences (f(x+eps e) - f(x-eps e)) / (2 eps), coordinate by coordinate.
/// Relative error per coordinate is |a-n| / max(1e-12, |a|+|n|).
template <class Real>
GradCheckResult grad_check(const std::function<Var(BasicGraph<Real>&, Var)>& f, const BasicTensor<Real>& x,
                           double eps = 1e-5) {
    BasicGraph<Real> g;
    const Var xv = g.leaf(x);
    g.backward(f(g, xv));
    const auto analytic = g.grad(xv);

    auto eval_at = [&](const BasicTensor<Real>& pt) {
        BasicGraph<Real> ge;
        const Var v = ge.leaf(pt, false);
        return static_cast<double>(ge.value(f(ge, v))[0]);
    };

    GradCheckResult res;
    BasicTensor<Real> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Real orig = probe[i];
        probe[i] = orig + static_cast<Real>(eps);
        const double fp = eval_at(probe);
        probe[i] = orig - static_cast<Real>(eps);
        const double fm = eval_at(probe);
        probe[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = static_cast<double>(analytic[i]);
        const double rel = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
        if (i == 0 || rel > res.max_rel_error) res = GradCheckResult{rel, i, a, numeric};
    }
    return res;
}

}  // namespace samdeblur
