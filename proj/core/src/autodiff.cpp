#include "ammpl/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "ammpl/errors.hpp"

namespace ammpl::ad {

const Array& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Array value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Array value, std::span<const Var> parents, BackwardFn backward) {
    bool rg = false;
    for (const auto& p : parents) {
        if (&p.tape() != this) throw ContractError("tape: operand recorded on a different tape");
        rg = rg || nodes_[p.id()].requires_grad;
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    if (rg) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Array* Tape::grad_slot(NodeId id) {
    Node& n = nodes_.at(id);
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
        n.grad = Array::zeros(n.value.shape());
        n.has_grad = true;
    }
    return &n.grad;
}

GradientMap Tape::backward(const Var& loss, std::span<const Var> params) {
    if (&loss.tape() != this) throw ContractError("backward: loss is on a different tape");
    if (loss.shape() != Shape{1}) {
        throw ContractError("backward: loss must be a scalar of shape [1], got " +
                            shape_str(loss.shape()));
    }
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad = Array();
    }
    if (Array* g = grad_slot(loss.id())) (*g)[0] = 1.0;

    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad || !n.backward) continue;
        // grad_slot on parents never touches nodes_ storage itself, so the
        // reference stays valid during the call.
        n.backward(*this, n.grad);
    }

    GradientMap out;
    for (const auto& p : params) {
        if (&p.tape() != this) throw ContractError("backward: parameter is on a different tape");
        const Node& n = nodes_.at(p.id());
        out[p.id()] = n.has_grad ? n.grad : Array::zeros(n.value.shape());
    }
    return out;
}

namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

Shape drop_axis(const Shape& s, std::size_t axis) {
    Shape out;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out.push_back(s[i]);
    if (out.empty()) out.push_back(1);
    return out;
}

// outer * axis_len * inner decomposition of a shape around one axis.
struct AxisSplit {
    std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit a;
    for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
    a.len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
    return a;
}

void check_axis(const char* op, const Var& x, std::size_t axis) {
    if (axis >= x.shape().size()) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_str(x.shape()));
    }
}

template <class Fwd, class Deriv>
Var map_unary(const Var& x, Fwd fwd, Deriv deriv) {
    const Array& xv = x.value();
    Array out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    Tape& tape = x.tape();
    const NodeId xi = x.id();
    const NodeId yi = tape.size();  // id the new node will receive
    const Var parents[] = {x};
    return tape.record(std::move(out), parents, [xi, yi, deriv](Tape& t, const Array& g) {
        Array* gx = t.grad_slot(xi);
        if (!gx) return;
        const Array& xv = t.value(xi);
        const Array& yv = t.value(yi);
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * deriv(xv[i], yv[i]);
    });
}

}  // namespace

Var add(const Var& a, const Var& b) {
    require_same_shape("add", a, b);
    Array out = a.value();
    const Array& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    const NodeId ai = a.id(), bi = b.id();
    const Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents, [ai, bi](Tape& t, const Array& g) {
        for (NodeId id : {ai, bi}) {
            if (Array* gx = t.grad_slot(id))
                for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape("sub", a, b);
    Array out = a.value();
    const Array& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    const NodeId ai = a.id(), bi = b.id();
    const Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents, [ai, bi](Tape& t, const Array& g) {
        if (Array* ga = t.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (Array* gb = t.grad_slot(bi))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape("mul", a, b);
    Array out = a.value();
    const Array& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const NodeId ai = a.id(), bi = b.id();
    const Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents, [ai, bi](Tape& t, const Array& g) {
        const Array& av = t.value(ai);
        const Array& bv = t.value(bi);
        if (Array* ga = t.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
        if (Array* gb = t.grad_slot(bi))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    });
}

Var div(const Var& a, const Var& b) {
    require_same_shape("div", a, b);
    const Array& bv = b.value();
    for (std::size_t i = 0; i < bv.size(); ++i) {
        if (bv[i] == 0.0) throw DomainError("div: zero divisor at element " + std::to_string(i));
    }
    Array out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
    const NodeId ai = a.id(), bi = b.id();
    const Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents, [ai, bi](Tape& t, const Array& g) {
        const Array& av = t.value(ai);
        const Array& bv = t.value(bi);
        if (Array* ga = t.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / bv[i];
        if (Array* gb = t.grad_slot(bi))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    });
}

Var add_bias(const Var& x, const Var& b) {
    const Shape& xs = x.shape();
    const Shape& bs = b.shape();
    const bool ok = bs.size() <= xs.size() && std::equal(bs.rbegin(), bs.rend(), xs.rbegin());
    if (!ok) {
        throw ShapeError("add_bias: shape mismatch " + shape_str(xs) + " vs " + shape_str(bs) +
                         " (bias must match trailing dims)");
    }
    const std::size_t nb = b.value().size();
    Array out = x.value();
    const Array& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % nb];
    const NodeId xi = x.id(), bi = b.id();
    const Var parents[] = {x, b};
    return x.tape().record(std::move(out), parents, [xi, bi, nb](Tape& t, const Array& g) {
        if (Array* gx = t.grad_slot(xi))
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
        if (Array* gb = t.grad_slot(bi))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % nb] += g[i];
    });
}

Var broadcast_to(const Var& x, const Shape& shape) {
    const Shape& xs = x.shape();
    if (xs.size() > shape.size()) {
        throw ShapeError("broadcast_to: cannot broadcast " + shape_str(xs) + " to " + shape_str(shape));
    }
    // input stride per output axis (0 on broadcast axes)
    const std::size_t nd = shape.size();
    const std::size_t lead = nd - xs.size();
    std::vector<std::size_t> in_stride(nd, 0);
    std::size_t stride = 1;
    for (std::size_t k = xs.size(); k-- > 0;) {
        const std::size_t od = shape[lead + k];
        if (xs[k] != od && xs[k] != 1) {
            throw ShapeError("broadcast_to: cannot broadcast " + shape_str(xs) + " to " +
                             shape_str(shape));
        }
        in_stride[lead + k] = (xs[k] == 1) ? 0 : stride;
        stride *= xs[k];
    }
    const std::size_t n = shape_numel(shape);
    std::vector<std::size_t> src(n);
    {
        std::vector<std::size_t> idx(nd, 0);
        std::size_t off = 0;
        for (std::size_t i = 0; i < n; ++i) {
            src[i] = off;
            for (std::size_t a = nd; a-- > 0;) {
                ++idx[a];
                off += in_stride[a];
                if (idx[a] < shape[a]) break;
                off -= in_stride[a] * idx[a];
                idx[a] = 0;
            }
        }
    }
    Array out(shape);
    const Array& xv = x.value();
    for (std::size_t i = 0; i < n; ++i) out[i] = xv[src[i]];
    const NodeId xi = x.id();
    const Var parents[] = {x};
    return x.tape().record(std::move(out), parents,
                           [xi, src = std::move(src)](Tape& t, const Array& g) {
                               if (Array* gx = t.grad_slot(xi))
                                   for (std::size_t i = 0; i < g.size(); ++i) (*gx)[src[i]] += g[i];
                           });
}

Var scale(const Var& x, double s) {
    return map_unary(
        x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& x, double c) {
    return map_unary(
        x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var div_scalar(const Var& x, double s) {
    if (s == 0.0) throw DomainError("div_scalar: division by zero");
    return map_unary(
        x, [s](double v) { return v / s; }, [s](double, double) { return 1.0 / s; });
}

Var matmul(const Var& a, const Var& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
        throw ShapeError("matmul: shape mismatch " + shape_str(as) + " vs " + shape_str(bs));
    }
    const std::size_t m = as[0], k = as[1], n = bs[1];
    Array out({m, n});
    const double* A = a.value().data();
    const double* B = b.value().data();
    double* C = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* __restrict crow = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            const double* __restrict brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    const NodeId ai = a.id(), bi = b.id();
    const Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents, [ai, bi, m, k, n](Tape& t, const Array& g) {
        const double* G = g.data();
        if (Array* ga = t.grad_slot(ai)) {
            // dA = G B^T, accumulated row by row over a transposed copy of B
            // so the inner loop is a contiguous axpy.
            const double* B = t.value(bi).data();
            std::vector<double> bt(n * k);
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
            double* GA = ga->data();
            for (std::size_t i = 0; i < m; ++i) {
                double* __restrict garow = GA + i * k;
                for (std::size_t j = 0; j < n; ++j) {
                    const double gij = G[i * n + j];
                    const double* __restrict btrow = bt.data() + j * k;
                    for (std::size_t p = 0; p < k; ++p) garow[p] += gij * btrow[p];
                }
            }
        }
        if (Array* gb = t.grad_slot(bi)) {
            const double* A = t.value(ai).data();
            double* GB = gb->data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A[i * k + p];
                    const double* __restrict grow = G + i * n;
                    double* __restrict gbrow = GB + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                }
        }
    });
}

Var bmm(const Var& a, const Var& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1]) {
        throw ShapeError("bmm: shape mismatch " + shape_str(as) + " vs " + shape_str(bs));
    }
    const std::size_t nb = as[0], m = as[1], k = as[2], n = bs[2];
    Array out({nb, m, n});
    const double* A = a.value().data();
    const double* B = b.value().data();
    double* C = out.data();
    for (std::size_t s = 0; s < nb; ++s)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = A[(s * m + i) * k + p];
                const double* brow = B + (s * k + p) * n;
                double* crow = C + (s * m + i) * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
            }
    const NodeId ai = a.id(), bi = b.id();
    const Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents, [ai, bi, nb, m, k, n](Tape& t, const Array& g) {
        const double* G = g.data();
        if (Array* ga = t.grad_slot(ai)) {
            const double* B = t.value(bi).data();
            double* GA = ga->data();
            for (std::size_t s = 0; s < nb; ++s)
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                            acc += G[(s * m + i) * n + j] * B[(s * k + p) * n + j];
                        GA[(s * m + i) * k + p] += acc;
                    }
        }
        if (Array* gb = t.grad_slot(bi)) {
            const double* A = t.value(ai).data();
            double* GB = gb->data();
            for (std::size_t s = 0; s < nb; ++s)
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = A[(s * m + i) * k + p];
                        for (std::size_t j = 0; j < n; ++j)
                            GB[(s * k + p) * n + j] += aip * G[(s * m + i) * n + j];
                    }
        }
    });
}

Var sum(const Var& x) {
    double acc = 0.0;
    for (double v : x.value().values()) acc += v;
    const NodeId xi = x.id();
    const Var parents[] = {x};
    return x.tape().record(Array::scalar(acc), parents, [xi](Tape& t, const Array& g) {
        if (Array* gx = t.grad_slot(xi))
            for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += g[0];
    });
}

Var mean(const Var& x) { return div_scalar(sum(x), static_cast<double>(x.value().size())); }

Var sum_axis(const Var& x, std::size_t axis) {
    check_axis("sum_axis", x, axis);
    const AxisSplit s = split_at(x.shape(), axis);
    Array out(drop_axis(x.shape(), axis));
    const Array& xv = x.value();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t a = 0; a < s.len; ++a)
            for (std::size_t i = 0; i < s.inner; ++i)
                out[o * s.inner + i] += xv[(o * s.len + a) * s.inner + i];
    const NodeId xi = x.id();
    const Var parents[] = {x};
    return x.tape().record(std::move(out), parents, [xi, s](Tape& t, const Array& g) {
        if (Array* gx = t.grad_slot(xi))
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t a = 0; a < s.len; ++a)
                    for (std::size_t i = 0; i < s.inner; ++i)
                        (*gx)[(o * s.len + a) * s.inner + i] += g[o * s.inner + i];
    });
}

Var mean_axis(const Var& x, std::size_t axis) {
    check_axis("mean_axis", x, axis);
    return div_scalar(sum_axis(x, axis), static_cast<double>(x.shape()[axis]));
}

Var tanh(const Var& x) {
    return map_unary(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(const Var& x) {
    return map_unary(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
    const Array& xv = x.value();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        if (!(xv[i] > 0.0))
            throw DomainError("log: non-positive argument at element " + std::to_string(i));
    }
    return map_unary(
        x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var l2_norm_last(const Var& x) {
    const Shape& xs = x.shape();
    const std::size_t n = xs.back();
    const std::size_t rows = x.value().size() / n;
    Shape os(xs.begin(), xs.end() - 1);
    if (os.empty()) os.push_back(1);
    Array out(os);
    const Array& xv = x.value();
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += xv[r * n + j] * xv[r * n + j];
        out[r] = std::sqrt(acc);
    }
    const NodeId xi = x.id();
    const NodeId yi = x.tape().size();
    const Var parents[] = {x};
    return x.tape().record(std::move(out), parents, [xi, yi, rows, n](Tape& t, const Array& g) {
        Array* gx = t.grad_slot(xi);
        if (!gx) return;
        const Array& xv = t.value(xi);
        const Array& yv = t.value(yi);
        for (std::size_t r = 0; r < rows; ++r) {
            if (yv[r] == 0.0) throw DomainError("l2_norm_last: gradient undefined at zero vector");
            const double c = g[r] / yv[r];
            for (std::size_t j = 0; j < n; ++j) (*gx)[r * n + j] += c * xv[r * n + j];
        }
    });
}

Var normalize_last(const Var& x) {
    const Shape& xs = x.shape();
    Shape col(xs.begin(), xs.end() - 1);
    col.push_back(1);
    Var norms = reshape(l2_norm_last(x), col);
    return div(x, broadcast_to(norms, xs));
}

Var softmax(const Var& x, std::size_t axis) {
    check_axis("softmax", x, axis);
    const AxisSplit s = split_at(x.shape(), axis);
    Array out(x.shape());
    const Array& xv = x.value();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            auto at = [&](std::size_t a) { return (o * s.len + a) * s.inner + i; };
            double mx = xv[at(0)];
            for (std::size_t a = 1; a < s.len; ++a) mx = std::max(mx, xv[at(a)]);
            double z = 0.0;
            for (std::size_t a = 0; a < s.len; ++a) {
                out[at(a)] = std::exp(xv[at(a)] - mx);
                z += out[at(a)];
            }
            for (std::size_t a = 0; a < s.len; ++a) out[at(a)] /= z;
        }
    const NodeId xi = x.id();
    const NodeId yi = x.tape().size();
    const Var parents[] = {x};
    return x.tape().record(std::move(out), parents, [xi, yi, s](Tape& t, const Array& g) {
        Array* gx = t.grad_slot(xi);
        if (!gx) return;
        const Array& y = t.value(yi);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                auto at = [&](std::size_t a) { return (o * s.len + a) * s.inner + i; };
                double dot = 0.0;
                for (std::size_t a = 0; a < s.len; ++a) dot += g[at(a)] * y[at(a)];
                for (std::size_t a = 0; a < s.len; ++a) (*gx)[at(a)] += y[at(a)] * (g[at(a)] - dot);
            }
    });
}

Var log_softmax(const Var& x, std::size_t axis) {
    check_axis("log_softmax", x, axis);
    const AxisSplit s = split_at(x.shape(), axis);
    Array out(x.shape());
    const Array& xv = x.value();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            auto at = [&](std::size_t a) { return (o * s.len + a) * s.inner + i; };
            double mx = xv[at(0)];
            for (std::size_t a = 1; a < s.len; ++a) mx = std::max(mx, xv[at(a)]);
            double z = 0.0;
            for (std::size_t a = 0; a < s.len; ++a) z += std::exp(xv[at(a)] - mx);
            const double lse = mx + std::log(z);
            for (std::size_t a = 0; a < s.len; ++a) out[at(a)] = xv[at(a)] - lse;
        }
    const NodeId xi = x.id();
    const NodeId yi = x.tape().size();
    const Var parents[] = {x};
    return x.tape().record(std::move(out), parents, [xi, yi, s](Tape& t, const Array& g) {
        Array* gx = t.grad_slot(xi);
        if (!gx) return;
        const Array& y = t.value(yi);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                auto at = [&](std::size_t a) { return (o * s.len + a) * s.inner + i; };
                double gs = 0.0;
                for (std::size_t a = 0; a < s.len; ++a) gs += g[at(a)];
                for (std::size_t a = 0; a < s.len; ++a)
                    (*gx)[at(a)] += g[at(a)] - std::exp(y[at(a)]) * gs;
            }
    });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no operands");
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_str(s0));
    Shape os = s0;
    os[axis] = 0;
    for (const auto& p : parts) {
        const Shape& ps = p.shape();
        bool ok = ps.size() == s0.size();
        for (std::size_t i = 0; ok && i < ps.size(); ++i)
            if (i != axis && ps[i] != s0[i]) ok = false;
        if (!ok) throw ShapeError("concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(ps));
        os[axis] += ps[axis];
    }
    const AxisSplit so = split_at(os, axis);
    Array out(os);
    std::vector<NodeId> ids;
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const AxisSplit sp = split_at(p.shape(), axis);
        const Array& pv = p.value();
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t a = 0; a < sp.len; ++a)
                for (std::size_t i = 0; i < sp.inner; ++i)
                    out[(o * so.len + offset + a) * so.inner + i] = pv[(o * sp.len + a) * sp.inner + i];
        ids.push_back(p.id());
        offsets.push_back(offset);
        offset += sp.len;
    }
    return parts[0].tape().record(
        std::move(out), parts, [ids, offsets, so, axis](Tape& t, const Array& g) {
            for (std::size_t n = 0; n < ids.size(); ++n) {
                Array* gp = t.grad_slot(ids[n]);
                if (!gp) continue;
                const AxisSplit sp = split_at(gp->shape(), axis);
                for (std::size_t o = 0; o < sp.outer; ++o)
                    for (std::size_t a = 0; a < sp.len; ++a)
                        for (std::size_t i = 0; i < sp.inner; ++i)
                            (*gp)[(o * sp.len + a) * sp.inner + i] +=
                                g[(o * so.len + offsets[n] + a) * so.inner + i];
            }
        });
}

Var reshape(const Var& x, const Shape& shape) {
    if (shape_numel(shape) != x.value().size()) {
        throw ShapeError("reshape: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(shape));
    }
    const NodeId xi = x.id();
    const Var parents[] = {x};
    return x.tape().record(x.value().reshaped(shape), parents, [xi](Tape& t, const Array& g) {
        if (Array* gx = t.grad_slot(xi))
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    });
}

Var pick(const Var& x, std::size_t flat_index) {
    if (flat_index >= x.value().size()) {
        throw ShapeError("pick: index " + std::to_string(flat_index) + " out of range for " +
                         shape_str(x.shape()));
    }
    const NodeId xi = x.id();
    const Var parents[] = {x};
    return x.tape().record(Array::scalar(x.value()[flat_index]), parents,
                           [xi, flat_index](Tape& t, const Array& g) {
                               if (Array* gx = t.grad_slot(xi)) (*gx)[flat_index] += g[0];
                           });
}

Var detach(const Var& x) { return x.tape().constant(x.value()); }

Var clamp01(const Var& x) {
    return map_unary(
        x, [](double v) { return std::min(1.0, std::max(0.0, v)); },
        [](double v, double) { return (v > 0.0 && v < 1.0) ? 1.0 : 0.0; });
}

Array sample_bernoulli(const Array& p, RandomStream& rng) {
    Array m(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] >= 0.0 && p[i] <= 1.0)) {
            throw ContractError("bernoulli: probability " + std::to_string(p[i]) + " at element " +
                                std::to_string(i) + " outside [0, 1]; clamp first");
        }
    }
    for (std::size_t i = 0; i < p.size(); ++i) m[i] = rng.bernoulli(p[i]) ? 1.0 : 0.0;
    return m;
}

Var bernoulli_straight_through(const Var& p, RandomStream& rng) {
    Tape& tape = p.tape();
    Var m = tape.constant(sample_bernoulli(p.value(), rng));
    return add(detach(sub(m, p)), p);
}

}  // namespace ammpl::ad
