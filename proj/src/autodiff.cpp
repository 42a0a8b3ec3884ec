#include "gpa/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace gpa {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

bool any_requires_grad(const std::vector<Var>& parents) {
    for (const auto& p : parents)
        if (p.requires_grad()) return true;
    return false;
}

// Nodes whose parents carry no gradient are pruned to constants so inference
// paths never grow the tape.
Var make_node(Tensor value, std::vector<Var> parents,
              std::function<std::vector<Var>(const Var&)> backward) {
    auto n = std::make_shared<Var::Node>();
    n->value = std::move(value);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    if (any_requires_grad(parents)) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward = std::move(backward);
    }
    return Var::from_node(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

template <typename F>
Tensor ew2(const Tensor& a, const Tensor& b, F f) {
    Tensor out(a.shape(), promote(a.dtype(), b.dtype()));
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    out.quantize();
    return out;
}

template <typename F>
Tensor ew1(const Tensor& a, F f) {
    Tensor out(a.shape(), a.dtype());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    out.quantize();
    return out;
}

Var self_var(const std::weak_ptr<Var::Node>& w) { return Var::from_node(w.lock()); }

} // namespace

Var Var::constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return Var(std::move(n));
}

Var Var::param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    n->requires_grad = true;
    return Var(std::move(n));
}

Var detach(const Var& a) { return Var::constant(a.value()); }

Var zeros_like_const(const Var& a) {
    return Var::constant(Tensor::zeros(a.value().shape(), a.value().dtype()));
}

bool has_nan(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (std::isnan(t[i])) return true;
    return false;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "add");
    return make_node(ew2(a.value(), b.value(), [](double x, double y) { return x + y; }),
                     {a, b}, [](const Var& go) { return std::vector<Var>{go, go}; });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "sub");
    return make_node(ew2(a.value(), b.value(), [](double x, double y) { return x - y; }),
                     {a, b}, [](const Var& go) { return std::vector<Var>{go, neg(go)}; });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "mul");
    return make_node(ew2(a.value(), b.value(), [](double x, double y) { return x * y; }),
                     {a, b}, [a, b](const Var& go) {
                         return std::vector<Var>{mul(go, b), mul(go, a)};
                     });
}

Var divide(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "divide");
    return make_node(ew2(a.value(), b.value(), [](double x, double y) { return x / y; }),
                     {a, b}, [a, b](const Var& go) {
                         Var ga = divide(go, b);
                         Var gb = neg(divide(mul(go, a), mul(b, b)));
                         return std::vector<Var>{ga, gb};
                     });
}

Var neg(const Var& a) {
    return make_node(ew1(a.value(), [](double x) { return -x; }), {a},
                     [](const Var& go) { return std::vector<Var>{neg(go)}; });
}

Var scale(const Var& a, double c) {
    return make_node(ew1(a.value(), [c](double x) { return c * x; }), {a},
                     [c](const Var& go) { return std::vector<Var>{scale(go, c)}; });
}

Var add_scalar(const Var& a, double c) {
    return make_node(ew1(a.value(), [c](double x) { return x + c; }), {a},
                     [](const Var& go) { return std::vector<Var>{go}; });
}

Var relu(const Var& a) {
    Tensor mask = ew1(a.value(), [](double x) { return x > 0.0 ? 1.0 : 0.0; });
    return make_node(ew1(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), {a},
                     [m = Var::constant(std::move(mask))](const Var& go) {
                         return std::vector<Var>{mul(go, m)};
                     });
}

Var tanh_op(const Var& a) {
    Var out = make_node(ew1(a.value(), [](double x) { return std::tanh(x); }), {a}, nullptr);
    if (out.requires_grad()) {
        std::weak_ptr<Var::Node> w = out.weak();
        out.node()->backward = [w](const Var& go) {
            Var y = self_var(w);
            Var one = Var::constant(Tensor::full(y.value().shape(), 1.0, y.value().dtype()));
            return std::vector<Var>{mul(go, sub(one, mul(y, y)))};
        };
    }
    return out;
}

Var sigmoid_op(const Var& a) {
    Var out = make_node(ew1(a.value(), [](double x) { return 1.0 / (1.0 + std::exp(-x)); }),
                        {a}, nullptr);
    if (out.requires_grad()) {
        std::weak_ptr<Var::Node> w = out.weak();
        out.node()->backward = [w](const Var& go) {
            Var y = self_var(w);
            Var one = Var::constant(Tensor::full(y.value().shape(), 1.0, y.value().dtype()));
            return std::vector<Var>{mul(go, mul(y, sub(one, y)))};
        };
    }
    return out;
}

Var sqrt_op(const Var& a) {
    Var out = make_node(ew1(a.value(), [](double x) { return std::sqrt(x); }), {a}, nullptr);
    if (out.requires_grad()) {
        std::weak_ptr<Var::Node> w = out.weak();
        out.node()->backward = [w](const Var& go) {
            Var y = self_var(w);
            // d sqrt / dx = 1/(2 sqrt(x)); the subgradient at 0 is taken as 0
            return std::vector<Var>{mul(go, scale(recip_or_zero(y), 0.5))};
        };
    }
    return out;
}

Var log_op(const Var& a) {
    return make_node(ew1(a.value(), [](double x) { return std::log(x); }), {a},
                     [a](const Var& go) { return std::vector<Var>{divide(go, a)}; });
}

Var clamp(const Var& a, double lo, double hi) {
    Tensor mask = ew1(a.value(), [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
    return make_node(ew1(a.value(), [lo, hi](double x) { return std::min(std::max(x, lo), hi); }),
                     {a}, [m = Var::constant(std::move(mask))](const Var& go) {
                         return std::vector<Var>{mul(go, m)};
                     });
}

Var abs_op(const Var& a) {
    Tensor sign = ew1(a.value(), [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    return make_node(ew1(a.value(), [](double x) { return std::fabs(x); }), {a},
                     [s = Var::constant(std::move(sign))](const Var& go) {
                         return std::vector<Var>{mul(go, s)};
                     });
}

Var recip_or_zero(const Var& a) {
    Var out = make_node(ew1(a.value(), [](double x) { return x == 0.0 ? 0.0 : 1.0 / x; }),
                        {a}, nullptr);
    if (out.requires_grad()) {
        std::weak_ptr<Var::Node> w = out.weak();
        out.node()->backward = [w](const Var& go) {
            Var y = self_var(w);
            return std::vector<Var>{neg(mul(go, mul(y, y)))};
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// structure
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    if (ta.ndim() != 2 || tb.ndim() != 2 || ta.dim(1) != tb.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(ta.shape()) + " vs " +
                         shape_str(tb.shape()));
    const std::size_t n = ta.dim(0), k = ta.dim(1), m = tb.dim(1);
    Tensor out({n, m}, promote(ta.dtype(), tb.dtype()));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ta[i * k + kk];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] += av * tb[kk * m + j];
        }
    out.quantize();
    return make_node(std::move(out), {a, b}, [a, b](const Var& go) {
        return std::vector<Var>{matmul(go, transpose(b)), matmul(transpose(a), go)};
    });
}

Var transpose(const Var& a) {
    const Tensor& t = a.value();
    if (t.ndim() != 2) throw ShapeError("transpose: expected matrix, got " + shape_str(t.shape()));
    const std::size_t n = t.dim(0), m = t.dim(1);
    Tensor out({m, n}, t.dtype());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = t[i * m + j];
    return make_node(std::move(out), {a},
                     [](const Var& go) { return std::vector<Var>{transpose(go)}; });
}

Var reshape(const Var& a, Shape s) {
    if (shape_numel(s) != a.value().size())
        throw ShapeError("reshape: cannot view " + shape_str(a.value().shape()) + " as " +
                         shape_str(s));
    Tensor out(s, a.value().data(), a.value().dtype());
    Shape orig = a.value().shape();
    return make_node(std::move(out), {a}, [orig](const Var& go) {
        return std::vector<Var>{reshape(go, orig)};
    });
}

namespace {

// sum_to_bias / broadcast_bias are adjoints of each other; both appear in the
// other's backward so bias gradients stay differentiable.
Var sum_to_bias(const Var& x, const Shape& bshape);

Var broadcast_bias(const Var& b, const Shape& xshape) {
    const Tensor& tb = b.value();
    Tensor out(xshape, tb.dtype());
    if (xshape.size() == 2) {
        const std::size_t n = xshape[0], f = xshape[1];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) out[i * f + j] = tb[j];
    } else {
        const std::size_t n = xshape[0], c = xshape[1], l = xshape[2];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t cc = 0; cc < c; ++cc)
                for (std::size_t j = 0; j < l; ++j) out[(i * c + cc) * l + j] = tb[cc];
    }
    out.quantize();
    Shape bshape = tb.shape();
    return make_node(std::move(out), {b}, [bshape](const Var& go) {
        return std::vector<Var>{sum_to_bias(go, bshape)};
    });
}

Var sum_to_bias(const Var& x, const Shape& bshape) {
    const Tensor& tx = x.value();
    Tensor out(bshape, tx.dtype());
    if (tx.ndim() == 2) {
        const std::size_t n = tx.dim(0), f = tx.dim(1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) out[j] += tx[i * f + j];
    } else {
        const std::size_t n = tx.dim(0), c = tx.dim(1), l = tx.dim(2);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t cc = 0; cc < c; ++cc)
                for (std::size_t j = 0; j < l; ++j) out[cc] += tx[(i * c + cc) * l + j];
    }
    out.quantize();
    Shape xshape = tx.shape();
    return make_node(std::move(out), {x}, [xshape](const Var& go) {
        return std::vector<Var>{broadcast_bias(go, xshape)};
    });
}

} // namespace

Var add_bias(const Var& x, const Var& b) {
    const Tensor& tx = x.value();
    const Tensor& tb = b.value();
    const bool ok = tb.ndim() == 1 &&
                    ((tx.ndim() == 2 && tx.dim(1) == tb.dim(0)) ||
                     (tx.ndim() == 3 && tx.dim(1) == tb.dim(0)));
    if (!ok)
        throw ShapeError("add_bias: incompatible shapes " + shape_str(tx.shape()) + " vs " +
                         shape_str(tb.shape()));
    Tensor out(tx.shape(), promote(tx.dtype(), tb.dtype()));
    if (tx.ndim() == 2) {
        const std::size_t n = tx.dim(0), f = tx.dim(1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) out[i * f + j] = tx[i * f + j] + tb[j];
    } else {
        const std::size_t n = tx.dim(0), c = tx.dim(1), l = tx.dim(2);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t cc = 0; cc < c; ++cc)
                for (std::size_t j = 0; j < l; ++j) {
                    const std::size_t idx = (i * c + cc) * l + j;
                    out[idx] = tx[idx] + tb[cc];
                }
    }
    out.quantize();
    Shape bshape = tb.shape();
    return make_node(std::move(out), {x, b}, [bshape](const Var& go) {
        return std::vector<Var>{go, sum_to_bias(go, bshape)};
    });
}

namespace {
Var pad_cols(const Var& a, std::size_t c0, std::size_t total);
} // namespace

Var slice_cols(const Var& a, std::size_t c0, std::size_t c1) {
    const Tensor& t = a.value();
    if (t.ndim() != 2 || c1 > t.dim(1) || c0 >= c1)
        throw ShapeError("slice_cols: bad range on " + shape_str(t.shape()));
    const std::size_t n = t.dim(0), f = t.dim(1), w = c1 - c0;
    Tensor out({n, w}, t.dtype());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = t[i * f + c0 + j];
    return make_node(std::move(out), {a}, [c0, f](const Var& go) {
        return std::vector<Var>{pad_cols(go, c0, f)};
    });
}

namespace {

Var pad_cols(const Var& a, std::size_t c0, std::size_t total) {
    const Tensor& t = a.value();
    const std::size_t n = t.dim(0), w = t.dim(1);
    Tensor out({n, total}, t.dtype());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * total + c0 + j] = t[i * w + j];
    return make_node(std::move(out), {a}, [c0, w](const Var& go) {
        return std::vector<Var>{slice_cols(go, c0, c0 + w)};
    });
}

} // namespace

Var row_sum(const Var& a) {
    const Tensor& t = a.value();
    if (t.ndim() != 2) throw ShapeError("row_sum: expected matrix, got " + shape_str(t.shape()));
    const std::size_t n = t.dim(0), f = t.dim(1);
    Tensor out({n, 1}, t.dtype());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) out[i] += t[i * f + j];
    out.quantize();
    return make_node(std::move(out), {a}, [f](const Var& go) {
        return std::vector<Var>{row_broadcast(go, f)};
    });
}

Var row_broadcast(const Var& r, std::size_t cols) {
    const Tensor& t = r.value();
    if (t.ndim() != 2 || t.dim(1) != 1)
        throw ShapeError("row_broadcast: expected [N,1], got " + shape_str(t.shape()));
    const std::size_t n = t.dim(0);
    Tensor out({n, cols}, t.dtype());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = t[i];
    return make_node(std::move(out), {r},
                     [](const Var& go) { return std::vector<Var>{row_sum(go)}; });
}

Var row_mean(const Var& a) { return scale(row_sum(a), 1.0 / static_cast<double>(a.value().dim(1))); }

namespace {
Var broadcast_scalar(const Var& s, const Shape& shape);
} // namespace

Var sum_all(const Var& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.value().size(); ++i) acc += a.value()[i];
    Tensor out = Tensor::scalar(acc, a.value().dtype());
    out.quantize();
    Shape shape = a.value().shape();
    return make_node(std::move(out), {a}, [shape](const Var& go) {
        return std::vector<Var>{broadcast_scalar(go, shape)};
    });
}

namespace {

Var broadcast_scalar(const Var& s, const Shape& shape) {
    Tensor out(shape, s.value().dtype());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.value()[0];
    return make_node(std::move(out), {s},
                     [](const Var& go) { return std::vector<Var>{sum_all(go)}; });
}

} // namespace

Var mean_all(const Var& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mul_scalarvar(const Var& x, const Var& s) {
    if (s.value().size() != 1)
        throw ShapeError("mul_scalarvar: scalar operand has shape " +
                         shape_str(s.value().shape()));
    const double sv = s.value()[0];
    return make_node(ew1(x.value(), [sv](double v) { return v * sv; }), {x, s},
                     [x, s](const Var& go) {
                         return std::vector<Var>{mul_scalarvar(go, s), sum_all(mul(go, x))};
                     });
}

// ---------------------------------------------------------------------------
// convolution family
//
// The three kernels below realize the trilinear form T(x, w, y*) of 1D
// convolution; each one's backward is expressed with the other two, which
// keeps arbitrary-order differentiation closed.
// ---------------------------------------------------------------------------

namespace {

Tensor kconv_fwd(const Tensor& x, const Tensor& w, int stride, int pad) {
    const std::size_t n = x.dim(0), ci = x.dim(1), l = x.dim(2);
    const std::size_t co = w.dim(0), k = w.dim(2);
    const long lout_l = (static_cast<long>(l) + 2 * pad - static_cast<long>(k)) / stride + 1;
    if (w.dim(1) != ci || lout_l < 1)
        throw ShapeError("conv1d: incompatible input " + shape_str(x.shape()) + " and kernel " +
                         shape_str(w.shape()));
    const std::size_t lout = static_cast<std::size_t>(lout_l);
    Tensor y({n, co, lout}, promote(x.dtype(), w.dtype()));
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t oc = 0; oc < co; ++oc)
            for (std::size_t t = 0; t < lout; ++t) {
                double acc = 0.0;
                for (std::size_t ic = 0; ic < ci; ++ic) {
                    const double* xr = x.data().data() + (in * ci + ic) * l;
                    const double* wr = w.data().data() + (oc * ci + ic) * k;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const long i = static_cast<long>(t) * stride + static_cast<long>(kk) - pad;
                        if (i >= 0 && i < static_cast<long>(l)) acc += xr[i] * wr[kk];
                    }
                }
                y[(in * co + oc) * lout + t] = acc;
            }
    y.quantize();
    return y;
}

Tensor kconv_bwd_input(const Tensor& go, const Tensor& w, int stride, int pad, std::size_t l) {
    const std::size_t n = go.dim(0), co = go.dim(1), lout = go.dim(2);
    const std::size_t ci = w.dim(1), k = w.dim(2);
    if (w.dim(0) != co)
        throw ShapeError("conv1d backward: grad channels " + shape_str(go.shape()) +
                         " vs kernel " + shape_str(w.shape()));
    Tensor gx({n, ci, l}, promote(go.dtype(), w.dtype()));
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t oc = 0; oc < co; ++oc) {
            const double* gr = go.data().data() + (in * co + oc) * lout;
            for (std::size_t ic = 0; ic < ci; ++ic) {
                const double* wr = w.data().data() + (oc * ci + ic) * k;
                double* xr = gx.data().data() + (in * ci + ic) * l;
                for (std::size_t t = 0; t < lout; ++t)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const long i = static_cast<long>(t) * stride + static_cast<long>(kk) - pad;
                        if (i >= 0 && i < static_cast<long>(l)) xr[i] += gr[t] * wr[kk];
                    }
            }
        }
    gx.quantize();
    return gx;
}

Tensor kconv_bwd_weight(const Tensor& go, const Tensor& x, int stride, int pad, std::size_t k) {
    const std::size_t n = go.dim(0), co = go.dim(1), lout = go.dim(2);
    const std::size_t ci = x.dim(1), l = x.dim(2);
    Tensor gw({co, ci, k}, promote(go.dtype(), x.dtype()));
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t oc = 0; oc < co; ++oc) {
            const double* gr = go.data().data() + (in * co + oc) * lout;
            for (std::size_t ic = 0; ic < ci; ++ic) {
                const double* xr = x.data().data() + (in * ci + ic) * l;
                double* wr = gw.data().data() + (oc * ci + ic) * k;
                for (std::size_t t = 0; t < lout; ++t)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const long i = static_cast<long>(t) * stride + static_cast<long>(kk) - pad;
                        if (i >= 0 && i < static_cast<long>(l)) wr[kk] += gr[t] * xr[i];
                    }
            }
        }
    gw.quantize();
    return gw;
}

Var conv_fwd_op(const Var& x, const Var& w, int stride, int pad);
Var conv_bwd_input_op(const Var& go, const Var& w, int stride, int pad, std::size_t l);
Var conv_bwd_weight_op(const Var& go, const Var& x, int stride, int pad, std::size_t k);

Var conv_fwd_op(const Var& x, const Var& w, int stride, int pad) {
    Tensor y = kconv_fwd(x.value(), w.value(), stride, pad);
    const std::size_t l = x.value().dim(2), k = w.value().dim(2);
    return make_node(std::move(y), {x, w}, [x, w, stride, pad, l, k](const Var& go) {
        return std::vector<Var>{conv_bwd_input_op(go, w, stride, pad, l),
                                conv_bwd_weight_op(go, x, stride, pad, k)};
    });
}

Var conv_bwd_input_op(const Var& go, const Var& w, int stride, int pad, std::size_t l) {
    Tensor gx = kconv_bwd_input(go.value(), w.value(), stride, pad, l);
    const std::size_t k = w.value().dim(2);
    return make_node(std::move(gx), {go, w}, [go, w, stride, pad, k](const Var& u) {
        return std::vector<Var>{conv_fwd_op(u, w, stride, pad),
                                conv_bwd_weight_op(go, u, stride, pad, k)};
    });
}

Var conv_bwd_weight_op(const Var& go, const Var& x, int stride, int pad, std::size_t k) {
    Tensor gw = kconv_bwd_weight(go.value(), x.value(), stride, pad, k);
    const std::size_t l = x.value().dim(2);
    return make_node(std::move(gw), {go, x}, [go, x, stride, pad, l](const Var& uw) {
        return std::vector<Var>{conv_fwd_op(x, uw, stride, pad),
                                conv_bwd_input_op(go, uw, stride, pad, l)};
    });
}

} // namespace

Var conv1d(const Var& x, const Var& w, int stride, int pad) {
    if (x.value().ndim() != 3 || w.value().ndim() != 3)
        throw ShapeError("conv1d: expected [N,C,L] input and [Co,Ci,K] kernel, got " +
                         shape_str(x.value().shape()) + " and " + shape_str(w.value().shape()));
    return conv_fwd_op(x, w, stride, pad);
}

Var conv1d_transpose(const Var& x, const Var& w, int stride, int pad) {
    // weight convention [Cin, Cout, K]; output length (L-1)*stride - 2*pad + K
    const Tensor& tx = x.value();
    const Tensor& tw = w.value();
    if (tx.ndim() != 3 || tw.ndim() != 3 || tx.dim(1) != tw.dim(0))
        throw ShapeError("conv1d_transpose: incompatible input " + shape_str(tx.shape()) +
                         " and kernel " + shape_str(tw.shape()));
    const long lout = (static_cast<long>(tx.dim(2)) - 1) * stride - 2 * pad +
                      static_cast<long>(tw.dim(2));
    if (lout < 1)
        throw ShapeError("conv1d_transpose: non-positive output length for input " +
                         shape_str(tx.shape()));
    return conv_bwd_input_op(x, w, stride, pad, static_cast<std::size_t>(lout));
}

// ---------------------------------------------------------------------------
// losses / reductions
// ---------------------------------------------------------------------------

Var bce_with_target(const Var& p, double target) {
    const double eps = 1e-12;
    Var pc = clamp(p, eps, 1.0 - eps);
    Var term = scale(log_op(pc), target);
    if (target != 1.0)
        term = add(term, scale(log_op(add_scalar(neg(pc), 1.0)), 1.0 - target));
    return neg(mean_all(term));
}

Var l2_norm(const std::vector<Var>& vs) {
    if (vs.empty()) throw ShapeError("l2_norm: empty tensor list");
    Var acc;
    for (const auto& v : vs) {
        Var sq = sum_all(mul(v, v));
        acc = acc.defined() ? add(acc, sq) : sq;
    }
    return sqrt_op(acc);
}

// ---------------------------------------------------------------------------
// reverse pass
// ---------------------------------------------------------------------------

std::vector<Var> grad(const Var& loss, const std::vector<Var>& params) {
    if (!loss.defined() || loss.value().size() != 1)
        throw ShapeError("grad: loss must be a defined scalar");

    // gather the reachable differentiable subgraph
    std::vector<Var::Node*> order;
    std::unordered_set<Var::Node*> seen;
    std::vector<Var::Node*> stack{loss.node()};
    seen.insert(loss.node());
    while (!stack.empty()) {
        Var::Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p.requires_grad() && seen.insert(p.node()).second) stack.push_back(p.node());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const Var::Node* a, const Var::Node* b) { return a->id > b->id; });

    std::unordered_map<Var::Node*, Var> grads;
    grads[loss.node()] = Var::constant(Tensor::full({1}, 1.0, loss.value().dtype()));

    for (Var::Node* n : order) {
        auto it = grads.find(n);
        if (it == grads.end() || !n->backward) continue;
        std::vector<Var> pg = n->backward(it->second);
        for (std::size_t i = 0; i < n->parents.size(); ++i) {
            const Var& parent = n->parents[i];
            if (!parent.requires_grad() || i >= pg.size() || !pg[i].defined()) continue;
            auto pit = grads.find(parent.node());
            if (pit == grads.end())
                grads.emplace(parent.node(), pg[i]);
            else
                pit->second = add(pit->second, pg[i]);
        }
    }

    std::vector<Var> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        auto it = grads.find(p.node());
        out.push_back(it != grads.end() ? it->second : zeros_like_const(p));
    }
    return out;
}

std::vector<Var> grad_of_gradnorm(const Var& loss, const std::vector<Var>& params) {
    std::vector<Var> g = grad(loss, params);
    Var norm = l2_norm(g);
    return grad(norm, params);
}

} // namespace gpa
