#include "gatera/tensor.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <utility>

namespace gatera {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::vector<Index> row_major_strides(const Shape& s) {
    std::vector<Index> st(s.size());
    Index acc = 1;
    for (std::size_t i = s.size(); i-- > 0;) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

[[noreturn]] void throw_dim(const std::string& op, const Shape& a, const Shape& b) {
    throw DimensionError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void check_rank2(const std::string& op, const Tensor& t) {
    if (t.rank() != 2) {
        throw DimensionError(op + ": expected rank-2 tensor, got shape " + shape_str(t.shape()));
    }
}

// b broadcasts against a: same rank, each b dim equal to a's or 1.
bool broadcast_ok(const Shape& a, const Shape& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (b[i] != a[i] && b[i] != 1) return false;
    }
    return true;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// Maps a linear index into a onto the matching linear index into b under the
// broadcast rule above.
struct BroadcastMap {
    std::vector<Index> a_strides;
    std::vector<Index> b_strides;  // zeroed on broadcast axes
    Index operator()(Index a_lin) const {
        Index b_lin = 0;
        Index rem = a_lin;
        for (std::size_t d = 0; d < a_strides.size(); ++d) {
            Index coord = rem / a_strides[d];
            rem %= a_strides[d];
            b_lin += coord * b_strides[d];
        }
        return b_lin;
    }
};

BroadcastMap make_broadcast_map(const Shape& a, const Shape& b) {
    BroadcastMap m;
    m.a_strides = row_major_strides(a);
    m.b_strides = row_major_strides(b);
    for (std::size_t d = 0; d < b.size(); ++d) {
        if (b[d] == 1 && a[d] != 1) m.b_strides[d] = 0;
    }
    return m;
}

// Sums grad contributions over the axes b was broadcast along.
Flat reduce_to(const Flat& grad_out, const Shape& out_shape, const Shape& b_shape) {
    if (same_shape(out_shape, b_shape)) return grad_out;
    Flat r = Flat::Zero(shape_numel(b_shape));
    BroadcastMap m = make_broadcast_map(out_shape, b_shape);
    for (Index i = 0; i < grad_out.size(); ++i) r[m(i)] += grad_out[i];
    return r;
}

bool grad_wanted(const Tensor& t) { return t.requires_grad(); }

// Marks the output and records the closure when appropriate.
template <typename Fn>
void record_if_needed(Tensor& out, bool any_input_grad, Fn&& backward_fn) {
    Tape* tape = Tape::active();
    if (tape != nullptr && any_input_grad) {
        out.set_requires_grad(true);
        tape->record(out, std::forward<Fn>(backward_fn));
    }
}

ConstMatView as_matrix(const Flat& f, Index r, Index c) { return ConstMatView(f.data(), r, c); }
MatView as_matrix_mut(Flat& f, Index r, Index c) { return MatView(f.data(), r, c); }

// Generic elementwise binary with b-broadcast; df_a/df_b produce the local
// partials as functions of (a_i, b_i).
Tensor binary_broadcast(const std::string& name, const Tensor& a, const Tensor& b,
                        double (*fwd)(double, double), double (*df_a)(double, double),
                        double (*df_b)(double, double)) {
    if (!broadcast_ok(a.shape(), b.shape())) throw_dim(name, a.shape(), b.shape());
    Flat out(a.numel());
    if (same_shape(a.shape(), b.shape())) {
        for (Index i = 0; i < out.size(); ++i) out[i] = fwd(a.value()[i], b.value()[i]);
    } else {
        BroadcastMap m = make_broadcast_map(a.shape(), b.shape());
        for (Index i = 0; i < out.size(); ++i) out[i] = fwd(a.value()[i], b.value()[m(i)]);
    }
    Tensor y = Tensor::from_flat(a.shape(), std::move(out));
    record_if_needed(y, grad_wanted(a) || grad_wanted(b), [=]() mutable {
        if (!y.has_grad()) return;
        const Flat& go = y.grad();
        const bool bcast = !same_shape(a.shape(), b.shape());
        BroadcastMap m;
        if (bcast) m = make_broadcast_map(a.shape(), b.shape());
        if (a.requires_grad()) {
            Flat ga(a.numel());
            for (Index i = 0; i < ga.size(); ++i) {
                double bv = bcast ? b.value()[m(i)] : b.value()[i];
                ga[i] = go[i] * df_a(a.value()[i], bv);
            }
            a.accumulate_grad(ga);
        }
        if (b.requires_grad()) {
            Flat contrib(a.numel());
            for (Index i = 0; i < contrib.size(); ++i) {
                double bv = bcast ? b.value()[m(i)] : b.value()[i];
                contrib[i] = go[i] * df_b(a.value()[i], bv);
            }
            b.accumulate_grad(reduce_to(contrib, a.shape(), b.shape()));
        }
    });
    return y;
}

// Pointwise unary; dfn receives (input value, output value).
template <typename FwdFn, typename DFn>
Tensor unary_pointwise(const Tensor& a, FwdFn fwd, DFn dfn) {
    Flat out(a.numel());
    for (Index i = 0; i < out.size(); ++i) out[i] = fwd(a.value()[i]);
    Tensor y = Tensor::from_flat(a.shape(), std::move(out));
    record_if_needed(y, grad_wanted(a), [=]() mutable {
        if (!y.has_grad() || !a.requires_grad()) return;
        const Flat& go = y.grad();
        Flat ga(a.numel());
        for (Index i = 0; i < ga.size(); ++i) ga[i] = go[i] * dfn(a.value()[i], y.value()[i]);
        a.accumulate_grad(ga);
    });
    return y;
}

}  // namespace

Index shape_numel(const Shape& s) {
    Index n = 1;
    for (Index d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

detail::TensorImpl& Tensor::ref() {
    if (!impl_) throw ContractError("Tensor: use of an undefined tensor");
    return *impl_;
}

const detail::TensorImpl& Tensor::ref() const {
    if (!impl_) throw ContractError("Tensor: use of an undefined tensor");
    return *impl_;
}

detail::TensorImpl& Tensor::mut() const {
    if (!impl_) throw ContractError("Tensor: use of an undefined tensor");
    return *impl_;
}

Tensor Tensor::from_flat(Shape shape, Flat values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("Tensor: shape " + shape_str(shape) + " wants " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(values.size()));
    }
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->value = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    Flat v = Flat::Zero(shape_numel(shape));
    return from_flat(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
    Flat v = Flat::Constant(shape_numel(shape), fill);
    return from_flat(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values,
                           bool requires_grad) {
    Flat v(static_cast<Index>(values.size()));
    Index i = 0;
    for (double x : values) v[i++] = x;
    return from_flat(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_values(Shape shape, const std::vector<double>& values, bool requires_grad) {
    Flat v(static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Index>(i)] = values[i];
    return from_flat(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_values({1}, {v}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
    Flat v(shape_numel(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(lo, hi);
    return from_flat(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return ref().shape; }
Index Tensor::numel() const { return ref().value.size(); }

Index Tensor::rows() const {
    check_rank2("rows", *this);
    return shape()[0];
}

Index Tensor::cols() const {
    check_rank2("cols", *this);
    return shape()[1];
}

Flat& Tensor::value() { return ref().value; }
const Flat& Tensor::value() const { return ref().value; }

double Tensor::item() const {
    if (numel() != 1) {
        throw ContractError("item: tensor has " + std::to_string(numel()) + " elements");
    }
    return ref().value[0];
}

bool Tensor::requires_grad() const { return ref().requires_grad; }
void Tensor::set_requires_grad(bool v) { ref().requires_grad = v; }

bool Tensor::has_grad() const { return ref().grad.size() != 0; }

const Flat& Tensor::grad() const {
    if (!has_grad()) throw ContractError("grad: no gradient present");
    return ref().grad;
}

void Tensor::accumulate_grad(const Flat& g) const {
    detail::TensorImpl& t = mut();
    if (!t.requires_grad) return;  // requires_grad==false never accumulates
    if (g.size() != t.value.size()) {
        throw DimensionError("accumulate_grad: got " + std::to_string(g.size()) +
                             " values for shape " + shape_str(t.shape));
    }
    if (t.grad.size() == 0) t.grad = Flat::Zero(t.value.size());
    t.grad += g;
}

void Tensor::zero_grad() const { mut().grad.resize(0); }

ConstMatView Tensor::matrix() const {
    check_rank2("matrix", *this);
    return as_matrix(ref().value, shape()[0], shape()[1]);
}

MatView Tensor::grad_matrix() const {
    check_rank2("grad_matrix", *this);
    detail::TensorImpl& t = mut();
    if (t.grad.size() == 0) t.grad = Flat::Zero(t.value.size());
    return as_matrix_mut(t.grad, shape()[0], shape()[1]);
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const Tensor& output, std::function<void()> backward_fn) {
    nodes_.push_back(Node{output, std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " +
                            shape_str(loss.shape()));
    }
    // Intermediate grads are per-call scratch; leaf grads persist so repeated
    // calls accumulate.
    for (Node& n : nodes_) n.output.zero_grad();
    Tensor seed = loss;
    seed.accumulate_grad(Flat::Ones(1));
    for (std::size_t i = nodes_.size(); i-- > 0;) nodes_[i].backward_fn();
}

TapeGuard::TapeGuard(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeGuard::~TapeGuard() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
    Tape* tape = Tape::active();
    if (tape == nullptr) throw ContractError("backward: no active tape");
    tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_rank2("matmul", a);
    check_rank2("matmul", b);
    if (a.shape()[1] != b.shape()[0]) throw_dim("matmul", a.shape(), b.shape());
    const Index m = a.shape()[0], n = b.shape()[1];
    Flat out(m * n);
    as_matrix_mut(out, m, n).noalias() = a.matrix() * b.matrix();
    Tensor y = Tensor::from_flat({m, n}, std::move(out));
    record_if_needed(y, grad_wanted(a) || grad_wanted(b), [=]() mutable {
        if (!y.has_grad()) return;
        ConstMatView go = as_matrix(y.grad(), m, n);
        if (a.requires_grad()) a.grad_matrix().noalias() += go * b.matrix().transpose();
        if (b.requires_grad()) b.grad_matrix().noalias() += a.matrix().transpose() * go;
    });
    return y;
}

Tensor transpose(const Tensor& a) {
    check_rank2("transpose", a);
    const Index r = a.shape()[0], c = a.shape()[1];
    Flat out(r * c);
    as_matrix_mut(out, c, r) = a.matrix().transpose();
    Tensor y = Tensor::from_flat({c, r}, std::move(out));
    record_if_needed(y, grad_wanted(a), [=]() mutable {
        if (!y.has_grad() || !a.requires_grad()) return;
        a.grad_matrix() += as_matrix(y.grad(), c, r).transpose();
    });
    return y;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor hadamard(const Tensor& a, const Tensor& b) {
    return binary_broadcast(
        "hadamard", a, b, [](double x, double v) { return x * v; },
        [](double, double v) { return v; }, [](double x, double) { return x; });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_broadcast(
        "add", a, b, [](double x, double v) { return x + v; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_broadcast(
        "sub", a, b, [](double x, double v) { return x - v; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor scalar_mul(const Tensor& a, double c) {
    return unary_pointwise(
        a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor scalar_add(const Tensor& a, double c) {
    return unary_pointwise(
        a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_pointwise(
        a,
        [](double x) {
            // Split on sign so neither branch overflows exp.
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double s) { return s * (1.0 - s); });
}

Tensor log(const Tensor& a) {
    for (Index i = 0; i < a.numel(); ++i) {
        if (!(a.value()[i] > 0.0)) {
            throw DomainError("log: non-positive input " + std::to_string(a.value()[i]) +
                              " at flat index " + std::to_string(i));
        }
    }
    return unary_pointwise(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
    return unary_pointwise(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor relu(const Tensor& a) {
    return unary_pointwise(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor rsqrt(const Tensor& a) {
    for (Index i = 0; i < a.numel(); ++i) {
        if (!(a.value()[i] > 0.0)) {
            throw DomainError("rsqrt: non-positive input " + std::to_string(a.value()[i]) +
                              " at flat index " + std::to_string(i));
        }
    }
    return unary_pointwise(
        a, [](double x) { return 1.0 / std::sqrt(x); },
        [](double, double y) { return -0.5 * y * y * y; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (!(lo <= hi)) throw ContractError("clamp: lo must be <= hi");
    return unary_pointwise(
        a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor softmax_lastdim(const Tensor& a) {
    if (a.rank() < 1) throw DimensionError("softmax_lastdim: rank-0 input");
    const Index last = a.shape().back();
    const Index slices = a.numel() / last;
    Flat out(a.numel());
    for (Index s = 0; s < slices; ++s) {
        const double* x = a.value().data() + s * last;
        double* y = out.data() + s * last;
        double mx = x[0];
        for (Index i = 1; i < last; ++i) mx = std::max(mx, x[i]);
        double denom = 0.0;
        for (Index i = 0; i < last; ++i) {
            y[i] = std::exp(x[i] - mx);
            denom += y[i];
        }
        for (Index i = 0; i < last; ++i) y[i] /= denom;
    }
    Tensor y = Tensor::from_flat(a.shape(), std::move(out));
    record_if_needed(y, grad_wanted(a), [=]() mutable {
        if (!y.has_grad() || !a.requires_grad()) return;
        const Flat& go = y.grad();
        Flat ga(a.numel());
        for (Index s = 0; s < slices; ++s) {
            const double* sm = y.value().data() + s * last;
            const double* g = go.data() + s * last;
            double dot = 0.0;
            for (Index i = 0; i < last; ++i) dot += g[i] * sm[i];
            for (Index i = 0; i < last; ++i) ga[s * last + i] = sm[i] * (g[i] - dot);
        }
        a.accumulate_grad(ga);
    });
    return y;
}

Tensor sum(const Tensor& a) {
    Tensor y = Tensor::scalar(a.value().sum());
    record_if_needed(y, grad_wanted(a), [=]() mutable {
        if (!y.has_grad() || !a.requires_grad()) return;
        a.accumulate_grad(Flat::Constant(a.numel(), y.grad()[0]));
    });
    return y;
}

Tensor mean(const Tensor& a) {
    const double inv_n = 1.0 / static_cast<double>(a.numel());
    Tensor y = Tensor::scalar(a.value().sum() * inv_n);
    record_if_needed(y, grad_wanted(a), [=]() mutable {
        if (!y.has_grad() || !a.requires_grad()) return;
        a.accumulate_grad(Flat::Constant(a.numel(), y.grad()[0] * inv_n));
    });
    return y;
}

// ---------------------------------------------------------------------------
// Gather / slice / concat
// ---------------------------------------------------------------------------

Tensor row_gather(const Tensor& table, const std::vector<int>& ids) {
    check_rank2("row_gather", table);
    const Index rows = table.shape()[0], cols = table.shape()[1];
    for (int id : ids) {
        if (id < 0 || id >= rows) {
            throw InputError("row_gather: id " + std::to_string(id) + " out of range [0," +
                             std::to_string(rows) + ")");
        }
    }
    const Index t = static_cast<Index>(ids.size());
    Flat out(t * cols);
    for (Index i = 0; i < t; ++i) {
        out.segment(i * cols, cols) = table.value().segment(ids[i] * cols, cols);
    }
    Tensor y = Tensor::from_flat({t, cols}, std::move(out));
    record_if_needed(y, grad_wanted(table), [=]() mutable {
        if (!y.has_grad() || !table.requires_grad()) return;
        Flat g = Flat::Zero(table.numel());
        for (Index i = 0; i < t; ++i) {
            g.segment(ids[i] * cols, cols) += y.grad().segment(i * cols, cols);
        }
        table.accumulate_grad(g);
    });
    return y;
}

Tensor slice_rows(const Tensor& a, Index start, Index count) {
    check_rank2("slice_rows", a);
    const Index rows = a.shape()[0], cols = a.shape()[1];
    if (start < 0 || count < 0 || start + count > rows) {
        throw DimensionError("slice_rows: range [" + std::to_string(start) + "," +
                             std::to_string(start + count) + ") outside " + shape_str(a.shape()));
    }
    Flat out = a.value().segment(start * cols, count * cols);
    Tensor y = Tensor::from_flat({count, cols}, std::move(out));
    record_if_needed(y, grad_wanted(a), [=]() mutable {
        if (!y.has_grad() || !a.requires_grad()) return;
        Flat g = Flat::Zero(a.numel());
        g.segment(start * cols, count * cols) = y.grad();
        a.accumulate_grad(g);
    });
    return y;
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
    check_rank2("slice_cols", a);
    const Index rows = a.shape()[0], cols = a.shape()[1];
    if (start < 0 || count < 0 || start + count > cols) {
        throw DimensionError("slice_cols: range [" + std::to_string(start) + "," +
                             std::to_string(start + count) + ") outside " + shape_str(a.shape()));
    }
    Flat out(rows * count);
    as_matrix_mut(out, rows, count) = a.matrix().middleCols(start, count);
    Tensor y = Tensor::from_flat({rows, count}, std::move(out));
    record_if_needed(y, grad_wanted(a), [=]() mutable {
        if (!y.has_grad() || !a.requires_grad()) return;
        Flat g = Flat::Zero(a.numel());
        as_matrix_mut(g, rows, cols).middleCols(start, count) = as_matrix(y.grad(), rows, count);
        a.accumulate_grad(g);
    });
    return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty part list");
    const Index cols = parts[0].cols();
    Index rows = 0;
    bool any_grad = false;
    for (const Tensor& p : parts) {
        if (p.cols() != cols) throw_dim("concat_rows", parts[0].shape(), p.shape());
        rows += p.rows();
        any_grad = any_grad || p.requires_grad();
    }
    Flat out(rows * cols);
    Index offset = 0;
    for (const Tensor& p : parts) {
        out.segment(offset, p.numel()) = p.value();
        offset += p.numel();
    }
    Tensor y = Tensor::from_flat({rows, cols}, std::move(out));
    record_if_needed(y, any_grad, [=]() mutable {
        if (!y.has_grad()) return;
        Index off = 0;
        for (const Tensor& p : parts) {
            if (p.requires_grad()) p.accumulate_grad(y.grad().segment(off, p.numel()));
            off += p.numel();
        }
    });
    return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty part list");
    const Index rows = parts[0].rows();
    Index cols = 0;
    bool any_grad = false;
    for (const Tensor& p : parts) {
        if (p.rows() != rows) throw_dim("concat_cols", parts[0].shape(), p.shape());
        cols += p.cols();
        any_grad = any_grad || p.requires_grad();
    }
    Flat out(rows * cols);
    MatView om = as_matrix_mut(out, rows, cols);
    Index offset = 0;
    for (const Tensor& p : parts) {
        om.middleCols(offset, p.cols()) = p.matrix();
        offset += p.cols();
    }
    Tensor y = Tensor::from_flat({rows, cols}, std::move(out));
    record_if_needed(y, any_grad, [=]() mutable {
        if (!y.has_grad()) return;
        ConstMatView gm = as_matrix(y.grad(), rows, cols);
        Index off = 0;
        for (const Tensor& p : parts) {
            if (p.requires_grad()) {
                Flat g(p.numel());
                as_matrix_mut(g, rows, p.cols()) = gm.middleCols(off, p.cols());
                p.accumulate_grad(g);
            }
            off += p.cols();
        }
    });
    return y;
}

Tensor detach(const Tensor& a) { return Tensor::from_flat(a.shape(), a.value()); }

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& at,
                              double eps) {
    if (!(eps > 0.0)) throw ContractError("finite_difference_grad: eps must be > 0");
    const Flat& base = at.value();
    Flat g(base.size());
    for (Index i = 0; i < base.size(); ++i) {
        Flat plus = base;
        plus[i] += eps;
        Flat minus = base;
        minus[i] -= eps;
        const double fp = f(Tensor::from_flat(at.shape(), std::move(plus)));
        const double fm = f(Tensor::from_flat(at.shape(), std::move(minus)));
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return Tensor::from_flat(at.shape(), std::move(g));
}

}  // namespace gatera
