#pragma once

// Reverse-mode differentiation over dense Tensors.
//
// Every operation appends a node to a Tape holding the forward value and,
// when any operand requires a gradient, a backward rule. Nodes are appended
// in evaluation order, so iterating the tape backwards is a valid
// topological order for the chain rule.
//
// Broadcasting: binary elementwise operations accept operands with equal
// shapes, or where one shape is a suffix of the other. The shorter operand
// is repeated over the leading axes of the longer one, in either operand
// position. Nothing else broadcasts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stg2seq/errors.hpp"
#include "stg2seq/tensor.hpp"

namespace stg2seq {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t rank() const { return shape().size(); }
    std::size_t extent(std::size_t axis) const { return shape().at(axis); }
    bool requires_grad() const;

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Ordered record of operations for one forward/backward pass.
///
/// backward() may be called once per tape; a second call throws
/// ContractError. Build a fresh tape for every step.
class Tape {
public:
    /// Receives the gradient flowing into the node and the node's own value.
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out, const Tensor& value_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value) {
        const bool rg = value.requires_grad();
        return leaf(std::move(value), rg);
    }

    Var leaf(Tensor value, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), Tensor(), false, requires_grad, true, {}, nullptr, "leaf"});
        return Var(this, nodes_.size() - 1);
    }

    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Appends an operation result. The backward rule is dropped when no
    /// input requires a gradient.
    Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward, const char* op) {
        if (!value.all_finite()) {
            throw NumericalError(std::string("non-finite value produced by ") + op);
        }
        bool rg = false;
        for (std::size_t id : inputs) rg = rg || nodes_.at(id).requires_grad;
        nodes_.push_back(Node{std::move(value), Tensor(), false, rg, false, std::move(inputs),
                              rg ? std::move(backward) : BackwardFn{}, op});
        return Var(this, nodes_.size() - 1);
    }

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }
    bool backward_done() const noexcept { return backward_done_; }

    /// Gradient accumulator of a node, zero-initialized on first access.
    Tensor& grad_buffer(std::size_t id) {
        Node& n = nodes_.at(id);
        if (!n.has_grad) {
            n.grad = Tensor(n.value.shape(), 0.0);
            n.has_grad = true;
        }
        return n.grad;
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    void backward(const Var& loss) {
        if (loss.tape() != this) throw ContractError("backward: loss was not recorded on this tape");
        if (backward_done_) throw ContractError("backward: tape already consumed; build a new tape");
        if (loss.value().size() != 1) {
            throw ContractError("backward: loss must be scalar, got shape " + to_string(loss.shape()));
        }
        backward_done_ = true;
        if (!nodes_[loss.id()].requires_grad) return;
        grad_buffer(loss.id()).fill(1.0);
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.has_grad || !n.backward) continue;
            n.backward(*this, n.grad, n.value);
        }
        for (Node& n : nodes_) {
            if (n.is_leaf && n.requires_grad && !n.has_grad) {
                n.grad = Tensor(n.value.shape(), 0.0);
                n.has_grad = true;
            }
        }
    }

    /// Gradient of a node after backward(); zeros when nothing reached it.
    Tensor gradient(const Var& v) const {
        const Node& n = nodes_.at(v.id());
        return n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0);
    }

    /// Read-only access to the recorded operation names, in order.
    std::vector<std::string> op_names() const {
        std::vector<std::string> out;
        out.reserve(nodes_.size());
        for (const auto& n : nodes_) out.emplace_back(n.op);
        return out;
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad;
        bool requires_grad;
        bool is_leaf;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        const char* op;
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

inline const Tensor& Var::value() const {
    if (!tape_) throw ContractError("use of an unbound Var");
    return tape_->value(id_);
}

inline bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
        throw ContractError("operands belong to different tapes");
    }
    return *a.tape();
}

inline Tape& tape_of(const Var& a) {
    if (!a.valid()) throw ContractError("use of an unbound Var");
    return *a.tape();
}

inline std::size_t product(const Shape& s, std::size_t begin, std::size_t end) {
    std::size_t p = 1;
    for (std::size_t i = begin; i < end; ++i) p *= s[i];
    return p;
}

inline bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

// C[m,n] += A[m,p] * B[p,n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t p, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * p;
        for (std::size_t k = 0; k < p; ++k) {
            const double aik = ai[k];
            const double* bk = b + k * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
}

// C[m,p] += G[m,n] * B[p,n]^T
inline void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t p, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* gi = g + i * n;
        double* ci = c + i * p;
        for (std::size_t k = 0; k < p; ++k) {
            const double* bk = b + k * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += gi[j] * bk[j];
            ci[k] += s;
        }
    }
}

// C[p,n] += A[m,p]^T * G[m,n]
inline void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t p, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * p;
        const double* gi = g + i * n;
        for (std::size_t k = 0; k < p; ++k) {
            const double aik = ai[k];
            double* ck = c + k * n;
            for (std::size_t j = 0; j < n; ++j) ck[j] += aik * gi[j];
        }
    }
}

inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

/// (m,p) x (p,n) -> (m,n). A 2-D left operand may also multiply every
/// leading slice of a 3-D right operand: (m,p) x (B,p,n) -> (B,m,n).
inline Var matmul(const Var& a, const Var& b) {
    Tape& tape = detail::same_tape(a, b);
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    auto mismatch = [&] {
        return DimensionError("matmul: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
    };
    if (sa.size() != 2 || (sb.size() != 2 && sb.size() != 3)) throw mismatch();
    const std::size_t batch = sb.size() == 3 ? sb[0] : 1;
    const std::size_t m = sa[0], p = sa[1];
    const std::size_t pb = sb[sb.size() - 2], n = sb[sb.size() - 1];
    if (p != pb) throw mismatch();

    Shape out_shape = sb.size() == 3 ? Shape{batch, m, n} : Shape{m, n};
    Tensor out(out_shape, 0.0);
    const double* ad = a.value().data().data();
    const double* bd = b.value().data().data();
    for (std::size_t s = 0; s < batch; ++s) {
        detail::gemm_nn(ad, bd + s * p * n, out.data().data() + s * m * n, m, p, n);
    }
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(
        std::move(out), {ia, ib},
        [ia, ib, batch, m, p, n](Tape& t, const Tensor& g, const Tensor&) {
            const double* ad = t.value(ia).data().data();
            const double* bd = t.value(ib).data().data();
            if (t.requires_grad(ia)) {
                double* ga = t.grad_buffer(ia).data().data();
                for (std::size_t s = 0; s < batch; ++s)
                    detail::gemm_nt(g.data().data() + s * m * n, bd + s * p * n, ga, m, p, n);
            }
            if (t.requires_grad(ib)) {
                double* gb = t.grad_buffer(ib).data().data();
                for (std::size_t s = 0; s < batch; ++s)
                    detail::gemm_tn(ad, g.data().data() + s * m * n, gb + s * p * n, m, p, n);
            }
        },
        "matmul");
}

// ---------------------------------------------------------------------------
// Elementwise binary operations
// ---------------------------------------------------------------------------

enum class BinaryKind { add, sub, mul };

inline Var elementwise(const Var& a, const Var& b, BinaryKind kind) {
    Tape& tape = detail::same_tape(a, b);
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    const bool a_big = detail::is_suffix(sb, sa);
    if (!a_big && !detail::is_suffix(sa, sb)) {
        throw DimensionError("elementwise: shapes " + to_string(sa) + " and " + to_string(sb) +
                             " are not broadcastable");
    }
    const Shape out_shape = a_big ? sa : sb;
    const std::size_t na = a.value().size(), nb = b.value().size();
    const std::size_t n = std::max(na, nb);
    const double* ad = a.value().data().data();
    const double* bd = b.value().data().data();
    Tensor out(out_shape, 0.0);
    double* od = out.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ad[i % na], y = bd[i % nb];
        switch (kind) {
            case BinaryKind::add: od[i] = x + y; break;
            case BinaryKind::sub: od[i] = x - y; break;
            case BinaryKind::mul: od[i] = x * y; break;
        }
    }
    const std::size_t ia = a.id(), ib = b.id();
    const char* name = kind == BinaryKind::add ? "add" : kind == BinaryKind::sub ? "sub" : "mul";
    return tape.record(
        std::move(out), {ia, ib},
        [ia, ib, na, nb, n, kind](Tape& t, const Tensor& g, const Tensor&) {
            const double* gd = g.data().data();
            if (t.requires_grad(ia)) {
                double* ga = t.grad_buffer(ia).data().data();
                const double* bd = t.value(ib).data().data();
                for (std::size_t i = 0; i < n; ++i)
                    ga[i % na] += kind == BinaryKind::mul ? gd[i] * bd[i % nb] : gd[i];
            }
            if (t.requires_grad(ib)) {
                double* gb = t.grad_buffer(ib).data().data();
                const double* ad = t.value(ia).data().data();
                for (std::size_t i = 0; i < n; ++i) {
                    switch (kind) {
                        case BinaryKind::add: gb[i % nb] += gd[i]; break;
                        case BinaryKind::sub: gb[i % nb] -= gd[i]; break;
                        case BinaryKind::mul: gb[i % nb] += gd[i] * ad[i % na]; break;
                    }
                }
            }
        },
        name);
}

inline Var add(const Var& a, const Var& b) { return elementwise(a, b, BinaryKind::add); }
inline Var sub(const Var& a, const Var& b) { return elementwise(a, b, BinaryKind::sub); }
inline Var mul(const Var& a, const Var& b) { return elementwise(a, b, BinaryKind::mul); }

/// Multiplies by a constant.
inline Var scale(const Var& x, double factor) {
    Tape& tape = detail::tape_of(x);
    Tensor out = x.value();
    for (double& v : out.data()) v *= factor;
    const std::size_t ix = x.id();
    return tape.record(
        std::move(out), {ix},
        [ix, factor](Tape& t, const Tensor& g, const Tensor&) {
            double* gx = t.grad_buffer(ix).data().data();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
        },
        "scale");
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { sigmoid, tanh, relu };

inline Var activation(const Var& x, Activation kind) {
    Tape& tape = detail::tape_of(x);
    Tensor out = x.value();
    for (double& v : out.data()) {
        switch (kind) {
            case Activation::sigmoid: v = detail::stable_sigmoid(v); break;
            case Activation::tanh: v = std::tanh(v); break;
            case Activation::relu: v = v > 0.0 ? v : 0.0; break;
        }
    }
    const std::size_t ix = x.id();
    const char* name = kind == Activation::sigmoid ? "sigmoid" : kind == Activation::tanh ? "tanh" : "relu";
    return tape.record(
        std::move(out), {ix},
        [ix, kind](Tape& t, const Tensor& g, const Tensor& y) {
            double* gx = t.grad_buffer(ix).data().data();
            const double* xd = t.value(ix).data().data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                double d = 0.0;
                switch (kind) {
                    case Activation::sigmoid: d = y[i] * (1.0 - y[i]); break;
                    case Activation::tanh: d = 1.0 - y[i] * y[i]; break;
                    case Activation::relu: d = xd[i] > 0.0 ? 1.0 : 0.0; break;
                }
                gx[i] += g[i] * d;
            }
        },
        name);
}

inline Var sigmoid(const Var& x) { return activation(x, Activation::sigmoid); }
inline Var tanh(const Var& x) { return activation(x, Activation::tanh); }
inline Var relu(const Var& x) { return activation(x, Activation::relu); }

/// Normalized exponentials along one axis, computed after subtracting the
/// slice maximum.
inline Var softmax(const Var& x, std::size_t axis) {
    Tape& tape = detail::tape_of(x);
    const Shape& s = x.shape();
    if (axis >= s.size()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + to_string(s));
    }
    const std::size_t outer = detail::product(s, 0, axis);
    const std::size_t len = s[axis];
    const std::size_t inner = detail::product(s, axis + 1, s.size());
    Tensor out = x.value();
    double* d = out.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            double* base = d + o * len * inner + in;
            double mx = base[0];
            for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, base[j * inner]);
            double total = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                base[j * inner] = std::exp(base[j * inner] - mx);
                total += base[j * inner];
            }
            for (std::size_t j = 0; j < len; ++j) base[j * inner] /= total;
        }
    }
    const std::size_t ix = x.id();
    return tape.record(
        std::move(out), {ix},
        [ix, outer, len, inner](Tape& t, const Tensor& g, const Tensor& y) {
            double* gx = t.grad_buffer(ix).data().data();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t off = o * len * inner + in;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < len; ++j) dot += g[off + j * inner] * y[off + j * inner];
                    for (std::size_t j = 0; j < len; ++j) {
                        const std::size_t k = off + j * inner;
                        gx[k] += y[k] * (g[k] - dot);
                    }
                }
            }
        },
        "softmax");
}

// ---------------------------------------------------------------------------
// Shape operations
// ---------------------------------------------------------------------------

inline Var reshape(const Var& x, Shape shape) {
    Tape& tape = detail::tape_of(x);
    if (element_count(shape) != x.value().size()) {
        throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    Tensor out = x.value().reshaped(std::move(shape));
    const std::size_t ix = x.id();
    return tape.record(
        std::move(out), {ix},
        [ix](Tape& t, const Tensor& g, const Tensor&) {
            double* gx = t.grad_buffer(ix).data().data();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        },
        "reshape");
}

/// Joins tensors along an existing axis; all other extents must agree.
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no operands");
    Tape& tape = detail::tape_of(parts.front());
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) {
        throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " + to_string(first));
    }
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<std::size_t> ids;
    std::vector<std::size_t> chunk;  // elements per outer index contributed by each part
    for (const Var& p : parts) {
        detail::same_tape(parts.front(), p);
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
        if (!ok) {
            throw DimensionError("concat: extent mismatch between " + to_string(first) + " and " + to_string(s) +
                                 " along non-concat axes");
        }
        out_shape[axis] += s[axis];
        ids.push_back(p.id());
    }
    const std::size_t outer = detail::product(first, 0, axis);
    const std::size_t inner = detail::product(first, axis + 1, first.size());
    for (const Var& p : parts) chunk.push_back(p.shape()[axis] * inner);
    const std::size_t row = out_shape[axis] * inner;

    Tensor out(out_shape, 0.0);
    double* od = out.data().data();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const double* pd = parts[k].value().data().data();
        for (std::size_t o = 0; o < outer; ++o) std::copy_n(pd + o * chunk[k], chunk[k], od + o * row + offset);
        offset += chunk[k];
    }
    return tape.record(
        std::move(out), ids,
        [ids, chunk, outer, row](Tape& t, const Tensor& g, const Tensor&) {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (t.requires_grad(ids[k])) {
                    double* gp = t.grad_buffer(ids[k]).data().data();
                    for (std::size_t o = 0; o < outer; ++o) {
                        const double* src = g.data().data() + o * row + offset;
                        for (std::size_t j = 0; j < chunk[k]; ++j) gp[o * chunk[k] + j] += src[j];
                    }
                }
                offset += chunk[k];
            }
        },
        "concat");
}

/// Elements [begin, end) along one axis.
inline Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
    Tape& tape = detail::tape_of(x);
    const Shape& s = x.shape();
    if (axis >= s.size() || begin > end || end > s[axis]) {
        throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") on axis " + std::to_string(axis) + " invalid for " + to_string(s));
    }
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    const std::size_t outer = detail::product(s, 0, axis);
    const std::size_t inner = detail::product(s, axis + 1, s.size());
    const std::size_t in_row = s[axis] * inner;
    const std::size_t out_row = (end - begin) * inner;
    const std::size_t skip = begin * inner;
    Tensor out(out_shape, 0.0);
    const double* xd = x.value().data().data();
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(xd + o * in_row + skip, out_row, out.data().data() + o * out_row);
    const std::size_t ix = x.id();
    return tape.record(
        std::move(out), {ix},
        [ix, outer, in_row, out_row, skip](Tape& t, const Tensor& g, const Tensor&) {
            double* gx = t.grad_buffer(ix).data().data();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t j = 0; j < out_row; ++j) gx[o * in_row + skip + j] += g[o * out_row + j];
        },
        "slice");
}

enum class PadSide { front, back };

/// Inserts `amount` zero slices at the front or back of an axis.
inline Var zero_pad(const Var& x, std::size_t axis, std::size_t amount, PadSide side) {
    Tape& tape = detail::tape_of(x);
    const Shape& s = x.shape();
    if (axis >= s.size()) {
        throw DimensionError("zero_pad: axis " + std::to_string(axis) + " out of range for " + to_string(s));
    }
    Shape out_shape = s;
    out_shape[axis] += amount;
    const std::size_t outer = detail::product(s, 0, axis);
    const std::size_t inner = detail::product(s, axis + 1, s.size());
    const std::size_t in_row = s[axis] * inner;
    const std::size_t out_row = out_shape[axis] * inner;
    const std::size_t skip = side == PadSide::front ? amount * inner : 0;
    Tensor out(out_shape, 0.0);
    const double* xd = x.value().data().data();
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(xd + o * in_row, in_row, out.data().data() + o * out_row + skip);
    const std::size_t ix = x.id();
    return tape.record(
        std::move(out), {ix},
        [ix, outer, in_row, out_row, skip](Tape& t, const Tensor& g, const Tensor&) {
            double* gx = t.grad_buffer(ix).data().data();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t j = 0; j < in_row; ++j) gx[o * in_row + j] += g[o * out_row + skip + j];
        },
        "zero_pad");
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class ReduceKind { sum, mean };

/// Reduces one axis away, or every element when `axis` is empty.
inline Var reduce(const Var& x, ReduceKind kind, std::optional<std::size_t> axis = std::nullopt) {
    Tape& tape = detail::tape_of(x);
    const Shape& s = x.shape();
    std::size_t outer = 1, len = x.value().size(), inner = 1;
    Shape out_shape{};
    if (axis) {
        if (*axis >= s.size()) {
            throw DimensionError("reduce: axis " + std::to_string(*axis) + " out of range for " + to_string(s));
        }
        outer = detail::product(s, 0, *axis);
        len = s[*axis];
        inner = detail::product(s, *axis + 1, s.size());
        out_shape = s;
        out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(*axis));
    }
    const double factor = kind == ReduceKind::mean ? 1.0 / static_cast<double>(len) : 1.0;
    Tensor out(out_shape, 0.0);
    const double* xd = x.value().data().data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < len; ++j)
            for (std::size_t in = 0; in < inner; ++in) out[o * inner + in] += xd[(o * len + j) * inner + in];
    if (kind == ReduceKind::mean)
        for (double& v : out.data()) v *= factor;
    const std::size_t ix = x.id();
    return tape.record(
        std::move(out), {ix},
        [ix, outer, len, inner, factor](Tape& t, const Tensor& g, const Tensor&) {
            double* gx = t.grad_buffer(ix).data().data();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t j = 0; j < len; ++j)
                    for (std::size_t in = 0; in < inner; ++in)
                        gx[(o * len + j) * inner + in] += factor * g[o * inner + in];
        },
        kind == ReduceKind::sum ? "sum" : "mean");
}

inline Var sum(const Var& x) { return reduce(x, ReduceKind::sum); }
inline Var sum(const Var& x, std::size_t axis) { return reduce(x, ReduceKind::sum, axis); }
inline Var mean(const Var& x) { return reduce(x, ReduceKind::mean); }
inline Var mean(const Var& x, std::size_t axis) { return reduce(x, ReduceKind::mean, axis); }

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// Scalar function of one tensor, built on the supplied tape.
using TapeFunction = std::function<Var(Tape&, const Var&)>;

inline double relative_gradient_error(double autodiff, double numeric) {
    return std::abs(autodiff - numeric) / std::max(1e-8, std::abs(autodiff) + std::abs(numeric));
}

/// Per-coordinate relative error between the autodiff gradient of `f` at
/// `x` and central finite differences with the given step.
inline std::vector<double> gradient_errors(const TapeFunction& f, const Tensor& x, double step) {
    Tensor analytic;
    {
        Tape tape;
        Var leaf = tape.leaf(x, true);
        Var y = f(tape, leaf);
        tape.backward(y);
        analytic = tape.gradient(leaf);
    }
    auto eval = [&](const Tensor& at) {
        Tape tape;
        return f(tape, tape.constant(at)).value().item();
    };
    std::vector<double> errors(x.size());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double up = eval(probe);
        probe[i] = orig - step;
        const double down = eval(probe);
        probe[i] = orig;
        errors[i] = relative_gradient_error(analytic[i], (up - down) / (2.0 * step));
    }
    return errors;
}

/// Maximum of gradient_errors over all coordinates.
inline double gradient_check(const TapeFunction& f, const Tensor& x, double step = 1e-5) {
    const auto errors = gradient_errors(f, x, step);
    return errors.empty() ? 0.0 : *std::max_element(errors.begin(), errors.end());
}

}  // namespace stg2seq
