#include "cdn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <unordered_set>

namespace cdn {

namespace detail {

struct Node {
    Matrix value;
    Matrix grad;
    bool grad_alloc = false;
    bool requires_grad = false;
    bool backward_ran = false;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
};

namespace {
std::atomic<std::uint64_t> next_id{1};
}

} // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

struct OpAccess {
    static const NodePtr& node(const Tensor& t) {
        if (!t.node_) throw ContractError("operation on an empty Tensor");
        return t.node_;
    }
    static Tensor wrap(NodePtr n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }
};

namespace {

NodePtr make_node(Matrix value, std::vector<NodePtr> parents) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = detail::next_id.fetch_add(1, std::memory_order_relaxed);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

void accum(Node& p, const Matrix& delta) {
    if (!p.requires_grad) return;
    if (!p.grad_alloc) {
        p.grad = Matrix::zeros(p.value.rows(), p.value.cols());
        p.grad_alloc = true;
    }
    for (std::size_t i = 0; i < delta.size(); ++i) p.grad[i] += delta[i];
}

const NodePtr& parent(Node& n, std::size_t k) { return n.parents[k]; }

Tensor unary_op(const Tensor& t, const std::function<double(double)>& f,
                const std::function<double(double, double)>& df_from_xy) {
    const NodePtr& p = OpAccess::node(t);
    Matrix out(p->value.rows(), p->value.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(p->value[i]);
    auto n = make_node(std::move(out), {p});
    if (n->requires_grad) {
        n->backprop = [df_from_xy](Node& self) {
            Node& x = *parent(self, 0);
            Matrix d(x.value.rows(), x.value.cols());
            for (std::size_t i = 0; i < d.size(); ++i)
                d[i] = self.grad[i] * df_from_xy(x.value[i], self.value[i]);
            accum(x, d);
        };
    }
    return OpAccess::wrap(n);
}

} // namespace

// -- Tensor ----------------------------------------------------------------

Tensor Tensor::leaf(Matrix value, bool requires_grad) {
    auto n = make_node(std::move(value), {});
    n->requires_grad = requires_grad;
    return OpAccess::wrap(n);
}

Tensor Tensor::constant(Matrix value) { return leaf(std::move(value), false); }

Tensor Tensor::scalar(double v) { return constant(Matrix(1, 1, v)); }

const Matrix& Tensor::value() const {
    if (!node_) throw ContractError("value() on an empty Tensor");
    return node_->value;
}

double Tensor::item() const {
    const Matrix& v = value();
    if (v.size() != 1)
        throw ContractError("item() requires a 1x1 tensor, got " + v.shape_str());
    return v[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && node_->grad_alloc; }

const Matrix& Tensor::grad() const {
    if (!has_grad()) throw ContractError("grad() before backward populated it");
    return node_->grad;
}

void Tensor::zero_grad() const {
    if (!node_) return;
    node_->grad = Matrix::zeros(node_->value.rows(), node_->value.cols());
    node_->grad_alloc = true;
}

void Tensor::scale_grad(double f) const {
    if (!has_grad()) throw ContractError("scale_grad before backward populated it");
    for (std::size_t i = 0; i < node_->grad.size(); ++i) node_->grad[i] *= f;
}

void Tensor::assign(const Matrix& v) const {
    if (!node_) throw ContractError("assign() on an empty Tensor");
    if (!node_->value.same_shape(v))
        throw DimError("assign: shape " + v.shape_str() + " into " +
                       node_->value.shape_str());
    node_->value = v;
}

std::uint64_t Tensor::node_id() const { return node_ ? node_->id : 0; }

// -- binary / matmul --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const NodePtr& pa = OpAccess::node(a);
    const NodePtr& pb = OpAccess::node(b);
    Matrix out = cdn::matmul(pa->value, pb->value);
    auto n = make_node(std::move(out), {pa, pb});
    if (n->requires_grad) {
        n->backprop = [](Node& self) {
            Node& x = *parent(self, 0);
            Node& y = *parent(self, 1);
            if (x.requires_grad) accum(x, matmul_nt(self.grad, y.value));
            if (y.requires_grad) accum(y, matmul_tn(x.value, self.grad));
        };
    }
    return OpAccess::wrap(n);
}

namespace {

enum class AddMode { same, row_broadcast };

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    const NodePtr& pa = OpAccess::node(a);
    const NodePtr& pb = OpAccess::node(b);
    const Matrix& va = pa->value;
    const Matrix& vb = pb->value;
    AddMode mode;
    if (va.same_shape(vb)) {
        mode = AddMode::same;
    } else if (vb.rows() == 1 && vb.cols() == va.cols()) {
        mode = AddMode::row_broadcast;
    } else {
        throw DimError("add: shapes " + va.shape_str() + " and " + vb.shape_str());
    }
    Matrix out = va;
    if (mode == AddMode::same) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    } else {
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += vb(0, c);
    }
    auto n = make_node(std::move(out), {pa, pb});
    if (n->requires_grad) {
        n->backprop = [mode](Node& self) {
            Node& x = *parent(self, 0);
            Node& y = *parent(self, 1);
            if (x.requires_grad) accum(x, self.grad);
            if (!y.requires_grad) return;
            if (mode == AddMode::same) {
                accum(y, self.grad);
            } else {
                Matrix d(1, self.grad.cols());
                for (std::size_t r = 0; r < self.grad.rows(); ++r)
                    for (std::size_t c = 0; c < self.grad.cols(); ++c)
                        d(0, c) += self.grad(r, c);
                accum(y, d);
            }
        };
    }
    return OpAccess::wrap(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const NodePtr& pa = OpAccess::node(a);
    const NodePtr& pb = OpAccess::node(b);
    if (!pa->value.same_shape(pb->value))
        throw DimError("sub: shapes " + pa->value.shape_str() + " and " +
                       pb->value.shape_str());
    Matrix out = pa->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= pb->value[i];
    auto n = make_node(std::move(out), {pa, pb});
    if (n->requires_grad) {
        n->backprop = [](Node& self) {
            Node& x = *parent(self, 0);
            Node& y = *parent(self, 1);
            if (x.requires_grad) accum(x, self.grad);
            if (y.requires_grad) {
                Matrix d = self.grad;
                for (std::size_t i = 0; i < d.size(); ++i) d[i] = -d[i];
                accum(y, d);
            }
        };
    }
    return OpAccess::wrap(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const NodePtr& pa = OpAccess::node(a);
    const NodePtr& pb = OpAccess::node(b);
    if (!pa->value.same_shape(pb->value))
        throw DimError("mul: shapes " + pa->value.shape_str() + " and " +
                       pb->value.shape_str());
    Matrix out = pa->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= pb->value[i];
    auto n = make_node(std::move(out), {pa, pb});
    if (n->requires_grad) {
        n->backprop = [](Node& self) {
            Node& x = *parent(self, 0);
            Node& y = *parent(self, 1);
            if (x.requires_grad) {
                Matrix d = self.grad;
                for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y.value[i];
                accum(x, d);
            }
            if (y.requires_grad) {
                Matrix d = self.grad;
                for (std::size_t i = 0; i < d.size(); ++i) d[i] *= x.value[i];
                accum(y, d);
            }
        };
    }
    return OpAccess::wrap(n);
}

// -- elementwise unaries -----------------------------------------------------

Tensor relu(const Tensor& t) {
    return unary_op(
        t, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& t) {
    return unary_op(
        t, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& t) {
    return unary_op(
        t, [](double x) { return std::exp(x); },
        [](double, double y) { return y; });
}

Tensor log(const Tensor& t) {
    const Matrix& v = OpAccess::node(t)->value;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!(v[i] > 0.0))
            throw DomainError("log: non-positive entry " + std::to_string(v[i]));
    return unary_op(
        t, [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

namespace {
double softplus_scalar(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
} // namespace

Tensor softplus(const Tensor& t) {
    return unary_op(
        t, softplus_scalar,
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor neg(const Tensor& t) {
    return unary_op(
        t, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& t, double s) {
    return unary_op(
        t, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& t, double s) {
    return unary_op(
        t, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

// -- reductions ---------------------------------------------------------------

namespace {

std::pair<std::size_t, std::size_t> reduced_shape(const Matrix& v, Axis axis) {
    switch (axis) {
        case Axis::all: return {1, 1};
        case Axis::rows: return {1, v.cols()};
        case Axis::cols: return {v.rows(), 1};
    }
    throw ContractError("reduce: bad axis");
}

} // namespace

Tensor reduce(ReduceOp op, const Tensor& t, Axis axis) {
    const NodePtr& p = OpAccess::node(t);
    const Matrix& v = p->value;
    if (v.size() == 0) throw DimError("reduce on an empty tensor");
    auto [orows, ocols] = reduced_shape(v, axis);
    Matrix out(orows, ocols);
    const double cnt = axis == Axis::all    ? static_cast<double>(v.size())
                       : axis == Axis::rows ? static_cast<double>(v.rows())
                                            : static_cast<double>(v.cols());

    // argmax indices (first hit) for the max backward routing
    std::vector<std::size_t> arg;
    if (op == ReduceOp::max) {
        arg.assign(out.size(), 0);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = -std::numeric_limits<double>::infinity();
    }
    auto slot = [axis](std::size_t r, std::size_t c) -> std::size_t {
        switch (axis) {
            case Axis::all: return 0;
            case Axis::rows: return c;
            case Axis::cols: return r;
        }
        return 0;
    };
    for (std::size_t r = 0; r < v.rows(); ++r) {
        for (std::size_t c = 0; c < v.cols(); ++c) {
            const std::size_t k = slot(r, c);
            const double x = v(r, c);
            if (op == ReduceOp::max) {
                if (x > out[k]) {
                    out[k] = x;
                    arg[k] = r * v.cols() + c;
                }
            } else {
                out[k] += x;
            }
        }
    }
    if (op == ReduceOp::mean)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] /= cnt;

    auto n = make_node(std::move(out), {p});
    if (n->requires_grad) {
        n->backprop = [op, axis, cnt, arg = std::move(arg), slot](Node& self) {
            Node& x = *parent(self, 0);
            if (!x.requires_grad) return;
            Matrix d(x.value.rows(), x.value.cols());
            if (op == ReduceOp::max) {
                for (std::size_t k = 0; k < arg.size(); ++k) d[arg[k]] = self.grad[k];
            } else {
                const double f = op == ReduceOp::mean ? 1.0 / cnt : 1.0;
                for (std::size_t r = 0; r < d.rows(); ++r)
                    for (std::size_t c = 0; c < d.cols(); ++c)
                        d(r, c) = self.grad[slot(r, c)] * f;
            }
            accum(x, d);
        };
    }
    return OpAccess::wrap(n);
}

Tensor sum(const Tensor& t, Axis axis) { return reduce(ReduceOp::sum, t, axis); }
Tensor mean(const Tensor& t, Axis axis) { return reduce(ReduceOp::mean, t, axis); }
Tensor max(const Tensor& t, Axis axis) { return reduce(ReduceOp::max, t, axis); }

// -- softmax family ------------------------------------------------------------

Tensor log_softmax(const Tensor& t) {
    const NodePtr& p = OpAccess::node(t);
    const Matrix& v = p->value;
    Matrix out(v.rows(), v.cols());
    for (std::size_t r = 0; r < v.rows(); ++r) {
        double m = v(r, 0);
        for (std::size_t c = 1; c < v.cols(); ++c) m = std::max(m, v(r, c));
        double lse = 0.0;
        for (std::size_t c = 0; c < v.cols(); ++c) lse += std::exp(v(r, c) - m);
        lse = m + std::log(lse);
        for (std::size_t c = 0; c < v.cols(); ++c) out(r, c) = v(r, c) - lse;
    }
    auto n = make_node(std::move(out), {p});
    if (n->requires_grad) {
        // dx = dy - softmax(x) * rowsum(dy)
        n->backprop = [](Node& self) {
            Node& x = *parent(self, 0);
            if (!x.requires_grad) return;
            Matrix d(x.value.rows(), x.value.cols());
            for (std::size_t r = 0; r < d.rows(); ++r) {
                double gsum = 0.0;
                for (std::size_t c = 0; c < d.cols(); ++c) gsum += self.grad(r, c);
                for (std::size_t c = 0; c < d.cols(); ++c)
                    d(r, c) = self.grad(r, c) - std::exp(self.value(r, c)) * gsum;
            }
            accum(x, d);
        };
    }
    return OpAccess::wrap(n);
}

Tensor log_sum_exp(const Tensor& t, Axis axis) {
    const NodePtr& p = OpAccess::node(t);
    const Matrix& v = p->value;
    if (v.size() == 0) throw DimError("log_sum_exp on an empty tensor");
    auto [orows, ocols] = reduced_shape(v, axis);
    Matrix mx(orows, ocols, -std::numeric_limits<double>::infinity());
    auto slot = [axis](std::size_t r, std::size_t c) -> std::size_t {
        switch (axis) {
            case Axis::all: return 0;
            case Axis::rows: return c;
            case Axis::cols: return r;
        }
        return 0;
    };
    for (std::size_t r = 0; r < v.rows(); ++r)
        for (std::size_t c = 0; c < v.cols(); ++c)
            mx[slot(r, c)] = std::max(mx[slot(r, c)], v(r, c));
    Matrix out(orows, ocols);
    for (std::size_t r = 0; r < v.rows(); ++r)
        for (std::size_t c = 0; c < v.cols(); ++c)
            out[slot(r, c)] += std::exp(v(r, c) - mx[slot(r, c)]);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mx[i] + std::log(out[i]);

    auto n = make_node(std::move(out), {p});
    if (n->requires_grad) {
        // dx_ij = d_k * exp(x_ij - lse_k)
        n->backprop = [slot](Node& self) {
            Node& x = *parent(self, 0);
            if (!x.requires_grad) return;
            Matrix d(x.value.rows(), x.value.cols());
            for (std::size_t r = 0; r < d.rows(); ++r)
                for (std::size_t c = 0; c < d.cols(); ++c) {
                    const std::size_t k = slot(r, c);
                    d(r, c) = self.grad[k] * std::exp(x.value(r, c) - self.value[k]);
                }
            accum(x, d);
        };
    }
    return OpAccess::wrap(n);
}

Tensor log_mean_exp(const Tensor& t, Axis axis) {
    const Matrix& v = OpAccess::node(t)->value;
    const double cnt = axis == Axis::all    ? static_cast<double>(v.size())
                       : axis == Axis::rows ? static_cast<double>(v.rows())
                                            : static_cast<double>(v.cols());
    return add_scalar(log_sum_exp(t, axis), -std::log(cnt));
}

// -- structural ops --------------------------------------------------------------

Tensor transpose(const Tensor& t) {
    const NodePtr& p = OpAccess::node(t);
    auto n = make_node(cdn::transpose(p->value), {p});
    if (n->requires_grad) {
        n->backprop = [](Node& self) {
            Node& x = *parent(self, 0);
            if (x.requires_grad) accum(x, cdn::transpose(self.grad));
        };
    }
    return OpAccess::wrap(n);
}

Tensor slice_cols(const Tensor& t, std::size_t c0, std::size_t c1) {
    const NodePtr& p = OpAccess::node(t);
    const Matrix& v = p->value;
    if (c0 >= c1 || c1 > v.cols())
        throw DimError("slice_cols: [" + std::to_string(c0) + ", " + std::to_string(c1) +
                       ") of " + v.shape_str());
    Matrix out(v.rows(), c1 - c0);
    for (std::size_t r = 0; r < v.rows(); ++r)
        for (std::size_t c = c0; c < c1; ++c) out(r, c - c0) = v(r, c);
    auto n = make_node(std::move(out), {p});
    if (n->requires_grad) {
        n->backprop = [c0](Node& self) {
            Node& x = *parent(self, 0);
            if (!x.requires_grad) return;
            Matrix d(x.value.rows(), x.value.cols());
            for (std::size_t r = 0; r < self.grad.rows(); ++r)
                for (std::size_t c = 0; c < self.grad.cols(); ++c)
                    d(r, c0 + c) = self.grad(r, c);
            accum(x, d);
        };
    }
    return OpAccess::wrap(n);
}

Tensor slice_rows(const Tensor& t, std::size_t r0, std::size_t r1) {
    const NodePtr& p = OpAccess::node(t);
    const Matrix& v = p->value;
    if (r0 >= r1 || r1 > v.rows())
        throw DimError("slice_rows: [" + std::to_string(r0) + ", " + std::to_string(r1) +
                       ") of " + v.shape_str());
    Matrix out(r1 - r0, v.cols());
    for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = 0; c < v.cols(); ++c) out(r - r0, c) = v(r, c);
    auto n = make_node(std::move(out), {p});
    if (n->requires_grad) {
        n->backprop = [r0](Node& self) {
            Node& x = *parent(self, 0);
            if (!x.requires_grad) return;
            Matrix d(x.value.rows(), x.value.cols());
            for (std::size_t r = 0; r < self.grad.rows(); ++r)
                for (std::size_t c = 0; c < self.grad.cols(); ++c)
                    d(r0 + r, c) = self.grad(r, c);
            accum(x, d);
        };
    }
    return OpAccess::wrap(n);
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimError("concat_rows: no inputs");
    std::vector<NodePtr> ps;
    std::size_t total = 0;
    const std::size_t cols = OpAccess::node(parts[0])->value.cols();
    for (const Tensor& t : parts) {
        const NodePtr& p = OpAccess::node(t);
        if (p->value.cols() != cols)
            throw DimError("concat_rows: column mismatch " + p->value.shape_str());
        total += p->value.rows();
        ps.push_back(p);
    }
    Matrix out(total, cols);
    std::size_t off = 0;
    for (const auto& p : ps) {
        for (std::size_t r = 0; r < p->value.rows(); ++r)
            for (std::size_t c = 0; c < cols; ++c) out(off + r, c) = p->value(r, c);
        off += p->value.rows();
    }
    auto n = make_node(std::move(out), std::move(ps));
    if (n->requires_grad) {
        n->backprop = [](Node& self) {
            std::size_t off = 0;
            for (auto& pp : self.parents) {
                Node& x = *pp;
                const std::size_t h = x.value.rows();
                if (x.requires_grad) {
                    Matrix d(h, x.value.cols());
                    for (std::size_t r = 0; r < h; ++r)
                        for (std::size_t c = 0; c < d.cols(); ++c)
                            d(r, c) = self.grad(off + r, c);
                    accum(x, d);
                }
                off += h;
            }
        };
    }
    return OpAccess::wrap(n);
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimError("concat_cols: no inputs");
    std::vector<NodePtr> ps;
    std::size_t total = 0;
    const std::size_t rows = OpAccess::node(parts[0])->value.rows();
    for (const Tensor& t : parts) {
        const NodePtr& p = OpAccess::node(t);
        if (p->value.rows() != rows)
            throw DimError("concat_cols: row mismatch " + p->value.shape_str());
        total += p->value.cols();
        ps.push_back(p);
    }
    Matrix out(rows, total);
    std::size_t off = 0;
    for (const auto& p : ps) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < p->value.cols(); ++c)
                out(r, off + c) = p->value(r, c);
        off += p->value.cols();
    }
    auto n = make_node(std::move(out), std::move(ps));
    if (n->requires_grad) {
        n->backprop = [](Node& self) {
            std::size_t off = 0;
            for (auto& pp : self.parents) {
                Node& x = *pp;
                const std::size_t w = x.value.cols();
                if (x.requires_grad) {
                    Matrix d(x.value.rows(), w);
                    for (std::size_t r = 0; r < d.rows(); ++r)
                        for (std::size_t c = 0; c < w; ++c)
                            d(r, c) = self.grad(r, off + c);
                    accum(x, d);
                }
                off += w;
            }
        };
    }
    return OpAccess::wrap(n);
}

Tensor append_ones_col(const Tensor& t) {
    const NodePtr& p = OpAccess::node(t);
    const Matrix& v = p->value;
    Matrix out(v.rows(), v.cols() + 1);
    for (std::size_t r = 0; r < v.rows(); ++r) {
        for (std::size_t c = 0; c < v.cols(); ++c) out(r, c) = v(r, c);
        out(r, v.cols()) = 1.0;
    }
    auto n = make_node(std::move(out), {p});
    if (n->requires_grad) {
        n->backprop = [](Node& self) {
            Node& x = *parent(self, 0);
            if (!x.requires_grad) return;
            Matrix d(x.value.rows(), x.value.cols());
            for (std::size_t r = 0; r < d.rows(); ++r)
                for (std::size_t c = 0; c < d.cols(); ++c) d(r, c) = self.grad(r, c);
            accum(x, d);
        };
    }
    return OpAccess::wrap(n);
}

Tensor gather_cols(const Tensor& t, const std::vector<std::size_t>& idx) {
    const NodePtr& p = OpAccess::node(t);
    const Matrix& v = p->value;
    if (idx.size() != v.rows())
        throw DimError("gather_cols: " + std::to_string(idx.size()) + " indices for " +
                       v.shape_str());
    for (std::size_t r = 0; r < idx.size(); ++r)
        if (idx[r] >= v.cols())
            throw std::out_of_range("gather_cols: index " + std::to_string(idx[r]) +
                                    " out of range for " + std::to_string(v.cols()) +
                                    " columns");
    Matrix out(v.rows(), 1);
    for (std::size_t r = 0; r < v.rows(); ++r) out(r, 0) = v(r, idx[r]);
    auto n = make_node(std::move(out), {p});
    if (n->requires_grad) {
        n->backprop = [idx](Node& self) {
            Node& x = *parent(self, 0);
            if (!x.requires_grad) return;
            Matrix d(x.value.rows(), x.value.cols());
            for (std::size_t r = 0; r < idx.size(); ++r) d(r, idx[r]) = self.grad(r, 0);
            accum(x, d);
        };
    }
    return OpAccess::wrap(n);
}

// -- backward -----------------------------------------------------------------

void backward(const Tensor& loss) {
    const NodePtr& root = OpAccess::node(loss);
    if (root->value.rows() != 1 || root->value.cols() != 1)
        throw ContractError("backward: loss must be 1x1, got " +
                            root->value.shape_str());
    if (root->backward_ran)
        throw ContractError("backward: already ran on this loss; rebuild the graph");
    if (!root->requires_grad)
        throw ContractError("backward: loss does not depend on any parameter");

    // Collect ancestors. Creation ids are a topological order (parents are
    // always created before children), so sorting by id descending yields a
    // valid reverse traversal.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](const Node* a, const Node* b) { return a->id > b->id; });

    root->grad = Matrix::ones(1, 1);
    root->grad_alloc = true;
    for (Node* n : order)
        if (n->backprop && n->grad_alloc) n->backprop(*n);
    root->backward_ran = true;
}

} // namespace cdn
