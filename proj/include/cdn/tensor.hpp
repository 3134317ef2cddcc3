#pragma once

#include "cdn/errors.hpp"
#include "cdn/matrix.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace cdn {

namespace detail {
struct Node;
}

enum class Axis {
    all,  ///< reduce over every entry, result is 1x1
    rows, ///< reduce across rows (numpy axis 0), result is 1xC
    cols, ///< reduce across columns (numpy axis 1), result is Rx1
};

enum class ReduceOp { sum, mean, max };

/// Handle to a value in a dynamic reverse-mode differentiation graph.
/// Tensors are cheap to copy (shared handle). The graph is rebuilt on
/// every forward pass; leaves (parameters) persist across graphs and
/// accumulate gradients until zero_grad().
///
/// A graph and its tensors belong to one thread during forward/backward;
/// distinct graphs may live on distinct threads.
class Tensor {
public:
    Tensor() = default;

    /// Parameter or input leaf. Gradients accumulate here after backward().
    static Tensor leaf(Matrix value, bool requires_grad = true);
    /// Constant participating in the graph without a gradient.
    static Tensor constant(Matrix value);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    double item() const;

    bool requires_grad() const;
    bool has_grad() const;
    const Matrix& grad() const;
    void zero_grad() const;
    /// Multiplies the accumulated gradient in place (gradient clipping).
    void scale_grad(double f) const;

    /// Overwrites the stored value in place (same shape); used by
    /// optimizers on leaves. The old graph must no longer be in use.
    void assign(const Matrix& v) const;

    std::uint64_t node_id() const;

private:
    std::shared_ptr<detail::Node> node_;
    friend struct OpAccess;
};

// -- graph-building operations -------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise sum; also accepts b as a 1xC row vector broadcast over the
/// rows of a (bias addition). No other broadcast forms exist.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& t);
Tensor tanh(const Tensor& t);
Tensor exp(const Tensor& t);
/// Natural log; every entry must be strictly positive.
Tensor log(const Tensor& t);
Tensor softplus(const Tensor& t);
Tensor neg(const Tensor& t);
Tensor scale(const Tensor& t, double s);
Tensor add_scalar(const Tensor& t, double s);

Tensor reduce(ReduceOp op, const Tensor& t, Axis axis);
Tensor sum(const Tensor& t, Axis axis = Axis::all);
Tensor mean(const Tensor& t, Axis axis = Axis::all);
/// Max reduction; gradient routes to the first (lowest index) argmax.
Tensor max(const Tensor& t, Axis axis = Axis::all);

/// Row-wise log-softmax, computed with max subtraction.
Tensor log_softmax(const Tensor& t);
Tensor log_sum_exp(const Tensor& t, Axis axis);
/// log_sum_exp minus log(count); the stabilized log of a mean of exps.
Tensor log_mean_exp(const Tensor& t, Axis axis);

Tensor transpose(const Tensor& t);
Tensor slice_cols(const Tensor& t, std::size_t c0, std::size_t c1);
Tensor slice_rows(const Tensor& t, std::size_t r0, std::size_t r1);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
/// Appends a constant column of ones: [t, 1].
Tensor append_ones_col(const Tensor& t);
/// out(i,0) = t(i, idx[i]); backward scatters into the picked entries.
Tensor gather_cols(const Tensor& t, const std::vector<std::size_t>& idx);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

/// Reverse-mode sweep from a 1x1 loss. Visits each reachable node exactly
/// once in reverse topological order and populates leaf gradients.
/// Calling it twice on the same loss without a fresh forward throws.
void backward(const Tensor& loss);

} // namespace cdn
