#pragma once

#include "cdn/tensor.hpp"

#include <vector>

namespace cdn {

/// Matrix-variate normal with diagonal covariance factors:
/// W ~ MN(M, diag(a), diag(b)), i.e. vec(W) ~ N(vec(M), diag(b) (x) diag(a)).
/// Var(W_ij) = a_i * b_j. Uses rc + r + c parameters for an r x c matrix.
///
/// Positivity of a and b is the producer's job (softplus there); this module
/// only validates.
struct MatrixNormalParams {
    Tensor M; ///< r x c mean
    Tensor a; ///< 1 x r row-covariance diagonal, strictly positive
    Tensor b; ///< 1 x c column-covariance diagonal, strictly positive

    std::size_t rows() const { return M.rows(); }
    std::size_t cols() const { return M.cols(); }

    /// Throws DomainError on shape disagreement or non-positive factors.
    void validate() const;
};

/// rc + r + c.
std::size_t mvn_parameter_count(std::size_t r, std::size_t c);

/// Shapes of the weight matrices of an L-layer predictive net; the prior is
/// the product of standard MVNs MN(0, I, I) over these.
struct PriorSpec {
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
};

/// Reparametrized draw: W = M + diag(sqrt(a)) E diag(sqrt(b)) with E the
/// caller's standard-normal noise. Differentiable in M, a, b.
Tensor mvn_sample(const MatrixNormalParams& p, const Tensor& noise);

/// Closed-form KL(MN(M, diag a, diag b) || MN(0, I, I)):
///   0.5 [ (sum a)(sum b) + |M|_F^2 - rc - c sum(ln a) - r sum(ln b) ]
/// The logs floor their argument at 1e-8 against underflow; that guard is a
/// numerical epsilon, not part of the model. Returns a differentiable 1x1.
Tensor mvn_kl_to_standard(const MatrixNormalParams& p);

/// Plain-double MVN log density of a realized W; used by sampling oracles,
/// not part of any gradient path.
double mvn_log_density(const Matrix& W, const Matrix& M, const Matrix& a,
                       const Matrix& b);

/// max(x, floor) built from graph ops, so it stays differentiable
/// (gradient 1 above the floor, 0 below).
Tensor floor_at(const Tensor& x, double floor);

/// Elementwise square root of a strictly positive tensor via exp(log/2).
Tensor sqrt_positive(const Tensor& x);

/// Row-wise Gaussian log-likelihood, summed over target dimensions:
/// sum_d [ -ln(2 pi)/2 - log_var/2 - (y - mu)^2 / (2 exp(log_var)) ].
/// All arguments are batch x dim; returns batch x 1.
Tensor gaussian_log_prob(const Tensor& y, const Tensor& mu, const Tensor& log_var);

/// log softmax(logits)[label] per row; labels must lie in [0, K).
/// Returns batch x 1.
Tensor categorical_log_prob(const Tensor& logits, const std::vector<std::size_t>& labels);

} // namespace cdn
