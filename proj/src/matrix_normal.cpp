#include "cdn/matrix_normal.hpp"

#include <cmath>

namespace cdn {

namespace {

constexpr double kLogFloor = 1e-8;
constexpr double kHalfLog2Pi = 0.91893853320467274178; // ln(2*pi)/2

void require_positive(const Matrix& v, const char* name) {
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!(v[i] > 0.0))
            throw DomainError(std::string("matrix normal: ") + name +
                              " has non-positive entry " + std::to_string(v[i]));
}

} // namespace

Tensor floor_at(const Tensor& x, double floor) {
    return add_scalar(relu(add_scalar(x, -floor)), floor);
}

Tensor sqrt_positive(const Tensor& x) { return exp(scale(log(x), 0.5)); }

void MatrixNormalParams::validate() const {
    const std::size_t r = M.rows(), c = M.cols();
    if (a.rows() != 1 || a.cols() != r)
        throw DimError("matrix normal: a must be 1x" + std::to_string(r) + ", got " +
                       a.value().shape_str());
    if (b.rows() != 1 || b.cols() != c)
        throw DimError("matrix normal: b must be 1x" + std::to_string(c) + ", got " +
                       b.value().shape_str());
    require_positive(a.value(), "a");
    require_positive(b.value(), "b");
}

std::size_t mvn_parameter_count(std::size_t r, std::size_t c) { return r * c + r + c; }

Tensor mvn_sample(const MatrixNormalParams& p, const Tensor& noise) {
    p.validate();
    if (noise.rows() != p.rows() || noise.cols() != p.cols())
        throw DimError("mvn_sample: noise " + noise.value().shape_str() +
                       " does not match mean " + p.M.value().shape_str());
    // (r x 1) sqrt(a) outer (1 x c) sqrt(b), scaled into the noise entrywise
    Tensor scale_rc = matmul(transpose(sqrt_positive(p.a)), sqrt_positive(p.b));
    return add(p.M, mul(noise, scale_rc));
}

Tensor mvn_kl_to_standard(const MatrixNormalParams& p) {
    p.validate();
    const double r = static_cast<double>(p.rows());
    const double c = static_cast<double>(p.cols());
    Tensor trace_term = mul(sum(p.a), sum(p.b));
    Tensor mean_term = sum(mul(p.M, p.M));
    Tensor logdet = add(scale(sum(log(floor_at(p.a, kLogFloor))), c),
                        scale(sum(log(floor_at(p.b, kLogFloor))), r));
    Tensor kl = scale(add_scalar(sub(add(trace_term, mean_term), logdet), -r * c), 0.5);
    return kl;
}

double mvn_log_density(const Matrix& W, const Matrix& M, const Matrix& a,
                       const Matrix& b) {
    const std::size_t r = M.rows(), c = M.cols();
    if (!W.same_shape(M))
        throw DimError("mvn_log_density: W " + W.shape_str() + " vs M " + M.shape_str());
    require_positive(a, "a");
    require_positive(b, "b");
    double logdet = 0.0;
    for (std::size_t i = 0; i < r; ++i) logdet += static_cast<double>(c) * std::log(a[i]);
    for (std::size_t j = 0; j < c; ++j) logdet += static_cast<double>(r) * std::log(b[j]);
    double quad = 0.0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double d = W(i, j) - M(i, j);
            quad += d * d / (a[i] * b[j]);
        }
    return -kHalfLog2Pi * static_cast<double>(r * c) - 0.5 * logdet - 0.5 * quad;
}

Tensor gaussian_log_prob(const Tensor& y, const Tensor& mu, const Tensor& log_var) {
    if (!y.value().same_shape(mu.value()) || !y.value().same_shape(log_var.value()))
        throw DimError("gaussian_log_prob: shapes " + y.value().shape_str() + ", " +
                       mu.value().shape_str() + ", " + log_var.value().shape_str());
    Tensor diff = sub(y, mu);
    Tensor quad = scale(mul(mul(diff, diff), exp(neg(log_var))), 0.5);
    Tensor per_entry = sub(neg(add_scalar(scale(log_var, 0.5), kHalfLog2Pi)), quad);
    return sum(per_entry, Axis::cols);
}

Tensor categorical_log_prob(const Tensor& logits, const std::vector<std::size_t>& labels) {
    return gather_cols(log_softmax(logits), labels);
}

} // namespace cdn
