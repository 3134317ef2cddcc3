#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cdn/matrix_normal.hpp"
#include "cdn/rng.hpp"
#include "support/test_helpers.hpp"

#include <cmath>

using namespace cdn;
using cdn::testing::check_gradients;

namespace {

MatrixNormalParams make_params(const Matrix& M, const Matrix& a, const Matrix& b,
                               bool requires_grad = false) {
    MatrixNormalParams p;
    p.M = Tensor::leaf(M, requires_grad);
    p.a = Tensor::leaf(a, requires_grad);
    p.b = Tensor::leaf(b, requires_grad);
    return p;
}

MatrixNormalParams random_params(Rng& rng, std::size_t r, std::size_t c,
                                 bool requires_grad = false) {
    Matrix M = rng.normal_matrix(r, c);
    Matrix a(1, r), b(1, c);
    for (std::size_t i = 0; i < r; ++i) a[i] = 0.1 + 2.0 * rng.uniform();
    for (std::size_t j = 0; j < c; ++j) b[j] = 0.1 + 2.0 * rng.uniform();
    return make_params(M, a, b, requires_grad);
}

/// KL(N(mu1, S1) || N(0, I)) with S1 the explicit rc x rc Kronecker
/// covariance diag(b) (x) diag(a); the independent oracle for the closed
/// form. vec stacks columns: vec index = j * r + i.
double kronecker_kl_oracle(const MatrixNormalParams& p) {
    const std::size_t r = p.rows(), c = p.cols();
    const std::size_t n = r * c;
    std::vector<double> cov_diag(n);
    std::vector<double> mu(n);
    const Matrix& M = p.M.value();
    const Matrix& a = p.a.value();
    const Matrix& b = p.b.value();
    for (std::size_t j = 0; j < c; ++j)
        for (std::size_t i = 0; i < r; ++i) {
            cov_diag[j * r + i] = b[j] * a[i];
            mu[j * r + i] = M(i, j);
        }
    double trace = 0, quad = 0, logdet = 0;
    for (std::size_t k = 0; k < n; ++k) {
        trace += cov_diag[k];
        quad += mu[k] * mu[k];
        logdet += std::log(cov_diag[k]);
    }
    return 0.5 * (trace + quad - static_cast<double>(n) - logdet);
}

} // namespace

TEST_CASE("parameter count is rc + r + c") {
    CHECK(mvn_parameter_count(3, 4) == 19); // vs 24 for a fully factorized Gaussian
    CHECK(mvn_parameter_count(1, 1) == 3);
}

TEST_CASE("sample: zero-covariance limit returns the mean") {
    Rng rng(4);
    Matrix M = rng.normal_matrix(3, 2);
    MatrixNormalParams p = make_params(M, Matrix(1, 3, 1e-30), Matrix(1, 2, 1e-30));
    Matrix W = mvn_sample(p, Tensor::constant(rng.normal_matrix(3, 2))).value();
    for (std::size_t i = 0; i < W.size(); ++i)
        CHECK(W[i] == doctest::Approx(M[i]).epsilon(1e-12));
}

TEST_CASE("sample: standard case returns the noise") {
    Rng rng(5);
    Matrix E = rng.normal_matrix(2, 3);
    MatrixNormalParams p =
        make_params(Matrix::zeros(2, 3), Matrix::ones(1, 2), Matrix::ones(1, 3));
    Matrix W = mvn_sample(p, Tensor::constant(E)).value();
    for (std::size_t i = 0; i < W.size(); ++i)
        CHECK(W[i] == doctest::Approx(E[i]).epsilon(1e-14));
}

TEST_CASE("sample rejects non-positive factors") {
    MatrixNormalParams p =
        make_params(Matrix::zeros(2, 2), Matrix(1, 2, 0.0), Matrix::ones(1, 2));
    CHECK_THROWS_AS(mvn_sample(p, Tensor::constant(Matrix::zeros(2, 2))), DomainError);
}

TEST_CASE("sample is linear in the noise") {
    Rng rng(6);
    MatrixNormalParams p = random_params(rng, 3, 2);
    Matrix E1 = rng.normal_matrix(3, 2), E2 = rng.normal_matrix(3, 2);
    Matrix Esum = E1;
    for (std::size_t i = 0; i < Esum.size(); ++i) Esum[i] += E2[i];
    Matrix lhs = mvn_sample(p, Tensor::constant(Esum)).value();
    Matrix w1 = mvn_sample(p, Tensor::constant(E1)).value();
    Matrix w2 = mvn_sample(p, Tensor::constant(E2)).value();
    for (std::size_t i = 0; i < lhs.size(); ++i)
        CHECK(lhs[i] ==
              doctest::Approx(w1[i] + w2[i] - p.M.value()[i]).epsilon(1e-10));
}

TEST_CASE("sampled covariance matches diag(b) kron diag(a)") {
    // desk-scale version of the Monte-Carlo law check (acceptance runs 200k)
    Rng rng(7);
    MatrixNormalParams p = random_params(rng, 2, 3);
    const std::size_t n_samples = 40000;
    const std::size_t n = 6;
    std::vector<double> sum_v(n, 0.0), sum_vv(n * n, 0.0);
    for (std::size_t s = 0; s < n_samples; ++s) {
        Matrix W = mvn_sample(p, Tensor::constant(rng.normal_matrix(2, 3))).value();
        std::vector<double> v(n);
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t i = 0; i < 2; ++i) v[j * 2 + i] = W(i, j);
        for (std::size_t i = 0; i < n; ++i) {
            sum_v[i] += v[i];
            for (std::size_t j = 0; j < n; ++j) sum_vv[i * n + j] += v[i] * v[j];
        }
    }
    const Matrix& a = p.a.value();
    const Matrix& b = p.b.value();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double mean_i = sum_v[i] / n_samples;
            const double mean_j = sum_v[j] / n_samples;
            const double cov = sum_vv[i * n + j] / n_samples - mean_i * mean_j;
            if (i == j) {
                const double want = a[i % 2] * b[i / 2];
                CHECK(std::fabs(cov - want) / want < 0.10);
            } else {
                const double scale0 = std::sqrt(a[i % 2] * b[i / 2] * a[j % 2] * b[j / 2]);
                CHECK(std::fabs(cov) < 0.10 * scale0);
            }
        }
    }
}

TEST_CASE("kl examples") {
    MatrixNormalParams std2 =
        make_params(Matrix::zeros(2, 2), Matrix::ones(1, 2), Matrix::ones(1, 2));
    CHECK(mvn_kl_to_standard(std2).item() == doctest::Approx(0.0).epsilon(1e-12));

    MatrixNormalParams shifted = make_params(Matrix::from_rows({{1, 0}, {0, 0}}),
                                             Matrix::ones(1, 2), Matrix::ones(1, 2));
    CHECK(mvn_kl_to_standard(shifted).item() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("kl matches the Kronecker brute-force oracle") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        MatrixNormalParams p = random_params(rng, 3, 2);
        const double got = mvn_kl_to_standard(p).item();
        const double want = kronecker_kl_oracle(p);
        CHECK(std::fabs(got - want) < 1e-8);
        CHECK(got >= 0.0);
    }
}

TEST_CASE("kl gradient matches finite differences") {
    Rng rng(9);
    MatrixNormalParams p = random_params(rng, 3, 2, /*requires_grad=*/true);
    auto loss = [&] { return mvn_kl_to_standard(p); };
    auto r = check_gradients(loss, {{"M", p.M}, {"a", p.a}, {"b", p.b}});
    CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("sample gradient matches finite differences") {
    Rng rng(10);
    MatrixNormalParams p = random_params(rng, 3, 2, /*requires_grad=*/true);
    Tensor E = Tensor::constant(rng.normal_matrix(3, 2));
    Tensor C = Tensor::constant(rng.normal_matrix(3, 2));
    auto loss = [&] { return sum(mul(mvn_sample(p, E), C)); };
    auto r = check_gradients(loss, {{"M", p.M}, {"a", p.a}, {"b", p.b}});
    CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("mvn log density integrates against sampling") {
    // density of the sampler: mean log-density at sampled points should be
    // finite and the density maximal at the mean
    Rng rng(30);
    MatrixNormalParams p = random_params(rng, 2, 2);
    const double at_mean = mvn_log_density(p.M.value(), p.M.value(), p.a.value(),
                                           p.b.value());
    Matrix off = p.M.value();
    off(0, 0) += 1.0;
    CHECK(at_mean > mvn_log_density(off, p.M.value(), p.a.value(), p.b.value()));
}

TEST_CASE("gaussian log prob values") {
    Tensor y = Tensor::constant(Matrix::zeros(1, 1));
    Tensor mu = Tensor::constant(Matrix::zeros(1, 1));
    Tensor lv = Tensor::constant(Matrix::zeros(1, 1));
    CHECK(gaussian_log_prob(y, mu, lv).item() ==
          doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));

    Tensor y1 = Tensor::constant(Matrix::ones(1, 1));
    CHECK(gaussian_log_prob(y1, mu, lv).item() ==
          doctest::Approx(-0.5 * std::log(2.0 * M_PI) - 0.5).epsilon(1e-12));
}

TEST_CASE("gaussian log prob normalizes under quadrature") {
    // trapezoid integration of exp(log_prob) over y; the density must
    // integrate to 1
    const double mu_v = 0.7, lv_v = std::log(1.7);
    const double sd = std::sqrt(std::exp(lv_v));
    const double lo = mu_v - 10 * sd, hi = mu_v + 10 * sd;
    const std::size_t n = 20001;
    const double dy = (hi - lo) / (n - 1);
    double integral = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = lo + dy * static_cast<double>(i);
        const double lp = gaussian_log_prob(Tensor::constant(Matrix(1, 1, y)),
                                            Tensor::constant(Matrix(1, 1, mu_v)),
                                            Tensor::constant(Matrix(1, 1, lv_v)))
                              .item();
        const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
        integral += w * std::exp(lp) * dy;
    }
    CHECK(std::fabs(integral - 1.0) < 1e-6);
}

TEST_CASE("categorical log prob values") {
    Matrix uniform = Matrix::zeros(1, 10);
    CHECK(categorical_log_prob(Tensor::constant(uniform), {3}).item() ==
          doctest::Approx(-std::log(10.0)).epsilon(1e-12));

    Matrix dominant = Matrix::zeros(1, 4);
    dominant(0, 0) = 1000.0;
    CHECK(categorical_log_prob(Tensor::constant(dominant), {0}).item() ==
          doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("categorical log prob normalizes over labels") {
    Rng rng(12);
    Matrix logits = rng.normal_matrix(1, 7);
    double total = 0.0;
    for (std::size_t k = 0; k < 7; ++k)
        total += std::exp(categorical_log_prob(Tensor::constant(logits), {k}).item());
    CHECK(std::fabs(total - 1.0) < 1e-12);
}

TEST_CASE("categorical log prob rejects out-of-range labels") {
    Matrix logits = Matrix::zeros(1, 4);
    CHECK_THROWS_AS(categorical_log_prob(Tensor::constant(logits), {4}),
                    std::out_of_range);
}
