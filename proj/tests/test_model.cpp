#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cdn/model.hpp"
#include "support/test_helpers.hpp"

#include <cmath>
#include <map>

using namespace cdn;
using cdn::testing::check_gradients;

namespace {

Architecture small_arch(Task task = Task::classification, std::size_t out = 3,
                        Activation hyper_act = Activation::tanh) {
    const std::size_t last = task == Task::classification ? out : 2 * out;
    return Architecture::mlp({2, 5, last}, task, out, {4}, hyper_act);
}

/// Model whose mixing distribution collapses onto the mean templates:
/// hypernets zeroed, z-head bias 1, factor heads pushed to the softplus
/// floor.
CdnModel degenerate_model(const Architecture& arch, std::uint64_t seed) {
    CdnModel m = init_cdn(arch, seed);
    for (std::size_t l = 0; l < arch.depth(); ++l) {
        const std::size_t r = arch.weight_rows(l);
        const std::size_t c = arch.weight_cols(l);
        Tensor& out_w = m.hyper[l].weights.back();
        Matrix w = Matrix::zeros(out_w.rows(), out_w.cols());
        for (std::size_t j = 0; j < r; ++j) w(out_w.rows() - 1, j) = 1.0; // z bias
        for (std::size_t j = r; j < 2 * r + c; ++j)
            w(out_w.rows() - 1, j) = -60.0; // softplus floor
        out_w.assign(w);
    }
    return m;
}

/// Plain deterministic MLP forward with the template weights.
Matrix template_mlp_forward(const CdnModel& m, const Matrix& x) {
    Tensor h = Tensor::constant(x);
    for (std::size_t l = 0; l < m.arch.depth(); ++l)
        h = apply_activation(m.arch.activations[l],
                             matmul(append_ones_col(h), m.hyper[l].mean_template));
    return h.value();
}

/// Random-output-layer variant (the spec init keeps the hypernet output
/// layer zero, which makes the mixing input-independent at the exact init).
CdnModel nondegenerate_model(const Architecture& arch, std::uint64_t seed) {
    CdnModel m = init_cdn(arch, seed);
    Rng rng(derive_seed(seed, "perturb"));
    for (auto& layer : m.hyper) {
        Tensor& out_w = layer.weights.back();
        Matrix w = out_w.value();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += 0.3 * rng.normal();
        out_w.assign(w);
    }
    return m;
}

NoiseSource fixed_layer_noise(std::map<std::size_t, Matrix> by_layer) {
    return [by_layer = std::move(by_layer)](std::size_t layer, std::size_t rows,
                                            std::size_t cols) {
        const auto it = by_layer.find(layer);
        if (it == by_layer.end() || it->second.rows() != rows ||
            it->second.cols() != cols)
            throw ContractError("fixed noise missing for layer " + std::to_string(layer));
        return it->second;
    };
}

} // namespace

TEST_CASE("hypernet at spec init: zero weights give zero mean and softplus(0) factors") {
    Architecture arch = small_arch();
    CdnModel m = init_cdn(arch, 1);
    // zero the z-head bias too: fully zeroed hypernet
    Tensor& out_w = m.hyper[0].weights.back();
    out_w.assign(Matrix::zeros(out_w.rows(), out_w.cols()));
    Rng rng(2);
    Tensor h_aug = append_ones_col(Tensor::constant(rng.normal_matrix(3, 2)));
    LayerMixing mix = eval_hypernet(m, 1, h_aug);
    const double expect_factor = std::log(2.0) + 1e-6; // softplus(0) + floor
    for (std::size_t i = 0; i < mix.z.value().size(); ++i)
        CHECK(mix.z.value()[i] == 0.0);
    for (std::size_t i = 0; i < mix.a.value().size(); ++i)
        CHECK(mix.a.value()[i] == doctest::Approx(expect_factor).epsilon(1e-12));
    for (std::size_t i = 0; i < mix.b.value().size(); ++i)
        CHECK(mix.b.value()[i] == doctest::Approx(expect_factor).epsilon(1e-12));
    // z = 0 means the per-example mean matrix vanishes
    MatrixNormalParams p = mixing_row_params(mix, m.hyper[0].mean_template, 0);
    for (std::size_t i = 0; i < p.M.value().size(); ++i)
        CHECK(p.M.value()[i] == 0.0);
}

TEST_CASE("identical inputs get identical mixing parameters") {
    Architecture arch = small_arch();
    CdnModel m = nondegenerate_model(arch, 3);
    Matrix x(2, 2);
    x(0, 0) = x(1, 0) = 0.4;
    x(0, 1) = x(1, 1) = -1.2;
    LayerMixing mix = eval_hypernet(m, 1, append_ones_col(Tensor::constant(x)));
    for (std::size_t c = 0; c < mix.z.cols(); ++c) {
        CHECK(mix.z.value()(0, c) == mix.z.value()(1, c));
        CHECK(mix.a.value()(0, c) == mix.a.value()(1, c));
    }
}

TEST_CASE("mixing depends on the input") {
    Architecture arch = small_arch();
    CdnModel m = nondegenerate_model(arch, 4);
    Matrix x(2, 2);
    x(0, 0) = 0.4;
    x(0, 1) = -1.2;
    x(1, 0) = 0.4 + 0.1;
    x(1, 1) = -1.2;
    LayerMixing mix = eval_hypernet(m, 1, append_ones_col(Tensor::constant(x)));
    double diff = 0.0;
    for (std::size_t c = 0; c < mix.z.cols(); ++c)
        diff += std::fabs(mix.z.value()(0, c) - mix.z.value()(1, c));
    CHECK(diff > 1e-6);
}

TEST_CASE("degenerate mixture gives a deterministic MLP in both modes") {
    Architecture arch = small_arch();
    CdnModel m = degenerate_model(arch, 5);
    Rng rng(6);
    Matrix xv = rng.normal_matrix(4, 2);
    Matrix expect = template_mlp_forward(m, xv);
    for (SamplingMode mode : {SamplingMode::explicit_weights, SamplingMode::local_reparam}) {
        for (std::uint64_t noise_seed : {11ull, 22ull}) {
            NoiseSource noise = make_layer_noise(noise_seed);
            ForwardOptions opts;
            opts.mode = mode;
            ForwardSample fs = forward_sampled(m, Tensor::constant(xv), noise, opts);
            for (std::size_t i = 0; i < expect.size(); ++i)
                CHECK(fs.output.value()[i] == doctest::Approx(expect[i]).epsilon(1e-4));
        }
    }
}

TEST_CASE("identical noise streams give identical outputs") {
    Architecture arch = small_arch();
    CdnModel m = nondegenerate_model(arch, 7);
    Rng rng(8);
    Matrix xv = rng.normal_matrix(3, 2);
    for (SamplingMode mode : {SamplingMode::explicit_weights, SamplingMode::local_reparam}) {
        ForwardOptions opts;
        opts.mode = mode;
        NoiseSource n1 = make_layer_noise(99);
        NoiseSource n2 = make_layer_noise(99);
        Matrix a = forward_sampled(m, Tensor::constant(xv), n1, opts).output.value();
        Matrix b = forward_sampled(m, Tensor::constant(xv), n2, opts).output.value();
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
}

TEST_CASE("sampled logits have positive variance on a random init") {
    Architecture arch = small_arch();
    CdnModel m = nondegenerate_model(arch, 9);
    Matrix xv = Matrix::ones(1, 2);
    double first = 0.0, sq = 0.0, mean_acc = 0.0;
    const std::size_t S = 1000;
    for (std::size_t s = 0; s < S; ++s) {
        NoiseSource noise = make_layer_noise(1000 + s);
        ForwardOptions opts;
        ForwardSample fs = forward_sampled(m, Tensor::constant(xv), noise, opts);
        const double v = fs.output.value()(0, 0);
        if (s == 0) first = v;
        mean_acc += v;
        sq += v * v;
    }
    const double mean = mean_acc / S;
    const double var = sq / S - mean * mean;
    CHECK(var > 0.0);
    (void)first;
}

TEST_CASE("explicit and fused modes agree on layer-1 KL and on output moments") {
    Architecture arch =
        Architecture::mlp({2, 3}, Task::classification, 3, {4}, Activation::tanh);
    CdnModel m = nondegenerate_model(arch, 10);
    Rng rng(11);
    Matrix xv = rng.normal_matrix(3, 2);
    Tensor x = Tensor::constant(xv);

    ForwardOptions eo;
    eo.mode = SamplingMode::explicit_weights;
    ForwardOptions lo;
    lo.mode = SamplingMode::local_reparam;
    NoiseSource n1 = make_layer_noise(1);
    NoiseSource n2 = make_layer_noise(2);
    Matrix kl_e = forward_sampled(m, x, n1, eo).kl.value();
    Matrix kl_l = forward_sampled(m, x, n2, lo).kl.value();
    for (std::size_t i = 0; i < kl_e.size(); ++i)
        CHECK(kl_e[i] == doctest::Approx(kl_l[i]).epsilon(1e-9));

    // single-layer pre-activations are exactly MVN row transforms in both
    // modes; their first two moments must agree within Monte-Carlo error
    const std::size_t S = 20000;
    Matrix sum_e = Matrix::zeros(3, 3), sum_l = Matrix::zeros(3, 3);
    Matrix sq_e = Matrix::zeros(3, 3), sq_l = Matrix::zeros(3, 3);
    ForwardOptions fast_e = eo, fast_l = lo;
    fast_e.want_kl = fast_l.want_kl = false;
    for (std::size_t s = 0; s < S; ++s) {
        NoiseSource ne = make_layer_noise(10000 + s);
        NoiseSource nl = make_layer_noise(500000 + s);
        Matrix oe = forward_sampled(m, x, ne, fast_e).output.value();
        Matrix ol = forward_sampled(m, x, nl, fast_l).output.value();
        for (std::size_t i = 0; i < oe.size(); ++i) {
            sum_e[i] += oe[i];
            sq_e[i] += oe[i] * oe[i];
            sum_l[i] += ol[i];
            sq_l[i] += ol[i] * ol[i];
        }
    }
    for (std::size_t i = 0; i < sum_e.size(); ++i) {
        const double me = sum_e[i] / S, ml = sum_l[i] / S;
        const double ve = sq_e[i] / S - me * me, vl = sq_l[i] / S - ml * ml;
        const double se = std::sqrt((ve + vl) / S);
        CHECK(std::fabs(me - ml) < 8.0 * se + 1e-12);
        CHECK(std::fabs(ve - vl) / std::max(ve, vl) < 0.15);
    }
}

TEST_CASE("given the previous hidden state, a layer's draw depends only on its noise") {
    Architecture arch = small_arch();
    CdnModel m = nondegenerate_model(arch, 12);
    Rng rng(13);
    Matrix xv = rng.normal_matrix(2, 2);
    const Matrix E2 = rng.normal_matrix(arch.weight_rows(1), arch.weight_cols(1));
    ForwardOptions opts;
    opts.mode = SamplingMode::explicit_weights;
    opts.want_weights = true;
    opts.want_trace = true;

    for (std::uint64_t layer1_seed : {100ull, 200ull}) {
        Rng l1rng(layer1_seed);
        NoiseSource noise = fixed_layer_noise(
            {{1, l1rng.normal_matrix(arch.weight_rows(0), arch.weight_cols(0))},
             {2, E2}});
        ForwardSample fs = forward_sampled(m, Tensor::constant(xv), noise, opts);
        // reconstruct W_2 per example from the traced h_1 and the shared E2
        const Matrix h1 = fs.hidden[1].value();
        for (std::size_t ex = 0; ex < 2; ++ex) {
            Matrix h1_row(1, h1.cols());
            for (std::size_t c = 0; c < h1.cols(); ++c) h1_row(0, c) = h1(ex, c);
            Tensor H = append_ones_col(Tensor::constant(h1_row));
            LayerMixing mix = eval_hypernet(m, 2, H);
            MatrixNormalParams p = mixing_row_params(mix, m.hyper[1].mean_template, 0);
            Matrix w2 = mvn_sample(p, Tensor::constant(E2)).value();
            const Matrix& got = fs.weights[ex][1];
            for (std::size_t i = 0; i < w2.size(); ++i)
                CHECK(got[i] == doctest::Approx(w2[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("end-to-end gradients through sampling match finite differences") {
    Architecture arch = small_arch();
    CdnModel m = nondegenerate_model(arch, 14);
    Rng rng(15);
    Matrix xv = rng.normal_matrix(3, 2);
    std::vector<std::size_t> labels{0, 1, 2};
    for (SamplingMode mode : {SamplingMode::local_reparam, SamplingMode::explicit_weights}) {
        auto loss = [&] {
            NoiseSource noise = make_layer_noise(77);
            ForwardOptions opts;
            opts.mode = mode;
            ForwardSample fs = forward_sampled(m, Tensor::constant(xv), noise, opts);
            return add(neg(sum(categorical_log_prob(fs.output, labels))),
                       scale(sum(fs.kl), 1e-3));
        };
        auto r = check_gradients(loss, m.named_parameters(), 1e-5, 7);
        CAPTURE(static_cast<int>(mode));
        CHECK(r.max_rel_err < 1e-4);
    }
}

TEST_CASE("classification predictive rows are convex combinations") {
    Architecture arch = small_arch();
    CdnModel m = nondegenerate_model(arch, 16);
    Rng rng(17);
    Matrix xv = rng.normal_matrix(6, 2);
    Predictive p = predict_ml(m, xv, 37, 21);
    for (std::size_t r = 0; r < p.probs.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < p.probs.cols(); ++c) {
            CHECK(p.probs(r, c) >= 0.0);
            s += p.probs(r, c);
        }
        CHECK(std::fabs(s - 1.0) < 1e-10);
    }
}

TEST_CASE("degenerate predictive equals the single component for any sample count") {
    Architecture arch = small_arch();
    CdnModel m = degenerate_model(arch, 18);
    Rng rng(19);
    Matrix xv = rng.normal_matrix(4, 2);
    Matrix logits = template_mlp_forward(m, xv);
    Matrix expected = log_softmax(Tensor::constant(logits)).value();
    Predictive one = predict_ml(m, xv, 1, 3);
    Predictive many = predict_ml(m, xv, 25, 4);
    for (std::size_t i = 0; i < one.probs.size(); ++i) {
        CHECK(one.probs[i] == doctest::Approx(std::exp(expected[i])).epsilon(1e-4));
        CHECK(many.probs[i] == doctest::Approx(one.probs[i]).epsilon(1e-4));
    }
}

TEST_CASE("regression mixture variance follows the law of total variance") {
    Architecture arch(Architecture::mlp({1, 2}, Task::regression, 1, {2}));
    // identical components: mixture variance equals the component variance
    PredictiveAccumulator same(arch, 1);
    Matrix comp(1, 2);
    comp(0, 0) = 0.3;
    comp(0, 1) = std::log(0.49);
    same.add(Tensor::constant(comp));
    same.add(Tensor::constant(comp));
    Predictive ps = same.finalize(2);
    CHECK(ps.mean(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(ps.variance(0, 0) == doctest::Approx(0.49).epsilon(1e-12));

    // two sharp components at +-1: total variance 1
    PredictiveAccumulator pm(arch, 1);
    Matrix up(1, 2), down(1, 2);
    up(0, 0) = 1.0;
    up(0, 1) = -80.0;
    down(0, 0) = -1.0;
    down(0, 1) = -80.0;
    pm.add(Tensor::constant(up));
    pm.add(Tensor::constant(down));
    Predictive p2 = pm.finalize(2);
    CHECK(p2.mean(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p2.variance(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mixture variance is at least the mean component variance") {
    Architecture arch(Architecture::mlp({1, 2}, Task::regression, 1, {2}));
    Rng rng(20);
    for (int trial = 0; trial < 30; ++trial) {
        PredictiveAccumulator acc(arch, 1);
        double mean_comp_var = 0.0;
        const std::size_t S = 5;
        for (std::size_t s = 0; s < S; ++s) {
            Matrix comp(1, 2);
            comp(0, 0) = rng.normal();
            comp(0, 1) = rng.normal();
            mean_comp_var += std::exp(comp(0, 1));
            acc.add(Tensor::constant(comp));
        }
        Predictive p = acc.finalize(S);
        CHECK(p.variance(0, 0) >= mean_comp_var / S - 1e-12);
    }
}

TEST_CASE("variational point mass reduces to the mean model's prediction") {
    Architecture arch = small_arch();
    VariationalCdn vb = init_vb_cdn(arch, 21, /*init_factor_scale=*/1e-9);
    Rng rng(22);
    Matrix xv = rng.normal_matrix(5, 2);
    Predictive pv = predict_vb(vb, xv, 11, 33);
    Predictive pm = predict_ml(vb.mean_model(), xv, 11, 33);
    for (std::size_t i = 0; i < pv.probs.size(); ++i)
        CHECK(pv.probs[i] == doctest::Approx(pm.probs[i]).epsilon(1e-3));
}

TEST_CASE("variational predictive stays normalized") {
    Architecture arch = small_arch();
    VariationalCdn vb = init_vb_cdn(arch, 23);
    Rng rng(24);
    Matrix xv = rng.normal_matrix(4, 2);
    Predictive p = predict_vb(vb, xv, 19, 5);
    for (std::size_t r = 0; r < p.probs.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < p.probs.cols(); ++c) s += p.probs(r, c);
        CHECK(std::fabs(s - 1.0) < 1e-10);
    }
}

TEST_CASE("untrained predictive entropy sits near ln K") {
    Architecture arch = Architecture::mlp({8, 16, 10}, Task::classification, 10, {6},
                                          Activation::tanh);
    VariationalCdn vb = init_vb_cdn(arch, 25);
    Rng rng(26);
    Matrix xv(20, 8);
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = rng.uniform();
    Predictive p = predict_vb(vb, xv, 200, 6);
    double mean_entropy = 0.0;
    for (std::size_t r = 0; r < p.probs.rows(); ++r) {
        double h = 0.0;
        for (std::size_t c = 0; c < p.probs.cols(); ++c) {
            const double q = p.probs(r, c);
            if (q > 0) h -= q * std::log(q);
        }
        mean_entropy += h;
    }
    mean_entropy /= static_cast<double>(p.probs.rows());
    CHECK(mean_entropy > 0.75 * std::log(10.0));
}

TEST_CASE("vb gradients flow through sampled psi") {
    Architecture arch =
        Architecture::mlp({2, 3}, Task::classification, 3, {3}, Activation::tanh);
    VariationalCdn vb = init_vb_cdn(arch, 27);
    Rng xr(28);
    Matrix xv = xr.normal_matrix(2, 2);
    std::vector<std::size_t> labels{0, 2};
    auto loss = [&] {
        Rng psi_rng(31);
        CdnModel sampled = vb.sample_psi(psi_rng);
        NoiseSource noise = make_layer_noise(32);
        ForwardOptions opts;
        ForwardSample fs = forward_sampled(sampled, Tensor::constant(xv), noise, opts);
        return add(neg(sum(categorical_log_prob(fs.output, labels))),
                   scale(vb.kl_to_prior(), 1e-2));
    };
    auto r = check_gradients(loss, vb.named_parameters(), 1e-5, 5);
    CHECK(r.max_rel_err < 1e-4);
}
