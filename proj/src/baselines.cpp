#include "cdn/baselines.hpp"

#include <cmath>

namespace cdn {

namespace {

Tensor nll_of(const Architecture& arch, const Tensor& output, const Batch& batch) {
    if (arch.task == Task::classification)
        return neg(sum(categorical_log_prob(output, batch.labels)));
    auto [mu, lv] = split_regression_output(arch, output);
    return neg(sum(gaussian_log_prob(Tensor::constant(batch.targets), mu, lv)));
}

std::vector<Matrix> draw_dropout_masks(const Architecture& arch, double rate,
                                       std::size_t batch, Rng& rng) {
    std::vector<Matrix> masks;
    if (rate <= 0.0) return masks;
    const double keep = 1.0 - rate;
    for (std::size_t l = 0; l + 1 < arch.depth(); ++l) {
        Matrix m(batch, arch.layers[l + 1]);
        for (std::size_t i = 0; i < m.size(); ++i)
            m[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
        masks.push_back(std::move(m));
    }
    return masks;
}

} // namespace

std::vector<std::pair<std::string, Tensor>> Mlp::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t l = 0; l < weights.size(); ++l)
        out.emplace_back("layer" + std::to_string(l + 1) + ".w", weights[l]);
    return out;
}

Mlp init_mlp(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    Mlp m;
    m.arch = arch;
    for (std::size_t l = 0; l < arch.depth(); ++l) {
        const std::size_t r = arch.weight_rows(l);
        const std::size_t c = arch.weight_cols(l);
        Rng rng(derive_seed(seed, "mlp/layer" + std::to_string(l + 1)));
        Matrix w(r, c);
        const double sd = std::sqrt(2.0 / static_cast<double>(r));
        for (std::size_t i = 0; i + 1 < r; ++i)
            for (std::size_t j = 0; j < c; ++j) w(i, j) = sd * rng.normal();
        m.weights.push_back(Tensor::leaf(std::move(w)));
    }
    return m;
}

Tensor mlp_forward(const Mlp& m, const Tensor& x,
                   const std::vector<Matrix>* dropout_masks) {
    Tensor h = x;
    for (std::size_t l = 0; l < m.arch.depth(); ++l) {
        h = apply_activation(m.arch.activations[l],
                             matmul(append_ones_col(h), m.weights[l]));
        const bool hidden = l + 1 < m.arch.depth();
        if (hidden && dropout_masks && !dropout_masks->empty())
            h = mul(h, Tensor::constant((*dropout_masks)[l]));
    }
    return h;
}

TrainResult train_mlp(Mlp& m, const Dataset& data, const TrainConfig& cfg,
                      double dropout_rate) {
    Adam opt(m.named_parameters(), cfg.learning_rate);
    return run_training(
        opt, data, cfg,
        [&m, dropout_rate](const Batch& batch, std::uint64_t iter_seed) {
            Rng mask_rng(derive_seed(iter_seed, "dropout"));
            const std::vector<Matrix> masks = draw_dropout_masks(
                m.arch, dropout_rate, batch.inputs.rows(), mask_rng);
            Tensor out = mlp_forward(m, Tensor::constant(batch.inputs),
                                     masks.empty() ? nullptr : &masks);
            ObjectiveValue v;
            v.loss = nll_of(m.arch, out, batch);
            v.nll_term = v.loss.item();
            v.kl_term = 0.0;
            return v;
        });
}

void DropoutMlp::validate() const {
    if (!(rate >= 0.0 && rate < 1.0))
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
}

Predictive mcd_predict(const DropoutMlp& m, const Matrix& x, std::size_t passes,
                       std::uint64_t seed) {
    m.validate();
    if (passes == 0) throw ContractError("mcd_predict: need at least one pass");
    PredictiveAccumulator acc(m.net.arch, x.rows());
    Tensor xs = Tensor::constant(x);
    for (std::size_t t = 0; t < passes; ++t) {
        Rng rng(derive_seed(seed, "mcd/pass" + std::to_string(t)));
        const std::vector<Matrix> masks =
            draw_dropout_masks(m.net.arch, m.rate, x.rows(), rng);
        acc.add(mlp_forward(m.net, xs, masks.empty() ? nullptr : &masks));
    }
    return acc.finalize(passes);
}

Ensemble train_ensemble(const Architecture& arch, const Dataset& data,
                        const TrainConfig& cfg, std::size_t members) {
    if (members < 2) throw ConfigError("ensemble needs at least 2 members");
    Ensemble e;
    for (std::size_t i = 0; i < members; ++i) {
        TrainConfig mcfg = cfg;
        mcfg.seed = derive_seed(cfg.seed, "ensemble/member" + std::to_string(i));
        Mlp member = init_mlp(arch, mcfg.seed);
        train_mlp(member, data, mcfg);
        e.members.push_back(std::move(member));
    }
    return e;
}

Predictive ensemble_predict(const Ensemble& e, const Matrix& x) {
    if (e.members.empty()) throw ContractError("ensemble_predict: no members");
    PredictiveAccumulator acc(e.members.front().arch, x.rows());
    Tensor xs = Tensor::constant(x);
    for (const Mlp& m : e.members) acc.add(mlp_forward(m, xs));
    return acc.finalize(e.members.size());
}

// -- VMG -------------------------------------------------------------------------

std::vector<std::pair<std::string, Tensor>> VmgMlp::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t l = 0; l < posteriors.size(); ++l) {
        const std::string base = "layer" + std::to_string(l + 1);
        out.emplace_back(base + ".q_mean", posteriors[l].mean);
        out.emplace_back(base + ".q_raw_a", posteriors[l].raw_a);
        out.emplace_back(base + ".q_raw_b", posteriors[l].raw_b);
    }
    return out;
}

Tensor VmgMlp::kl_to_prior() const {
    Tensor total;
    for (const MatrixPosterior& p : posteriors) {
        Tensor kl = mvn_kl_to_standard(p.params());
        total = total.defined() ? add(total, kl) : kl;
    }
    return total;
}

double VmgMlp::average_posterior_variance() const {
    double var_sum = 0.0;
    std::size_t count = 0;
    for (const MatrixPosterior& p : posteriors) {
        MatrixNormalParams mp = p.params();
        const Matrix& a = mp.a.value();
        const Matrix& b = mp.b.value();
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j) var_sum += a[i] * b[j];
        count += a.size() * b.size();
    }
    return var_sum / static_cast<double>(count);
}

VmgMlp init_vmg(const Architecture& arch, std::uint64_t seed,
                double init_factor_scale) {
    Mlp point = init_mlp(arch, seed);
    VmgMlp v;
    v.arch = arch;
    const double raw = std::log(std::expm1(init_factor_scale));
    for (const Tensor& w : point.weights) {
        MatrixPosterior p;
        p.mean = Tensor::leaf(w.value());
        p.raw_a = Tensor::leaf(Matrix(1, w.rows(), raw));
        p.raw_b = Tensor::leaf(Matrix(1, w.cols(), raw));
        v.posteriors.push_back(std::move(p));
    }
    return v;
}

namespace {

/// One reparametrized stochastic forward: pre-activation noise with
/// variance b_j * sum_i h_i^2 a_i per unit (the posterior is shared across
/// the batch; draws are per example).
Tensor vmg_forward_local(const VmgMlp& m, const Tensor& x, NoiseSource& noise) {
    Tensor h = x;
    const std::size_t batch = x.rows();
    for (std::size_t l = 0; l < m.arch.depth(); ++l) {
        const std::size_t c = m.arch.weight_cols(l);
        MatrixNormalParams p = m.posteriors[l].params();
        Tensor H = append_ones_col(h);
        Tensor mean_pre = matmul(H, p.M);
        Tensor s2 = matmul(mul(H, H), transpose(p.a)); // batch x 1
        Tensor std_rows =
            matmul(sqrt_positive(s2), Tensor::constant(Matrix::ones(1, c)));
        Tensor sqrt_b_rows =
            matmul(Tensor::constant(Matrix::ones(batch, 1)), sqrt_positive(p.b));
        Tensor zeta = Tensor::constant(noise(l + 1, batch, c));
        Tensor pre = add(mean_pre, mul(std_rows, mul(zeta, sqrt_b_rows)));
        h = apply_activation(m.arch.activations[l], pre);
    }
    return h;
}

} // namespace

TrainResult train_vmg(VmgMlp& m, const Dataset& data, const TrainConfig& cfg) {
    Adam opt(m.named_parameters(), cfg.learning_rate);
    const double n = static_cast<double>(data.size());
    return run_training(
        opt, data, cfg, [&m, &cfg, n](const Batch& batch, std::uint64_t iter_seed) {
            const double scale_n = n / static_cast<double>(batch.inputs.rows());
            Tensor x = Tensor::constant(batch.inputs);
            Tensor lp_sum;
            for (std::size_t s = 0; s < cfg.samples; ++s) {
                NoiseSource noise = make_layer_noise(
                    derive_seed(iter_seed, "vmg/sample" + std::to_string(s)));
                Tensor out = vmg_forward_local(m, x, noise);
                Tensor lp;
                if (m.arch.task == Task::classification) {
                    lp = categorical_log_prob(out, batch.labels);
                } else {
                    auto [mu, lv] = split_regression_output(m.arch, out);
                    lp = gaussian_log_prob(Tensor::constant(batch.targets), mu, lv);
                }
                lp_sum = lp_sum.defined() ? add(lp_sum, lp) : lp;
            }
            Tensor avg_lp = scale(sum(lp_sum), 1.0 / static_cast<double>(cfg.samples));
            Tensor kl = m.kl_to_prior();
            ObjectiveValue v;
            v.nll_term = -scale_n * avg_lp.item();
            v.kl_term = kl.item();
            v.loss = add(neg(scale(avg_lp, scale_n)), kl);
            return v;
        });
}

Predictive vmg_predict(const VmgMlp& m, const Matrix& x, std::size_t samples,
                       std::uint64_t seed) {
    if (samples == 0) throw ContractError("vmg_predict: need at least one sample");
    PredictiveAccumulator acc(m.arch, x.rows());
    Tensor xs = Tensor::constant(x);
    for (std::size_t s = 0; s < samples; ++s) {
        Rng rng(derive_seed(seed, "vmg/predict" + std::to_string(s)));
        Mlp sampled;
        sampled.arch = m.arch;
        for (const MatrixPosterior& p : m.posteriors) {
            Tensor e = Tensor::constant(rng.normal_matrix(p.mean.rows(), p.mean.cols()));
            sampled.weights.push_back(mvn_sample(p.params(), e));
        }
        acc.add(mlp_forward(sampled, xs));
    }
    return acc.finalize(samples);
}

} // namespace cdn
