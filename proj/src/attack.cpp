#include "cdn/attack.hpp"

#include "cdn/metrics.hpp"

#include <cmath>

namespace cdn {

void AttackConfig::validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
        throw ConfigError("attack.epsilon must lie in [0, 1], got " +
                          std::to_string(epsilon));
    if (passes < 1) throw ConfigError("attack.passes must be >= 1");
    if (!(clip_lo < clip_hi)) throw ConfigError("attack clip range is empty");
}

Matrix fgsm(const AttackLossFn& loss, const Matrix& x,
            const std::vector<std::size_t>& labels, const AttackConfig& cfg,
            std::uint64_t seed) {
    cfg.validate();
    if (labels.size() != x.rows())
        throw DimError("fgsm: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(x.rows()) + " inputs");
    Matrix g = Matrix::zeros(x.rows(), x.cols());
    for (std::size_t r = 0; r < cfg.passes; ++r) {
        Tensor x_leaf = Tensor::leaf(x, /*requires_grad=*/true);
        Tensor l = loss(x_leaf, labels, derive_seed(seed, "pass" + std::to_string(r)));
        backward(l);
        const Matrix& gx = x_leaf.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gx[i];
    }
    Matrix out = x;
    const double inv = 1.0 / static_cast<double>(cfg.passes);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double gi = g[i] * inv;
        const double s = gi > 0.0 ? 1.0 : (gi < 0.0 ? -1.0 : 0.0);
        out[i] = std::min(cfg.clip_hi, std::max(cfg.clip_lo, out[i] + cfg.epsilon * s));
    }
    return out;
}

namespace {

Tensor nll_classification(const Tensor& output, const std::vector<std::size_t>& labels) {
    return neg(sum(categorical_log_prob(output, labels)));
}

} // namespace

AttackLossFn attack_loss(const CdnModel& m, SamplingMode mode) {
    return [&m, mode](const Tensor& x, const std::vector<std::size_t>& labels,
                      std::uint64_t pass_seed) {
        NoiseSource noise = make_layer_noise(derive_seed(pass_seed, "theta"));
        ForwardOptions opts;
        opts.mode = mode;
        opts.want_kl = false;
        return nll_classification(forward_sampled(m, x, noise, opts).output, labels);
    };
}

AttackLossFn attack_loss(const VariationalCdn& m, SamplingMode mode) {
    return [&m, mode](const Tensor& x, const std::vector<std::size_t>& labels,
                      std::uint64_t pass_seed) {
        Rng psi_rng(derive_seed(pass_seed, "psi"));
        CdnModel sampled = m.sample_psi(psi_rng);
        NoiseSource noise = make_layer_noise(derive_seed(pass_seed, "theta"));
        ForwardOptions opts;
        opts.mode = mode;
        opts.want_kl = false;
        return nll_classification(forward_sampled(sampled, x, noise, opts).output,
                                  labels);
    };
}

AttackLossFn attack_loss(const DropoutMlp& m) {
    return [&m](const Tensor& x, const std::vector<std::size_t>& labels,
                std::uint64_t pass_seed) {
        Rng rng(derive_seed(pass_seed, "mask"));
        std::vector<Matrix> masks;
        if (m.rate > 0.0) {
            const double keep = 1.0 - m.rate;
            for (std::size_t l = 0; l + 1 < m.net.arch.depth(); ++l) {
                Matrix mask(x.rows(), m.net.arch.layers[l + 1]);
                for (std::size_t i = 0; i < mask.size(); ++i)
                    mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
                masks.push_back(std::move(mask));
            }
        }
        Tensor out = mlp_forward(m.net, x, masks.empty() ? nullptr : &masks);
        return nll_classification(out, labels);
    };
}

AttackLossFn attack_loss(const Ensemble& e) {
    // the ensemble predictive is deterministic: NLL of the uniform mixture,
    // log((1/K) sum_k p_k(y)) via logmeanexp over member log-probs
    return [&e](const Tensor& x, const std::vector<std::size_t>& labels,
                std::uint64_t) {
        std::vector<Tensor> member_lp;
        for (const Mlp& m : e.members)
            member_lp.push_back(categorical_log_prob(mlp_forward(m, x), labels));
        return neg(sum(log_mean_exp(concat_cols(member_lp), Axis::cols)));
    };
}

AttackLossFn attack_loss(const VmgMlp& m) {
    return [&m](const Tensor& x, const std::vector<std::size_t>& labels,
                std::uint64_t pass_seed) {
        Rng rng(derive_seed(pass_seed, "w"));
        Mlp sampled;
        sampled.arch = m.arch;
        for (const MatrixPosterior& p : m.posteriors) {
            Tensor e = Tensor::constant(rng.normal_matrix(p.mean.rows(), p.mean.cols()));
            sampled.weights.push_back(mvn_sample(p.params(), e));
        }
        return nll_classification(mlp_forward(sampled, x), labels);
    };
}

double accuracy(const Matrix& probs, const std::vector<std::size_t>& labels) {
    if (labels.size() != probs.rows())
        throw DimError("accuracy: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(probs.rows()) + " rows");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c)
            if (probs(r, c) > probs(r, arg)) arg = c;
        if (arg == labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

std::vector<SweepPoint> robustness_sweep(const AttackLossFn& loss,
                                         const PredictFn& predict, const Matrix& x,
                                         const std::vector<std::size_t>& labels,
                                         const std::vector<double>& eps_grid,
                                         std::size_t passes, std::uint64_t seed) {
    if (eps_grid.empty()) throw ContractError("robustness_sweep: empty epsilon grid");
    for (std::size_t i = 1; i < eps_grid.size(); ++i)
        if (eps_grid[i] < eps_grid[i - 1])
            throw ContractError("robustness_sweep: epsilon grid must be ascending");
    std::vector<SweepPoint> out;
    for (double eps : eps_grid) {
        AttackConfig cfg;
        cfg.epsilon = eps;
        cfg.passes = passes;
        const Matrix adv = eps == 0.0 ? x : fgsm(loss, x, labels, cfg, seed);
        const Matrix probs = predict(adv);
        const std::vector<double> ent = predictive_entropy(probs);
        double mean_ent = 0.0;
        for (double h : ent) mean_ent += h;
        mean_ent /= static_cast<double>(ent.size());
        out.push_back({eps, accuracy(probs, labels), mean_ent});
    }
    return out;
}

} // namespace cdn
