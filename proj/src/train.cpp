#include "cdn/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace cdn {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (samples < 1) throw ConfigError("train.samples must be >= 1");
    if (lambda < 0.0) throw ConfigError("train.lambda must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (log_every < 1) throw ConfigError("train.log_every must be >= 1");
    if (clip_norm < 0.0) throw ConfigError("train.clip_norm must be >= 0");
}

Batch make_batch(const Dataset& d, const std::vector<std::size_t>& idx) {
    Dataset s = subset(d, idx);
    Batch b;
    b.inputs = std::move(s.inputs);
    b.labels = std::move(s.labels);
    b.targets = std::move(s.targets);
    return b;
}

NoiseFactory seeded_noise_factory(std::uint64_t seed) {
    return [seed](std::size_t sample) {
        return make_layer_noise(derive_seed(seed, "sample" + std::to_string(sample)));
    };
}

namespace {

Tensor component_log_prob(const Architecture& arch, const Tensor& output,
                          const Batch& batch) {
    if (arch.task == Task::classification)
        return categorical_log_prob(output, batch.labels);
    auto [mu, log_var] = split_regression_output(arch, output);
    return gaussian_log_prob(Tensor::constant(batch.targets), mu, log_var);
}

/// batch x 1 tensor of logmeanexp_s log p(y_m; phi_s(x_m)), plus the mean
/// over samples of the per-example trajectory KL when requested.
struct LikelihoodParts {
    Tensor log_mean_lik; // batch x 1
    Tensor mean_kl;      // batch x 1 (undefined when KL not requested)
};

LikelihoodParts sampled_likelihood(const CdnModel& m, const Batch& batch,
                                   std::size_t samples, const NoiseFactory& noise,
                                   SamplingMode mode, bool want_kl) {
    Tensor x = Tensor::constant(batch.inputs);
    ForwardOptions opts;
    opts.mode = mode;
    opts.want_kl = want_kl;
    std::vector<Tensor> log_probs;
    Tensor kl_sum;
    for (std::size_t s = 0; s < samples; ++s) {
        NoiseSource ns = noise(s);
        ForwardSample fs = forward_sampled(m, x, ns, opts);
        log_probs.push_back(component_log_prob(m.arch, fs.output, batch));
        if (want_kl) kl_sum = kl_sum.defined() ? add(kl_sum, fs.kl) : fs.kl;
    }
    LikelihoodParts parts;
    parts.log_mean_lik = samples == 1
                             ? log_probs[0]
                             : log_mean_exp(concat_cols(log_probs), Axis::cols);
    if (want_kl)
        parts.mean_kl = scale(kl_sum, 1.0 / static_cast<double>(samples));
    return parts;
}

} // namespace

ObjectiveValue ml_objective(const CdnModel& m, const Batch& batch, std::size_t samples,
                            double lambda, const NoiseFactory& noise,
                            SamplingMode mode) {
    if (samples < 1) throw ContractError("ml_objective: samples must be >= 1");
    LikelihoodParts parts =
        sampled_likelihood(m, batch, samples, noise, mode, /*want_kl=*/true);
    Tensor nll = neg(sum(parts.log_mean_lik));
    Tensor kl = sum(parts.mean_kl);
    ObjectiveValue v;
    v.nll_term = nll.item();
    v.kl_term = kl.item();
    v.loss = add(nll, scale(kl, lambda));
    return v;
}

ObjectiveValue vb_objective(const VariationalCdn& m, const Batch& batch,
                            std::size_t samples, std::size_t dataset_size,
                            Rng& psi_rng, const NoiseFactory& noise,
                            SamplingMode mode) {
    if (samples < 1) throw ContractError("vb_objective: samples must be >= 1");
    const std::size_t batch_n = batch.inputs.rows();
    if (dataset_size < batch_n)
        throw ContractError("vb_objective: dataset smaller than the batch");
    CdnModel sampled = m.sample_psi(psi_rng);
    LikelihoodParts parts =
        sampled_likelihood(sampled, batch, samples, noise, mode, /*want_kl=*/false);
    const double scale_n =
        static_cast<double>(dataset_size) / static_cast<double>(batch_n);
    Tensor nll = neg(scale(sum(parts.log_mean_lik), scale_n));
    Tensor kl = m.kl_to_prior();
    ObjectiveValue v;
    v.nll_term = nll.item();
    v.kl_term = kl.item();
    v.loss = add(nll, kl);
    return v;
}

// -- Adam ---------------------------------------------------------------------

void adam_update(Matrix& value, const Matrix& grad, AdamState& state, double lr,
                 double beta1, double beta2, double eps) {
    if (!value.same_shape(grad))
        throw DimError("adam_update: grad " + grad.shape_str() + " for value " +
                       value.shape_str());
    if (state.t == 0) {
        state.m1 = Matrix::zeros(value.rows(), value.cols());
        state.m2 = Matrix::zeros(value.rows(), value.cols());
    }
    state.t += 1;
    const double b1t = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double b2t = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < value.size(); ++i) {
        state.m1[i] = beta1 * state.m1[i] + (1.0 - beta1) * grad[i];
        state.m2[i] = beta2 * state.m2[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = state.m1[i] / b1t;
        const double vhat = state.m2[i] / b2t;
        value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, double lr)
    : params_(std::move(params)), state_(params_.size()), lr_(lr) {}

void Adam::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i].second;
        if (!p.has_grad()) continue;
        Matrix v = p.value();
        adam_update(v, p.grad(), state_[i], lr_);
        p.assign(v);
    }
}

void Adam::clip_global_norm(double max_norm) {
    double sq = 0.0;
    for (auto& [name, p] : params_) {
        if (!p.has_grad()) continue;
        const Matrix& g = p.grad();
        for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double f = max_norm / norm;
    for (auto& [name, p] : params_)
        if (p.has_grad()) p.scale_grad(f);
}

// -- training loop --------------------------------------------------------------

TrainResult run_training(Adam& opt, const Dataset& data, const TrainConfig& cfg,
                         const ObjectiveFn& objective) {
    cfg.validate();
    TrainResult result;
    if (cfg.iterations == 0) return result;
    BatchStream batches(data.size(), std::min(cfg.batch_size, data.size()),
                        derive_seed(cfg.seed, "batches"));
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        Batch batch = make_batch(data, batches.next());
        const std::uint64_t iter_seed =
            derive_seed(cfg.seed, "iter" + std::to_string(it));
        ObjectiveValue v = objective(batch, iter_seed);
        const double total = v.loss.item();
        if (!std::isfinite(total))
            throw NumericalError(
                "training aborted: non-finite loss at iteration " + std::to_string(it) +
                " (nll_term=" + std::to_string(v.nll_term) +
                ", kl_term=" + std::to_string(v.kl_term) + ")");
        opt.zero_grad();
        backward(v.loss);
        if (cfg.clip_norm > 0.0) opt.clip_global_norm(cfg.clip_norm);
        opt.step();
        if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
            result.trace.push_back({it, v.nll_term, v.kl_term, total});
            if (cfg.log_hook) cfg.log_hook(result.trace.back());
        }
    }
    return result;
}

TrainResult train_ml(CdnModel& m, const Dataset& data, const TrainConfig& cfg) {
    Adam opt(m.named_parameters(), cfg.learning_rate);
    return run_training(opt, data, cfg,
                        [&m, &cfg](const Batch& batch, std::uint64_t iter_seed) {
                            return ml_objective(
                                m, batch, cfg.samples, cfg.lambda,
                                seeded_noise_factory(derive_seed(iter_seed, "noise")),
                                cfg.mode);
                        });
}

TrainResult train_vb(VariationalCdn& m, const Dataset& data, const TrainConfig& cfg) {
    Adam opt(m.named_parameters(), cfg.learning_rate);
    const std::size_t n = data.size();
    return run_training(opt, data, cfg,
                        [&m, &cfg, n](const Batch& batch, std::uint64_t iter_seed) {
                            Rng psi_rng(derive_seed(iter_seed, "psi"));
                            return vb_objective(
                                m, batch, cfg.samples, n, psi_rng,
                                seeded_noise_factory(derive_seed(iter_seed, "noise")),
                                cfg.mode);
                        });
}

void write_loss_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << "iteration,nll_term,kl_term,total\n";
    char buf[128];
    for (const TraceRow& r : trace) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.iteration,
                      r.nll_term, r.kl_term, r.total);
        f << buf;
    }
}

} // namespace cdn
