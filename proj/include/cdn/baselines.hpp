#pragma once

#include "cdn/train.hpp"

namespace cdn {

/// Plain MLP with bias-absorbed weight matrices. Shared substrate for the
/// MC-dropout and Deep Ensemble baselines. Hypernet fields of the
/// Architecture are ignored.
struct Mlp {
    Architecture arch;
    std::vector<Tensor> weights; // (d_{l-1}+1) x d_l

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

Mlp init_mlp(const Architecture& arch, std::uint64_t seed);

/// Deterministic forward; dropout_masks (one per hidden layer, already
/// scaled by 1/(1-p)) are multiplied onto the hidden activations when given.
Tensor mlp_forward(const Mlp& m, const Tensor& x,
                   const std::vector<Matrix>* dropout_masks = nullptr);

/// NLL training of a single MLP (the proper scoring rule of the Deep
/// Ensemble baseline); optional dropout on hidden layers during training.
TrainResult train_mlp(Mlp& m, const Dataset& data, const TrainConfig& cfg,
                      double dropout_rate = 0.0);

struct DropoutMlp {
    Mlp net;
    double rate = 0.5; // 0 <= rate < 1, hidden layers only

    void validate() const;
};

/// Average over `passes` stochastic forwards with freshly sampled Bernoulli
/// masks (test-time dropout).
Predictive mcd_predict(const DropoutMlp& m, const Matrix& x, std::size_t passes,
                       std::uint64_t seed);

struct Ensemble {
    std::vector<Mlp> members; // one shared architecture
};

/// Members are trained independently with per-member derived seeds.
Ensemble train_ensemble(const Architecture& arch, const Dataset& data,
                        const TrainConfig& cfg, std::size_t members);

/// Uniform mixture of the member predictions.
Predictive ensemble_predict(const Ensemble& e, const Matrix& x);

/// Plain MLP whose weight matrices carry diagonal-factor MVN variational
/// posteriors; trained by the standard ELBO with the reparametrization
/// trick. The input-independent counterpart of the CDN mixing distribution.
struct VmgMlp {
    Architecture arch;
    std::vector<MatrixPosterior> posteriors; // one per layer

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    Tensor kl_to_prior() const;
    double average_posterior_variance() const;
};

VmgMlp init_vmg(const Architecture& arch, std::uint64_t seed,
                double init_factor_scale = 0.1);

TrainResult train_vmg(VmgMlp& m, const Dataset& data, const TrainConfig& cfg);

/// Average of `samples` posterior weight draws (one draw shared across the
/// batch per sample).
Predictive vmg_predict(const VmgMlp& m, const Matrix& x, std::size_t samples,
                       std::uint64_t seed);

} // namespace cdn
