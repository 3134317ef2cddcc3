#pragma once

#include "cdn/baselines.hpp"
#include "cdn/model.hpp"

#include <functional>

namespace cdn {

struct AttackConfig {
    double epsilon = 0.0;  // L_inf budget in [0, 1]
    std::size_t passes = 1; // R forward-backward repetitions averaged into g
    double clip_lo = 0.0;
    double clip_hi = 1.0;

    void validate() const;
};

/// Differentiable single-pass NLL of a model: builds a graph from the input
/// leaf to a scalar loss, drawing any stochastic parts from pass_seed.
using AttackLossFn = std::function<Tensor(
    const Tensor& x_leaf, const std::vector<std::size_t>& labels,
    std::uint64_t pass_seed)>;

/// Fast gradient sign attack:
///   g = (1/R) sum_r grad_x NLL(x, y)   (independent draws per pass)
///   x' = clip(x + eps * sign(g), lo, hi),  sign(0) = 0.
Matrix fgsm(const AttackLossFn& loss, const Matrix& x,
            const std::vector<std::size_t>& labels, const AttackConfig& cfg,
            std::uint64_t seed);

// single-pass NLL adapters for every model kind
AttackLossFn attack_loss(const CdnModel& m,
                         SamplingMode mode = SamplingMode::local_reparam);
AttackLossFn attack_loss(const VariationalCdn& m,
                         SamplingMode mode = SamplingMode::local_reparam);
AttackLossFn attack_loss(const DropoutMlp& m);
AttackLossFn attack_loss(const Ensemble& e);
AttackLossFn attack_loss(const VmgMlp& m);

/// Class-probability prediction on a batch (used to score attacked inputs).
using PredictFn = std::function<Matrix(const Matrix& x)>;

struct SweepPoint {
    double epsilon;
    double accuracy;
    double mean_entropy;
};

/// Accuracy and mean predictive entropy across an ascending epsilon grid;
/// each grid point attacks the same examples.
std::vector<SweepPoint> robustness_sweep(const AttackLossFn& loss,
                                         const PredictFn& predict, const Matrix& x,
                                         const std::vector<std::size_t>& labels,
                                         const std::vector<double>& eps_grid,
                                         std::size_t passes, std::uint64_t seed);

double accuracy(const Matrix& probs, const std::vector<std::size_t>& labels);

} // namespace cdn
