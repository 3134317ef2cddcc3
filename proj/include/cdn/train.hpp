#pragma once

#include "cdn/data.hpp"
#include "cdn/model.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace cdn {

enum class Objective { ml, vb };

struct TrainConfig {
    std::size_t batch_size = 200;  // M
    std::size_t samples = 1;       // S draws of theta per example per step
    double lambda = 1e-5;          // mixing-KL strength (ML objective)
    double learning_rate = 1e-3;   // Adam alpha
    std::size_t iterations = 10000;
    std::uint64_t seed = 0;
    Objective objective = Objective::ml;
    SamplingMode mode = SamplingMode::local_reparam;
    std::size_t log_every = 100;
    /// Global-norm gradient clip; 0 disables (the default). A blunt NaN
    /// guard for pathological configurations, not part of the method.
    double clip_norm = 0.0;
    /// Called on every logged row (progress reporting); not part of the
    /// experiment configuration.
    std::function<void(const struct TraceRow&)> log_hook;

    void validate() const;
};

/// Targets for one minibatch; exactly one of labels/targets is used.
struct Batch {
    Matrix inputs;
    std::vector<std::size_t> labels;
    Matrix targets;
};

Batch make_batch(const Dataset& d, const std::vector<std::size_t>& idx);

/// One noise stream per Monte-Carlo sample index.
using NoiseFactory = std::function<NoiseSource(std::size_t sample)>;
NoiseFactory seeded_noise_factory(std::uint64_t seed);

struct ObjectiveValue {
    Tensor loss;     // scalar graph node (minimize)
    double nll_term; // value of the negative log-likelihood part
    double kl_term;  // value of the KL part (lambda-free)
};

/// Negative regularized likelihood over a minibatch:
///   -[ sum_m logmeanexp_s log p(y_m; phi_s(x_m)) - lambda sum_m KL_m ]
/// Batch sums, no dataset-size rescaling. KL_m is the Monte-Carlo average
/// over the S sampled trajectories of the per-layer mixing KL.
ObjectiveValue ml_objective(const CdnModel& m, const Batch& batch, std::size_t samples,
                            double lambda, const NoiseFactory& noise,
                            SamplingMode mode = SamplingMode::local_reparam);

/// Negative ELBO estimate with minibatch scaling:
///   -[ (N/M) sum_m logmeanexp_s log p(y_m; phi_s(x_m)) - KL(q || p(psi)) ]
/// using a single psi ~ q(psi; omega) per call and S theta samples.
ObjectiveValue vb_objective(const VariationalCdn& m, const Batch& batch,
                            std::size_t samples, std::size_t dataset_size,
                            Rng& psi_rng, const NoiseFactory& noise,
                            SamplingMode mode = SamplingMode::local_reparam);

/// Per-parameter Adam state (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
struct AdamState {
    Matrix m1;
    Matrix m2;
    std::size_t t = 0;
};

/// Standard bias-corrected Adam descent step on one parameter value.
void adam_update(Matrix& value, const Matrix& grad, AdamState& state, double lr,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

class Adam {
public:
    Adam(std::vector<std::pair<std::string, Tensor>> params, double lr);

    void zero_grad();
    /// Applies one descent step from the accumulated gradients; parameters
    /// without a gradient are left untouched.
    void step();
    /// Scales all gradients so their global norm is at most max_norm.
    void clip_global_norm(double max_norm);

private:
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<AdamState> state_;
    double lr_;
};

struct TraceRow {
    std::size_t iteration;
    double nll_term;
    double kl_term;
    double total;
};

struct TrainResult {
    std::vector<TraceRow> trace;
};

using ObjectiveFn =
    std::function<ObjectiveValue(const Batch& batch, std::uint64_t iter_seed)>;

/// The shared loop: sample minibatch, evaluate the objective, backward,
/// optional clip, Adam step. Deterministic given (seed, config, data order).
/// Aborts with NumericalError carrying iteration and term values if the
/// loss stops being finite.
TrainResult run_training(Adam& opt, const Dataset& data, const TrainConfig& cfg,
                         const ObjectiveFn& objective);

TrainResult train_ml(CdnModel& m, const Dataset& data, const TrainConfig& cfg);
TrainResult train_vb(VariationalCdn& m, const Dataset& data, const TrainConfig& cfg);

void write_loss_csv(const std::string& path, const std::vector<TraceRow>& trace);

} // namespace cdn
