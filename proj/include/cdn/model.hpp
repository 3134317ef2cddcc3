#pragma once

#include "cdn/matrix_normal.hpp"
#include "cdn/rng.hpp"
#include "cdn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cdn {

enum class Task { classification, regression };
enum class Activation { relu, tanh, identity };

Matrix apply_activation(Activation act, const Matrix& m);
Tensor apply_activation(Activation act, const Tensor& t);

/// Predictive-network and hypernetwork shapes.
/// layers = [d_0 ... d_L]; d_L must equal the class count for classification
/// or 2*output_dim (mean, log-variance) for regression. Hidden activations
/// default to ReLU with identity at the output. Biases are absorbed:
/// W_l has shape (d_{l-1}+1) x d_l.
struct Architecture {
    std::vector<std::size_t> layers;
    Task task = Task::classification;
    std::size_t output_dim = 0; // K or regression dim
    std::vector<Activation> activations; // per predictive layer, size L
    std::vector<std::size_t> hypernet_hidden{50};
    Activation hypernet_activation = Activation::relu;

    std::size_t depth() const { return layers.size() - 1; }
    std::size_t weight_rows(std::size_t l) const { return layers[l] + 1; }
    std::size_t weight_cols(std::size_t l) const { return layers[l + 1]; }

    static Architecture mlp(std::vector<std::size_t> layer_sizes, Task task,
                            std::size_t output_dim,
                            std::vector<std::size_t> hypernet_hidden = {50},
                            Activation hypernet_activation = Activation::relu);

    void validate() const;
    PriorSpec prior() const;
};

/// Hypernetwork for one predictive layer: an MLP taking the bias-augmented
/// previous hidden state (dim r = d_{l-1}+1) to (z, a~, b~) of width 2r + c,
/// plus the free mean template M^ (r x c). The per-input mean is
/// M = diag(z) M^, and a = softplus(a~) + 1e-6 (same for b).
struct LayerHypernet {
    std::vector<Tensor> weights; // each (in+1) x out, bias absorbed
    Tensor mean_template;        // r x c
};

/// Per-layer mixing-distribution parameters for a batch of inputs, one row
/// per example.
struct LayerMixing {
    Tensor z; // batch x r
    Tensor a; // batch x r, strictly positive
    Tensor b; // batch x c, strictly positive
};

/// ML-CDN: point-estimate hypernetwork parameters.
struct CdnModel {
    Architecture arch;
    std::vector<LayerHypernet> hyper;

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

/// He-style initialization; hypernet output layers start at zero except the
/// z-head bias of 1, so the initial mean is the template itself.
CdnModel init_cdn(const Architecture& arch, std::uint64_t seed);

/// Noise injection point for sampled forwards. layer is 1-based. Explicit
/// sampling requests one r x c matrix per (example, layer) in example-major
/// order; the fused route requests one batch x d_l matrix per layer.
using NoiseSource = std::function<Matrix(std::size_t layer, std::size_t rows,
                                         std::size_t cols)>;

/// Per-layer independent streams derived from one seed.
NoiseSource make_layer_noise(std::uint64_t seed);

enum class SamplingMode {
    explicit_weights, ///< materialize W_l per example via mvn_sample
    local_reparam,    ///< algebraically fused pre-activation sampling
};

/// Result of one sampled pass. output holds the component parameters
/// phi(x): logits (batch x K) or [mean, log_var] (batch x 2*dim).
/// kl is the per-example sum over layers of KL(mixing || MN(0,I,I)) for this
/// pass's trajectory (batch x 1). Explicit passes can also surface the drawn
/// weights and the hidden-state trace.
struct ForwardSample {
    Tensor output;
    Tensor kl;
    std::vector<Tensor> hidden;                 // h_0 .. h_L (unaugmented)
    std::vector<std::vector<Matrix>> weights;   // [example][layer], explicit only
};

struct ForwardOptions {
    SamplingMode mode = SamplingMode::local_reparam;
    bool want_kl = true;
    bool want_trace = false;
    bool want_weights = false;
};

/// Hypernet evaluation on bias-augmented states (batch x r).
LayerMixing eval_hypernet(const CdnModel& m, std::size_t layer, const Tensor& h_aug);

/// Per-example matrix-normal parameters from row `row` of a LayerMixing.
MatrixNormalParams mixing_row_params(const LayerMixing& mix, const Tensor& mean_template,
                                     std::size_t row);

/// One sampled pass through the predictive net; weights are drawn fresh per
/// example (each batch row sees its own W_l).
ForwardSample forward_sampled(const CdnModel& m, const Tensor& x, NoiseSource& noise,
                              const ForwardOptions& opts = {});

/// Monte-Carlo predictive distribution.
struct Predictive {
    Matrix probs;    // classification: batch x K rows summing to 1
    Matrix mean;     // regression: batch x dim
    Matrix variance; // regression: batch x dim
};

/// Running average of sampled component distributions. Classification
/// averages softmax rows; regression forms the mixture mean and the
/// law-of-total-variance mixture variance from (mean, log_var) heads.
class PredictiveAccumulator {
public:
    PredictiveAccumulator(const Architecture& arch, std::size_t rows);
    void add(const Tensor& output, std::size_t row_offset = 0);
    Predictive finalize(std::size_t samples) const;

private:
    const Architecture& arch_;
    Matrix probs_;
    Matrix mean_sum_;
    Matrix second_moment_;
};

Predictive predict_ml(const CdnModel& m, const Matrix& x, std::size_t samples,
                      std::uint64_t seed,
                      SamplingMode mode = SamplingMode::local_reparam);

/// Variational posterior over the hypernetwork parameters: one diagonal MVN
/// per parameter matrix. a = softplus(raw_a) + 1e-6, likewise b.
struct MatrixPosterior {
    Tensor mean;
    Tensor raw_a;
    Tensor raw_b;

    MatrixNormalParams params() const;
};

struct VariationalCdn {
    Architecture arch;
    std::vector<std::vector<MatrixPosterior>> hyper_weights; // [layer][matrix]
    std::vector<MatrixPosterior> mean_templates;             // [layer]

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;

    /// Graph-linked joint draw psi ~ q(psi; omega); gradients flow back into
    /// the posterior parameters through the reparametrized samples.
    CdnModel sample_psi(Rng& rng) const;

    /// Point-mass model at the posterior mean.
    CdnModel mean_model() const;

    /// Closed-form KL(q || prod MN(0,I,I)), summed over parameter matrices.
    Tensor kl_to_prior() const;

    /// Mean posterior variance over all psi entries (scalar diagnostics).
    double average_posterior_variance() const;
};

VariationalCdn init_vb_cdn(const Architecture& arch, std::uint64_t seed,
                           double init_factor_scale = 0.1);

Predictive predict_vb(const VariationalCdn& m, const Matrix& x, std::size_t samples,
                      std::uint64_t seed,
                      SamplingMode mode = SamplingMode::local_reparam);

/// Splits regression component parameters into (mean, log_var).
std::pair<Tensor, Tensor> split_regression_output(const Architecture& arch,
                                                  const Tensor& output);

/// Average mixing-distribution variance (mean over all weight entries of
/// a_i b_j across layers) per input row, averaged over `samples` sampled
/// trajectories. Returns one value per batch row.
std::vector<double> average_mixing_variance(const CdnModel& m, const Matrix& x,
                                            std::size_t samples, std::uint64_t seed);
std::vector<double> average_mixing_variance(const VariationalCdn& m, const Matrix& x,
                                            std::size_t samples, std::uint64_t seed);

} // namespace cdn
