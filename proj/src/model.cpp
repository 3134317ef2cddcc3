#include "cdn/model.hpp"

#include <cmath>

namespace cdn {

namespace {

constexpr double kFactorEps = 1e-6; // additive floor after softplus

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l + 1); }

} // namespace

Matrix apply_activation(Activation act, const Matrix& m) {
    Matrix out = m;
    switch (act) {
        case Activation::identity: break;
        case Activation::relu:
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = out[i] > 0.0 ? out[i] : 0.0;
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
            break;
    }
    return out;
}

Tensor apply_activation(Activation act, const Tensor& t) {
    switch (act) {
        case Activation::identity: return t;
        case Activation::relu: return relu(t);
        case Activation::tanh: return tanh(t);
    }
    throw ContractError("unknown activation");
}

Architecture Architecture::mlp(std::vector<std::size_t> layer_sizes, Task task,
                               std::size_t output_dim,
                               std::vector<std::size_t> hypernet_hidden,
                               Activation hypernet_activation) {
    Architecture a;
    a.layers = std::move(layer_sizes);
    a.task = task;
    a.output_dim = output_dim;
    a.hypernet_hidden = std::move(hypernet_hidden);
    a.hypernet_activation = hypernet_activation;
    if (a.layers.size() >= 2) {
        a.activations.assign(a.layers.size() - 2, Activation::relu);
        a.activations.push_back(Activation::identity);
    }
    a.validate();
    return a;
}

void Architecture::validate() const {
    if (layers.size() < 2) throw ConfigError("architecture: need at least one layer");
    for (std::size_t d : layers)
        if (d == 0) throw ConfigError("architecture: zero-width layer");
    if (activations.size() != depth())
        throw ConfigError("architecture: " + std::to_string(activations.size()) +
                          " activations for " + std::to_string(depth()) + " layers");
    if (output_dim == 0) throw ConfigError("architecture: output_dim must be positive");
    const std::size_t want =
        task == Task::classification ? output_dim : 2 * output_dim;
    if (layers.back() != want)
        throw ConfigError("architecture: final layer is " + std::to_string(layers.back()) +
                          " but task requires " + std::to_string(want));
    if (hypernet_activation == Activation::identity)
        throw ConfigError("architecture: hypernet activation must be relu or tanh");
}

PriorSpec Architecture::prior() const {
    PriorSpec p;
    for (std::size_t l = 0; l < depth(); ++l)
        p.shapes.emplace_back(weight_rows(l), weight_cols(l));
    return p;
}

// -- initialization ----------------------------------------------------------

namespace {

// He-style for relu, Xavier-style for tanh; the bias row starts at zero.
Matrix init_dense(std::size_t in_aug, std::size_t out, Activation act, Rng& rng,
                  bool zero_bias_row) {
    const double fan = static_cast<double>(in_aug);
    const double sd = act == Activation::tanh ? std::sqrt(1.0 / fan)
                                              : std::sqrt(2.0 / fan);
    Matrix w(in_aug, out);
    const std::size_t data_rows = zero_bias_row ? in_aug - 1 : in_aug;
    for (std::size_t i = 0; i < data_rows; ++i)
        for (std::size_t j = 0; j < out; ++j) w(i, j) = sd * rng.normal();
    return w;
}

std::vector<std::size_t> hypernet_dims(const Architecture& arch, std::size_t l) {
    const std::size_t r = arch.weight_rows(l);
    const std::size_t c = arch.weight_cols(l);
    std::vector<std::size_t> dims{r};
    for (std::size_t h : arch.hypernet_hidden) dims.push_back(h);
    dims.push_back(2 * r + c);
    return dims;
}

} // namespace

CdnModel init_cdn(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    CdnModel m;
    m.arch = arch;
    for (std::size_t l = 0; l < arch.depth(); ++l) {
        const std::size_t r = arch.weight_rows(l);
        const std::size_t c = arch.weight_cols(l);
        LayerHypernet h;

        Rng trng(derive_seed(seed, "init/" + layer_prefix(l) + "/template"));
        Matrix tmpl(r, c);
        const double sd = std::sqrt(2.0 / static_cast<double>(r));
        for (std::size_t i = 0; i < tmpl.size(); ++i) tmpl[i] = sd * trng.normal();
        h.mean_template = Tensor::leaf(std::move(tmpl));

        const auto dims = hypernet_dims(arch, l);
        for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
            const bool first = k == 0;
            const bool last = k + 2 == dims.size();
            const std::size_t in_aug = first ? dims[k] : dims[k] + 1;
            Rng wrng(derive_seed(seed, "init/" + layer_prefix(l) + "/w" +
                                           std::to_string(k)));
            Matrix w;
            if (last) {
                // zero output layer; z-head bias of 1 makes the initial mean
                // equal the template
                w = Matrix::zeros(in_aug, dims[k + 1]);
                for (std::size_t j = 0; j < r; ++j) w(in_aug - 1, j) = 1.0;
            } else {
                w = init_dense(in_aug, dims[k + 1], arch.hypernet_activation, wrng,
                               /*zero_bias_row=*/true);
            }
            h.weights.push_back(Tensor::leaf(std::move(w)));
        }
        m.hyper.push_back(std::move(h));
    }
    return m;
}

std::vector<std::pair<std::string, Tensor>> CdnModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t l = 0; l < hyper.size(); ++l) {
        for (std::size_t k = 0; k < hyper[l].weights.size(); ++k)
            out.emplace_back(layer_prefix(l) + ".w" + std::to_string(k),
                             hyper[l].weights[k]);
        out.emplace_back(layer_prefix(l) + ".mean_template", hyper[l].mean_template);
    }
    return out;
}

// -- hypernet evaluation -------------------------------------------------------

LayerMixing eval_hypernet(const CdnModel& m, std::size_t layer, const Tensor& h_aug) {
    const std::size_t l = layer - 1;
    const std::size_t r = m.arch.weight_rows(l);
    const std::size_t c = m.arch.weight_cols(l);
    if (h_aug.cols() != r)
        throw DimError("eval_hypernet: state " + h_aug.value().shape_str() +
                       " for layer expecting width " + std::to_string(r));
    const LayerHypernet& hn = m.hyper[l];
    Tensor u = h_aug;
    for (std::size_t k = 0; k < hn.weights.size(); ++k) {
        Tensor in = k == 0 ? u : append_ones_col(u);
        u = matmul(in, hn.weights[k]);
        if (k + 1 < hn.weights.size())
            u = apply_activation(m.arch.hypernet_activation, u);
    }
    LayerMixing mix;
    mix.z = slice_cols(u, 0, r);
    mix.a = add_scalar(softplus(slice_cols(u, r, 2 * r)), kFactorEps);
    mix.b = add_scalar(softplus(slice_cols(u, 2 * r, 2 * r + c)), kFactorEps);
    return mix;
}

MatrixNormalParams mixing_row_params(const LayerMixing& mix, const Tensor& mean_template,
                                     std::size_t row) {
    const std::size_t c = mean_template.cols();
    Tensor z = slice_rows(mix.z, row, row + 1);
    Tensor outer = matmul(transpose(z), Tensor::constant(Matrix::ones(1, c)));
    MatrixNormalParams p;
    p.M = mul(outer, mean_template);
    p.a = slice_rows(mix.a, row, row + 1);
    p.b = slice_rows(mix.b, row, row + 1);
    return p;
}

// -- sampled forward ---------------------------------------------------------

NoiseSource make_layer_noise(std::uint64_t seed) {
    auto rngs = std::make_shared<std::vector<std::unique_ptr<Rng>>>();
    return [seed, rngs](std::size_t layer, std::size_t rows, std::size_t cols) {
        if (rngs->size() < layer) rngs->resize(layer);
        auto& slot = (*rngs)[layer - 1];
        if (!slot)
            slot = std::make_unique<Rng>(
                derive_seed(seed, "noise/layer" + std::to_string(layer)));
        return slot->normal_matrix(rows, cols);
    };
}

namespace {

// Per-example, per-layer KL of the batched mixing distribution against
// MN(0, I, I), using |diag(z) Mhat|_F^2 = sum_i z_i^2 |Mhat_i.|^2.
Tensor layer_kl_batched(const LayerMixing& mix, const Tensor& mean_template) {
    const double r = static_cast<double>(mean_template.rows());
    const double c = static_cast<double>(mean_template.cols());
    Tensor trace = mul(sum(mix.a, Axis::cols), sum(mix.b, Axis::cols));
    Tensor row_sq = sum(mul(mean_template, mean_template), Axis::cols); // r x 1
    Tensor mean_term = matmul(mul(mix.z, mix.z), row_sq);               // batch x 1
    Tensor logdet = add(scale(sum(log(floor_at(mix.a, 1e-8)), Axis::cols), c),
                        scale(sum(log(floor_at(mix.b, 1e-8)), Axis::cols), r));
    return scale(add_scalar(sub(add(trace, mean_term), logdet), -r * c), 0.5);
}

ForwardSample forward_local(const CdnModel& m, const Tensor& x, NoiseSource& noise,
                            const ForwardOptions& opts) {
    const std::size_t batch = x.rows();
    ForwardSample out;
    if (opts.want_trace) out.hidden.push_back(x);
    Tensor h = x;
    Tensor kl;
    for (std::size_t l = 0; l < m.arch.depth(); ++l) {
        const std::size_t c = m.arch.weight_cols(l);
        Tensor H = append_ones_col(h);
        LayerMixing mix = eval_hypernet(m, l + 1, H);
        const Tensor& tmpl = m.hyper[l].mean_template;

        Tensor mean_pre = matmul(mul(H, mix.z), tmpl);
        Tensor s2 = sum(mul(mul(H, H), mix.a), Axis::cols); // batch x 1, >= a_min
        Tensor std_rows = matmul(sqrt_positive(s2),
                                 Tensor::constant(Matrix::ones(1, c)));
        Tensor zeta = Tensor::constant(noise(l + 1, batch, c));
        Tensor pre = add(mean_pre, mul(std_rows, mul(zeta, sqrt_positive(mix.b))));
        h = apply_activation(m.arch.activations[l], pre);

        if (opts.want_kl) {
            Tensor lk = layer_kl_batched(mix, tmpl);
            kl = kl.defined() ? add(kl, lk) : lk;
        }
        if (opts.want_trace) out.hidden.push_back(h);
    }
    out.output = h;
    out.kl = kl;
    return out;
}

ForwardSample forward_explicit(const CdnModel& m, const Tensor& x, NoiseSource& noise,
                               const ForwardOptions& opts) {
    const std::size_t batch = x.rows();
    const std::size_t depth = m.arch.depth();
    std::vector<Tensor> outputs, kls;
    std::vector<std::vector<Tensor>> hidden_rows(depth + 1);
    ForwardSample out;
    if (opts.want_weights) out.weights.resize(batch);

    for (std::size_t ex = 0; ex < batch; ++ex) {
        Tensor h = slice_rows(x, ex, ex + 1);
        if (opts.want_trace) hidden_rows[0].push_back(h);
        Tensor kl;
        for (std::size_t l = 0; l < depth; ++l) {
            const std::size_t r = m.arch.weight_rows(l);
            const std::size_t c = m.arch.weight_cols(l);
            Tensor H = append_ones_col(h);
            LayerMixing mix = eval_hypernet(m, l + 1, H);
            MatrixNormalParams p = mixing_row_params(mix, m.hyper[l].mean_template, 0);
            Tensor W = mvn_sample(p, Tensor::constant(noise(l + 1, r, c)));
            h = apply_activation(m.arch.activations[l], matmul(H, W));
            if (opts.want_kl) {
                Tensor lk = mvn_kl_to_standard(p);
                kl = kl.defined() ? add(kl, lk) : lk;
            }
            if (opts.want_weights) out.weights[ex].push_back(W.value());
            if (opts.want_trace) hidden_rows[l + 1].push_back(h);
        }
        outputs.push_back(h);
        if (opts.want_kl) kls.push_back(kl);
    }
    out.output = concat_rows(outputs);
    if (opts.want_kl) out.kl = concat_rows(kls);
    if (opts.want_trace)
        for (auto& rows : hidden_rows) out.hidden.push_back(concat_rows(rows));
    return out;
}

} // namespace

ForwardSample forward_sampled(const CdnModel& m, const Tensor& x, NoiseSource& noise,
                              const ForwardOptions& opts) {
    m.arch.validate();
    if (x.cols() != m.arch.layers.front())
        throw DimError("forward: input " + x.value().shape_str() + " for d0 = " +
                       std::to_string(m.arch.layers.front()));
    return opts.mode == SamplingMode::explicit_weights
               ? forward_explicit(m, x, noise, opts)
               : forward_local(m, x, noise, opts);
}

// -- prediction ----------------------------------------------------------------

std::pair<Tensor, Tensor> split_regression_output(const Architecture& arch,
                                                  const Tensor& output) {
    if (arch.task != Task::regression)
        throw ContractError("split_regression_output on a classification model");
    const std::size_t dim = arch.output_dim;
    return {slice_cols(output, 0, dim), slice_cols(output, dim, 2 * dim)};
}

PredictiveAccumulator::PredictiveAccumulator(const Architecture& arch, std::size_t rows)
    : arch_(arch) {
    if (arch.task == Task::classification) {
        probs_ = Matrix::zeros(rows, arch.output_dim);
    } else {
        mean_sum_ = Matrix::zeros(rows, arch.output_dim);
        second_moment_ = Matrix::zeros(rows, arch.output_dim);
    }
}

void PredictiveAccumulator::add(const Tensor& output, std::size_t row_offset) {
    if (arch_.task == Task::classification) {
        const Matrix lsm = log_softmax(output).value();
        for (std::size_t r = 0; r < lsm.rows(); ++r)
            for (std::size_t c = 0; c < lsm.cols(); ++c)
                probs_(row_offset + r, c) += std::exp(lsm(r, c));
    } else {
        auto [mu_t, lv_t] = split_regression_output(arch_, output);
        const Matrix& mu = mu_t.value();
        const Matrix& lv = lv_t.value();
        for (std::size_t r = 0; r < mu.rows(); ++r)
            for (std::size_t c = 0; c < mu.cols(); ++c) {
                const double mu_v = mu(r, c);
                mean_sum_(row_offset + r, c) += mu_v;
                second_moment_(row_offset + r, c) += std::exp(lv(r, c)) + mu_v * mu_v;
            }
    }
}

Predictive PredictiveAccumulator::finalize(std::size_t samples) const {
    Predictive p;
    const double inv = 1.0 / static_cast<double>(samples);
    if (arch_.task == Task::classification) {
        p.probs = probs_;
        for (std::size_t i = 0; i < p.probs.size(); ++i) p.probs[i] *= inv;
    } else {
        p.mean = Matrix(mean_sum_.rows(), mean_sum_.cols());
        p.variance = Matrix(mean_sum_.rows(), mean_sum_.cols());
        for (std::size_t i = 0; i < p.mean.size(); ++i) {
            p.mean[i] = mean_sum_[i] * inv;
            p.variance[i] = second_moment_[i] * inv - p.mean[i] * p.mean[i];
            if (p.variance[i] < 0.0) p.variance[i] = 0.0; // rounding guard
        }
    }
    return p;
}

namespace {

constexpr std::size_t kPredictShard = 1024;

Matrix shard_rows(const Matrix& x, std::size_t r0, std::size_t r1) {
    Matrix out(r1 - r0, x.cols());
    for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(r - r0, c) = x(r, c);
    return out;
}

} // namespace

Predictive predict_ml(const CdnModel& m, const Matrix& x, std::size_t samples,
                      std::uint64_t seed, SamplingMode mode) {
    if (samples == 0) throw ContractError("predict: need at least one sample");
    PredictiveAccumulator acc(m.arch, x.rows());
    ForwardOptions opts;
    opts.mode = mode;
    opts.want_kl = false;
    for (std::size_t r0 = 0, shard = 0; r0 < x.rows(); r0 += kPredictShard, ++shard) {
        const std::size_t r1 = std::min(x.rows(), r0 + kPredictShard);
        Tensor xs = Tensor::constant(shard_rows(x, r0, r1));
        for (std::size_t s = 0; s < samples; ++s) {
            NoiseSource noise = make_layer_noise(
                derive_seed(seed, "predict/shard" + std::to_string(shard) + "/sample" +
                                      std::to_string(s)));
            ForwardSample fs = forward_sampled(m, xs, noise, opts);
            acc.add(fs.output, r0);
        }
    }
    return acc.finalize(samples);
}

// -- variational CDN -----------------------------------------------------------

MatrixNormalParams MatrixPosterior::params() const {
    MatrixNormalParams p;
    p.M = mean;
    p.a = add_scalar(softplus(raw_a), kFactorEps);
    p.b = add_scalar(softplus(raw_b), kFactorEps);
    return p;
}

namespace {

// inverse softplus: raw such that softplus(raw) = v
double softplus_inverse(double v) { return std::log(std::expm1(v)); }

MatrixPosterior make_posterior(const Matrix& mean_init, double factor_init) {
    MatrixPosterior p;
    p.mean = Tensor::leaf(mean_init);
    const double raw = softplus_inverse(factor_init);
    p.raw_a = Tensor::leaf(Matrix(1, mean_init.rows(), raw));
    p.raw_b = Tensor::leaf(Matrix(1, mean_init.cols(), raw));
    return p;
}

} // namespace

VariationalCdn init_vb_cdn(const Architecture& arch, std::uint64_t seed,
                           double init_factor_scale) {
    CdnModel point = init_cdn(arch, seed);
    VariationalCdn v;
    v.arch = arch;
    for (std::size_t l = 0; l < arch.depth(); ++l) {
        std::vector<MatrixPosterior> ws;
        for (const Tensor& w : point.hyper[l].weights)
            ws.push_back(make_posterior(w.value(), init_factor_scale));
        v.hyper_weights.push_back(std::move(ws));
        v.mean_templates.push_back(
            make_posterior(point.hyper[l].mean_template.value(), init_factor_scale));
    }
    return v;
}

std::vector<std::pair<std::string, Tensor>> VariationalCdn::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto push = [&out](const std::string& base, const MatrixPosterior& p) {
        out.emplace_back(base + ".q_mean", p.mean);
        out.emplace_back(base + ".q_raw_a", p.raw_a);
        out.emplace_back(base + ".q_raw_b", p.raw_b);
    };
    for (std::size_t l = 0; l < hyper_weights.size(); ++l) {
        for (std::size_t k = 0; k < hyper_weights[l].size(); ++k)
            push(layer_prefix(l) + ".w" + std::to_string(k), hyper_weights[l][k]);
        push(layer_prefix(l) + ".mean_template", mean_templates[l]);
    }
    return out;
}

CdnModel VariationalCdn::sample_psi(Rng& rng) const {
    CdnModel m;
    m.arch = arch;
    for (std::size_t l = 0; l < hyper_weights.size(); ++l) {
        LayerHypernet h;
        for (const MatrixPosterior& p : hyper_weights[l]) {
            Tensor e = Tensor::constant(
                rng.normal_matrix(p.mean.rows(), p.mean.cols()));
            h.weights.push_back(mvn_sample(p.params(), e));
        }
        const MatrixPosterior& t = mean_templates[l];
        Tensor e = Tensor::constant(rng.normal_matrix(t.mean.rows(), t.mean.cols()));
        h.mean_template = mvn_sample(t.params(), e);
        m.hyper.push_back(std::move(h));
    }
    return m;
}

CdnModel VariationalCdn::mean_model() const {
    CdnModel m;
    m.arch = arch;
    for (std::size_t l = 0; l < hyper_weights.size(); ++l) {
        LayerHypernet h;
        for (const MatrixPosterior& p : hyper_weights[l]) h.weights.push_back(p.mean);
        h.mean_template = mean_templates[l].mean;
        m.hyper.push_back(std::move(h));
    }
    return m;
}

Tensor VariationalCdn::kl_to_prior() const {
    Tensor total;
    auto add_kl = [&total](const MatrixPosterior& p) {
        Tensor kl = mvn_kl_to_standard(p.params());
        total = total.defined() ? add(total, kl) : kl;
    };
    for (const auto& layer : hyper_weights)
        for (const MatrixPosterior& p : layer) add_kl(p);
    for (const MatrixPosterior& p : mean_templates) add_kl(p);
    return total;
}

double VariationalCdn::average_posterior_variance() const {
    double var_sum = 0.0;
    std::size_t count = 0;
    auto visit = [&](const MatrixPosterior& p) {
        MatrixNormalParams mp = p.params();
        const Matrix& a = mp.a.value();
        const Matrix& b = mp.b.value();
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j) var_sum += a[i] * b[j];
        count += a.size() * b.size();
    };
    for (const auto& layer : hyper_weights)
        for (const MatrixPosterior& p : layer) visit(p);
    for (const MatrixPosterior& p : mean_templates) visit(p);
    return var_sum / static_cast<double>(count);
}

Predictive predict_vb(const VariationalCdn& m, const Matrix& x, std::size_t samples,
                      std::uint64_t seed, SamplingMode mode) {
    if (samples == 0) throw ContractError("predict: need at least one sample");
    PredictiveAccumulator acc(m.arch, x.rows());
    ForwardOptions opts;
    opts.mode = mode;
    opts.want_kl = false;
    for (std::size_t r0 = 0, shard = 0; r0 < x.rows(); r0 += kPredictShard, ++shard) {
        const std::size_t r1 = std::min(x.rows(), r0 + kPredictShard);
        Tensor xs = Tensor::constant(shard_rows(x, r0, r1));
        for (std::size_t s = 0; s < samples; ++s) {
            // joint draw: psi ~ q, then theta ~ p(theta; g(x; psi)) inside
            Rng psi_rng(derive_seed(seed, "predict/psi/sample" + std::to_string(s)));
            CdnModel sampled = m.sample_psi(psi_rng);
            NoiseSource noise = make_layer_noise(
                derive_seed(seed, "predict/shard" + std::to_string(shard) + "/sample" +
                                      std::to_string(s)));
            ForwardSample fs = forward_sampled(sampled, xs, noise, opts);
            acc.add(fs.output, r0);
        }
    }
    return acc.finalize(samples);
}

// -- mixing-variance diagnostics -------------------------------------------------

namespace {

// mean over samples of (sum_l sum_ij a_i b_j) / (sum_l r_l c_l), per row
std::vector<double> mixing_variance_impl(const CdnModel& model, const Matrix& x,
                                         std::size_t samples, std::uint64_t seed,
                                         const VariationalCdn* vb) {
    std::vector<double> acc(x.rows(), 0.0);
    double entries = 0.0;
    for (std::size_t l = 0; l < model.arch.depth(); ++l)
        entries += static_cast<double>(model.arch.weight_rows(l) *
                                       model.arch.weight_cols(l));
    Tensor xs = Tensor::constant(x);
    for (std::size_t s = 0; s < samples; ++s) {
        CdnModel sampled = model;
        if (vb) {
            Rng psi_rng(derive_seed(seed, "mixvar/psi/sample" + std::to_string(s)));
            sampled = vb->sample_psi(psi_rng);
        }
        NoiseSource noise =
            make_layer_noise(derive_seed(seed, "mixvar/sample" + std::to_string(s)));
        // replay the local forward to collect per-layer factor sums
        Tensor h = xs;
        std::vector<Tensor> per_layer_sums;
        for (std::size_t l = 0; l < sampled.arch.depth(); ++l) {
            const std::size_t c = sampled.arch.weight_cols(l);
            Tensor H = append_ones_col(h);
            LayerMixing mix = eval_hypernet(sampled, l + 1, H);
            per_layer_sums.push_back(
                mul(sum(mix.a, Axis::cols), sum(mix.b, Axis::cols)));
            Tensor mean_pre = matmul(mul(H, mix.z), sampled.hyper[l].mean_template);
            Tensor s2 = sum(mul(mul(H, H), mix.a), Axis::cols);
            Tensor std_rows =
                matmul(sqrt_positive(s2), Tensor::constant(Matrix::ones(1, c)));
            Tensor zeta = Tensor::constant(noise(l + 1, x.rows(), c));
            Tensor pre = add(mean_pre, mul(std_rows, mul(zeta, sqrt_positive(mix.b))));
            h = apply_activation(sampled.arch.activations[l], pre);
        }
        for (const Tensor& t : per_layer_sums) {
            const Matrix& v = t.value();
            for (std::size_t r = 0; r < v.rows(); ++r) acc[r] += v(r, 0);
        }
    }
    for (double& v : acc) v /= entries * static_cast<double>(samples);
    return acc;
}

} // namespace

std::vector<double> average_mixing_variance(const CdnModel& m, const Matrix& x,
                                            std::size_t samples, std::uint64_t seed) {
    return mixing_variance_impl(m, x, samples, seed, nullptr);
}

std::vector<double> average_mixing_variance(const VariationalCdn& m, const Matrix& x,
                                            std::size_t samples, std::uint64_t seed) {
    CdnModel mean = m.mean_model();
    return mixing_variance_impl(mean, x, samples, seed, &m);
}

} // namespace cdn
