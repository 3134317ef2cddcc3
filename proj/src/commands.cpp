#include "cdn/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace cdn {

namespace fs = std::filesystem;
using nlohmann::json;

// -- AnyModel ---------------------------------------------------------------------

AnyModel AnyModel::construct(const ModelConfig& cfg, std::uint64_t init_seed) {
    AnyModel m;
    m.kind_ = cfg.kind;
    m.arch_ = cfg.to_architecture();
    if (cfg.kind == "ml-cdn") {
        m.ml_ = init_cdn(m.arch_, init_seed);
    } else if (cfg.kind == "vb-cdn") {
        m.vb_ = init_vb_cdn(m.arch_, init_seed);
    } else if (cfg.kind == "mcd") {
        m.mcd_ = DropoutMlp{init_mlp(m.arch_, init_seed), cfg.dropout_rate};
        m.mcd_->validate();
    } else if (cfg.kind == "ensemble") {
        Ensemble e;
        for (std::size_t i = 0; i < cfg.members; ++i)
            e.members.push_back(init_mlp(
                m.arch_, derive_seed(init_seed, "ensemble/member" + std::to_string(i))));
        m.ens_ = std::move(e);
    } else if (cfg.kind == "vmg") {
        m.vmg_ = init_vmg(m.arch_, init_seed);
    } else {
        throw ConfigError("unknown model kind '" + cfg.kind + "'");
    }
    return m;
}

std::vector<std::pair<std::string, Tensor>> AnyModel::named_parameters() const {
    if (ml_) return ml_->named_parameters();
    if (vb_) return vb_->named_parameters();
    if (mcd_) return mcd_->net.named_parameters();
    if (vmg_) return vmg_->named_parameters();
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < ens_->members.size(); ++i)
        for (auto& [name, t] : ens_->members[i].named_parameters())
            out.emplace_back("member" + std::to_string(i) + "." + name, t);
    return out;
}

TrainResult AnyModel::fit(const Dataset& data, const TrainConfig& cfg) {
    if (ml_) return train_ml(*ml_, data, cfg);
    if (vb_) return train_vb(*vb_, data, cfg);
    if (mcd_) return train_mlp(mcd_->net, data, cfg, mcd_->rate);
    if (vmg_) return train_vmg(*vmg_, data, cfg);
    // ensemble: retrain members independently with derived seeds
    TrainResult last;
    for (std::size_t i = 0; i < ens_->members.size(); ++i) {
        TrainConfig mcfg = cfg;
        mcfg.seed = derive_seed(cfg.seed, "ensemble/member" + std::to_string(i));
        last = train_mlp(ens_->members[i], data, mcfg);
    }
    return last;
}

Predictive AnyModel::predict(const Matrix& x, std::size_t samples,
                             std::uint64_t seed) const {
    if (ml_) return predict_ml(*ml_, x, samples, seed);
    if (vb_) return predict_vb(*vb_, x, samples, seed);
    if (mcd_) return mcd_predict(*mcd_, x, samples, seed);
    if (vmg_) return vmg_predict(*vmg_, x, samples, seed);
    return ensemble_predict(*ens_, x);
}

AttackLossFn AnyModel::attack_loss_fn() const {
    if (ml_) return attack_loss(*ml_);
    if (vb_) return attack_loss(*vb_);
    if (mcd_) return attack_loss(*mcd_);
    if (vmg_) return attack_loss(*vmg_);
    return attack_loss(*ens_);
}

std::vector<double> AnyModel::mixing_variance(const Matrix& x, std::size_t samples,
                                              std::uint64_t seed) const {
    if (ml_) return average_mixing_variance(*ml_, x, samples, seed);
    if (vb_) return average_mixing_variance(*vb_, x, samples, seed);
    return std::vector<double>(x.rows(), 0.0);
}

double AnyModel::posterior_variance() const {
    if (vb_) return vb_->average_posterior_variance();
    if (vmg_) return vmg_->average_posterior_variance();
    return 0.0;
}

void AnyModel::save(const std::string& path, std::uint64_t global_seed,
                    const std::string& objective) const {
    CheckpointMeta meta;
    meta.kind = kind_;
    meta.objective = objective;
    meta.seed = global_seed;
    meta.arch = arch_;
    if (mcd_) meta.extra["dropout_rate"] = mcd_->rate;
    if (ens_) meta.extra["members"] = ens_->members.size();
    save_checkpoint(path, meta, named_parameters());
}

AnyModel AnyModel::load(const std::string& path) {
    LoadedCheckpoint ckpt = load_checkpoint(path);
    ModelConfig mc;
    mc.kind = ckpt.meta.kind;
    mc.layers = ckpt.meta.arch.layers;
    mc.task = ckpt.meta.arch.task;
    mc.output_dim = ckpt.meta.arch.output_dim;
    mc.hypernet_hidden = ckpt.meta.arch.hypernet_hidden;
    mc.hypernet_activation = ckpt.meta.arch.hypernet_activation;
    if (ckpt.meta.extra.contains("dropout_rate"))
        mc.dropout_rate = ckpt.meta.extra.at("dropout_rate").get<double>();
    if (ckpt.meta.extra.contains("members"))
        mc.members = ckpt.meta.extra.at("members").get<std::size_t>();
    AnyModel m = construct(mc, 0);
    m.arch_.activations = ckpt.meta.arch.activations;
    restore_parameters(ckpt, m.named_parameters());
    return m;
}

// -- data loading -----------------------------------------------------------------

namespace {

ToySpec toy_spec_from(const ExperimentConfig& cfg) {
    ToySpec spec;
    spec.variant = cfg.data.kind == "toy-heteroscedastic" ? ToyVariant::heteroscedastic
                                                          : ToyVariant::homoscedastic;
    spec.n = cfg.data.toy_points;
    spec.noise_scale = cfg.data.toy_noise_scale;
    spec.seed = derive_seed(cfg.seed, "data");
    return spec;
}

} // namespace

Dataset load_train_data(const ExperimentConfig& cfg) {
    if (cfg.data.kind == "idx")
        return load_idx(cfg.data.train_images, cfg.data.train_labels);
    return gen_toy(toy_spec_from(cfg));
}

Dataset load_test_data(const ExperimentConfig& cfg) {
    if (cfg.data.kind != "idx" || cfg.data.test_images.empty())
        throw DataError("no test set configured (data.test_images/test_labels)");
    return load_idx(cfg.data.test_images, cfg.data.test_labels);
}

// -- output helpers -----------------------------------------------------------------

namespace {

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f << content;
}

std::string fmt_row(std::initializer_list<double> vals) {
    std::string out;
    char buf[64];
    bool first = true;
    for (double v : vals) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        if (!first) out += ",";
        out += buf;
        first = false;
    }
    out += "\n";
    return out;
}

TrainConfig derived_train_config(const ExperimentConfig& cfg) {
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "train");
    tc.log_hook = [](const TraceRow& r) {
        std::fprintf(stderr, "iter %zu  nll %.4f  kl %.4f  total %.4f\n", r.iteration,
                     r.nll_term, r.kl_term, r.total);
    };
    return tc;
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.output_dir);
    return (fs::path(cfg.output_dir) / name).string();
}

void check_matches(const AnyModel& model, const ExperimentConfig& cfg) {
    if (model.kind() != cfg.model.kind)
        throw ShapeError("checkpoint kind '" + model.kind() +
                         "' does not match config model.kind '" + cfg.model.kind + "'");
    const Architecture want = cfg.model.to_architecture();
    if (model.arch().layers != want.layers)
        throw ShapeError("checkpoint architecture does not match the config");
}

} // namespace

// -- commands -------------------------------------------------------------------------

void cmd_toy(const ExperimentConfig& cfg) {
    if (cfg.data.kind == "idx")
        throw ConfigError("toy command requires data.kind toy-homoscedastic or "
                          "toy-heteroscedastic");
    Dataset data = load_train_data(cfg);
    AnyModel model = AnyModel::construct(cfg.model, derive_seed(cfg.seed, "init"));
    TrainResult tr = model.fit(data, derived_train_config(cfg));

    constexpr std::size_t kGrid = 1000;
    Matrix grid(kGrid, 1);
    for (std::size_t i = 0; i < kGrid; ++i)
        grid(i, 0) = -6.0 + 12.0 * static_cast<double>(i) / (kGrid - 1);

    const std::uint64_t eval_seed = derive_seed(cfg.seed, "eval");
    Predictive pred = model.predict(grid, cfg.eval.samples, eval_seed);
    std::vector<double> mixing =
        model.mixing_variance(grid, cfg.eval.samples, derive_seed(cfg.seed, "eval/mix"));
    const double post_var = model.posterior_variance();

    std::string csv = "x,mean,std,mixing_var,posterior_var\n";
    for (std::size_t i = 0; i < kGrid; ++i)
        csv += fmt_row({grid(i, 0), pred.mean(i, 0), std::sqrt(pred.variance(i, 0)),
                        mixing[i], post_var});
    write_text(out_path(cfg, "predictive.csv"), csv);
    write_loss_csv(out_path(cfg, "loss.csv"), tr.trace);
    model.save(out_path(cfg, "model.ckpt"), cfg.seed,
               cfg.train.objective == Objective::vb ? "vb" : "ml");
}

void cmd_train(const ExperimentConfig& cfg) {
    Dataset data = load_train_data(cfg);
    Dataset train_set = data;
    json metrics = json::object();
    std::optional<Dataset> val_set;
    if (cfg.data.validation_fraction > 0.0) {
        auto [tr, val] =
            split(data, cfg.data.validation_fraction, derive_seed(cfg.seed, "split"));
        train_set = std::move(tr);
        val_set = std::move(val);
    }

    AnyModel model = AnyModel::construct(cfg.model, derive_seed(cfg.seed, "init"));
    TrainResult tr = model.fit(train_set, derived_train_config(cfg));
    write_loss_csv(out_path(cfg, "loss.csv"), tr.trace);
    model.save(out_path(cfg, "model.ckpt"), cfg.seed,
               cfg.train.objective == Objective::vb ? "vb" : "ml");

    const std::uint64_t eval_seed = derive_seed(cfg.seed, "eval");
    if (val_set && val_set->classification) {
        Predictive p = model.predict(val_set->inputs, cfg.eval.samples, eval_seed);
        metrics["validation_accuracy"] = accuracy(p.probs, val_set->labels);
    }
    if (cfg.data.kind == "idx" && !cfg.data.test_images.empty()) {
        Dataset test = load_test_data(cfg);
        Predictive p = model.predict(test.inputs, cfg.eval.samples, eval_seed);
        metrics["test_accuracy"] = accuracy(p.probs, test.labels);
    }
    if (!metrics.empty()) write_text(out_path(cfg, "metrics.json"), metrics.dump(2) + "\n");
}

void cmd_ood(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
    AnyModel model = AnyModel::load(checkpoint_path);
    check_matches(model, cfg);
    if (cfg.eval.ood_images.empty() || cfg.eval.ood_labels.empty())
        throw ConfigError("ood command requires eval.ood_images and eval.ood_labels");
    Dataset in_set = load_test_data(cfg);
    Dataset out_set = load_idx(cfg.eval.ood_images, cfg.eval.ood_labels);

    const std::uint64_t eval_seed = derive_seed(cfg.seed, "eval");
    Predictive p_in = model.predict(in_set.inputs, cfg.eval.samples, eval_seed);
    Predictive p_out = model.predict(out_set.inputs, cfg.eval.samples,
                                     derive_seed(cfg.seed, "eval/ood"));

    const std::vector<double> ent_in = predictive_entropy(p_in.probs);
    const std::vector<double> ent_out = predictive_entropy(p_out.probs);
    auto score = [&cfg](const Matrix& probs, const std::vector<double>& ent) {
        if (cfg.eval.ood_score == "negative_entropy") {
            std::vector<double> s(ent.size());
            for (std::size_t i = 0; i < ent.size(); ++i) s[i] = -ent[i];
            return s;
        }
        return max_prob_scores(probs);
    };

    OodReport report;
    report.mmc_in = mmc(p_in.probs);
    report.mmc_out = mmc(p_out.probs);
    report.auroc = auroc(score(p_in.probs, ent_in), score(p_out.probs, ent_out));

    json j;
    j["mmc_in"] = report.mmc_in;
    j["mmc_out"] = report.mmc_out;
    j["auroc"] = report.auroc;
    write_text(out_path(cfg, "report.json"), j.dump(2) + "\n");

    auto cdf_csv = [](const std::vector<double>& ent) {
        EmpiricalCdf cdf = entropy_cdf(ent);
        std::string csv = "entropy,fraction\n";
        for (std::size_t i = 0; i < cdf.values.size(); ++i)
            csv += fmt_row({cdf.values[i], cdf.fractions[i]});
        return csv;
    };
    write_text(out_path(cfg, "entropy_in_cdf.csv"), cdf_csv(ent_in));
    write_text(out_path(cfg, "entropy_out_cdf.csv"), cdf_csv(ent_out));

    std::fprintf(stderr, "ood: accuracy_in %.4f mmc_in %.4f mmc_out %.4f auroc %.4f\n",
                 accuracy(p_in.probs, in_set.labels), report.mmc_in, report.mmc_out,
                 report.auroc);
}

void cmd_attack(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
    AnyModel model = AnyModel::load(checkpoint_path);
    check_matches(model, cfg);
    if (model.arch().task != Task::classification)
        throw ConfigError("attack command requires a classification model");
    Dataset test = load_test_data(cfg);

    // deterministic attack subset
    Rng rng(derive_seed(cfg.seed, "attack/subset"));
    std::vector<std::size_t> perm = rng.permutation(test.size());
    const std::size_t n = std::min(cfg.eval.attack_count, test.size());
    perm.resize(n);
    Dataset sub = subset(test, perm);

    const std::uint64_t eval_seed = derive_seed(cfg.seed, "eval");
    PredictFn predict = [&](const Matrix& x) {
        return model.predict(x, cfg.eval.samples, eval_seed).probs;
    };
    std::vector<SweepPoint> curve =
        robustness_sweep(model.attack_loss_fn(), predict, sub.inputs, sub.labels,
                         cfg.eval.epsilon_grid, cfg.eval.attack_passes,
                         derive_seed(cfg.seed, "attack"));

    std::string csv = "epsilon,accuracy,mean_entropy\n";
    for (const SweepPoint& p : curve)
        csv += fmt_row({p.epsilon, p.accuracy, p.mean_entropy});
    write_text(out_path(cfg, "curve.csv"), csv);

    for (const SweepPoint& p : curve)
        std::fprintf(stderr, "eps %.2f  acc %.4f  entropy %.4f\n", p.epsilon, p.accuracy,
                     p.mean_entropy);
}

} // namespace cdn
