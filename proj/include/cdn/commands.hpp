#pragma once

#include "cdn/attack.hpp"
#include "cdn/checkpoint.hpp"
#include "cdn/config.hpp"
#include "cdn/metrics.hpp"

#include <optional>

namespace cdn {

/// Uniform handle over the five model kinds: construction, training,
/// prediction, attack loss and checkpointing.
class AnyModel {
public:
    static AnyModel construct(const ModelConfig& cfg, std::uint64_t init_seed);
    static AnyModel load(const std::string& checkpoint_path);

    const std::string& kind() const { return kind_; }
    const Architecture& arch() const { return arch_; }

    TrainResult fit(const Dataset& data, const TrainConfig& cfg);
    Predictive predict(const Matrix& x, std::size_t samples, std::uint64_t seed) const;
    AttackLossFn attack_loss_fn() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    void save(const std::string& path, std::uint64_t global_seed,
              const std::string& objective) const;

    /// Mixing / posterior variance diagnostics; zero where a kind has no
    /// such notion.
    std::vector<double> mixing_variance(const Matrix& x, std::size_t samples,
                                        std::uint64_t seed) const;
    double posterior_variance() const;

    const VariationalCdn* vb() const { return vb_ ? &*vb_ : nullptr; }
    const CdnModel* ml() const { return ml_ ? &*ml_ : nullptr; }

private:
    std::string kind_;
    Architecture arch_;
    std::optional<CdnModel> ml_;
    std::optional<VariationalCdn> vb_;
    std::optional<DropoutMlp> mcd_;
    std::optional<Ensemble> ens_;
    std::optional<VmgMlp> vmg_;
};

/// Loads / generates the training dataset named by the config.
Dataset load_train_data(const ExperimentConfig& cfg);
Dataset load_test_data(const ExperimentConfig& cfg);

/// Trains on toy data and writes predictive.csv with one row per grid point
/// (x, mean, std, mixing_var, posterior_var) over 1000 evenly spaced points
/// in [-6, 6], plus loss.csv and model.ckpt.
void cmd_toy(const ExperimentConfig& cfg);

/// Trains the configured model; writes model.ckpt and loss.csv (and
/// metrics.json with validation/test accuracy when sets are configured).
void cmd_train(const ExperimentConfig& cfg);

/// Entropy/MMC/AUROC analysis of a trained checkpoint against an
/// out-of-distribution set; writes report.json and two entropy CDF CSVs.
void cmd_ood(const ExperimentConfig& cfg, const std::string& checkpoint_path);

/// FGSM robustness sweep over the epsilon grid on a deterministic test
/// subset; writes curve.csv (epsilon, accuracy, mean_entropy).
void cmd_attack(const ExperimentConfig& cfg, const std::string& checkpoint_path);

} // namespace cdn
