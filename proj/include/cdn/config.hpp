#pragma once

#include "cdn/model.hpp"
#include "cdn/train.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace cdn {

struct ModelConfig {
    std::string kind; // ml-cdn | vb-cdn | mcd | ensemble | vmg
    std::vector<std::size_t> layers;
    Task task = Task::classification;
    std::size_t output_dim = 0;
    std::vector<std::size_t> hypernet_hidden{50};
    // defaults by kind when absent: relu for ml-cdn, tanh for vb-cdn
    std::optional<Activation> hypernet_activation;
    double dropout_rate = 0.5; // mcd
    std::size_t members = 5;   // ensemble

    Architecture to_architecture() const;
    bool is_cdn() const { return kind == "ml-cdn" || kind == "vb-cdn"; }
};

struct DataConfig {
    std::string kind; // toy-homoscedastic | toy-heteroscedastic | idx
    std::string train_images, train_labels;
    std::string test_images, test_labels;
    double validation_fraction = 0.0; // 0 disables the split
    double toy_noise_scale = 1.0;
    std::size_t toy_points = 0; // 0 = variant default
};

struct EvalConfig {
    std::size_t samples = 100; // predictive Monte-Carlo draws
    std::vector<double> epsilon_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                                     0.6, 0.7, 0.8, 0.9, 1.0};
    std::size_t attack_passes = 1;
    std::size_t attack_count = 1000;
    std::string ood_images, ood_labels;
    std::string ood_score = "max_prob"; // or negative_entropy
};

/// Whole-experiment configuration. The global seed fans out to component
/// seeds through derive_seed(seed, tag) with the tags "data", "init",
/// "train" and "eval", so each stage is independently reproducible.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    EvalConfig eval;

    void validate() const;
};

/// Strict parse: unknown keys anywhere are rejected, every reported problem
/// names the offending field. Referenced data files must exist.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

} // namespace cdn
