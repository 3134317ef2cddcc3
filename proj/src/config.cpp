#include "cdn/config.hpp"

#include "cdn/errors.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace cdn {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where,
                    const std::set<std::string>& known) {
    for (const auto& [key, value] : j.items())
        if (!known.count(key))
            throw ConfigError("unknown key '" + where + key + "'");
}

template <typename T>
T get_or(const json& j, const std::string& where, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("field '" + where + key + "' has the wrong type");
    }
}

template <typename T>
T get_required(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) throw ConfigError("missing field '" + where + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("field '" + where + key + "' has the wrong type");
    }
}

void require_file(const std::string& path, const std::string& field) {
    if (!std::filesystem::exists(path))
        throw ConfigError("field '" + field + "' references a missing file: " + path);
}

ModelConfig parse_model(const json& j) {
    reject_unknown(j, "model.",
                   {"kind", "layers", "task", "output_dim", "hypernet_hidden",
                    "hypernet_activation", "dropout_rate", "members"});
    ModelConfig m;
    m.kind = get_required<std::string>(j, "model.", "kind");
    static const std::set<std::string> kinds{"ml-cdn", "vb-cdn", "mcd", "ensemble",
                                             "vmg"};
    if (!kinds.count(m.kind))
        throw ConfigError("field 'model.kind' must be one of ml-cdn, vb-cdn, mcd, "
                          "ensemble, vmg; got '" + m.kind + "'");
    m.layers = get_required<std::vector<std::size_t>>(j, "model.", "layers");
    const std::string task = get_or<std::string>(j, "model.", "task", "classification");
    if (task == "classification")
        m.task = Task::classification;
    else if (task == "regression")
        m.task = Task::regression;
    else
        throw ConfigError("field 'model.task' must be classification or regression");
    m.output_dim = get_or<std::size_t>(j, "model.", "output_dim",
                                       m.task == Task::classification
                                           ? m.layers.back()
                                           : m.layers.back() / 2);
    m.hypernet_hidden = get_or<std::vector<std::size_t>>(j, "model.", "hypernet_hidden",
                                                         m.hypernet_hidden);
    if (j.contains("hypernet_activation")) {
        const std::string a = j.at("hypernet_activation").get<std::string>();
        if (a == "relu")
            m.hypernet_activation = Activation::relu;
        else if (a == "tanh")
            m.hypernet_activation = Activation::tanh;
        else
            throw ConfigError("field 'model.hypernet_activation' must be relu or tanh");
    }
    m.dropout_rate = get_or<double>(j, "model.", "dropout_rate", m.dropout_rate);
    if (!(m.dropout_rate >= 0.0 && m.dropout_rate < 1.0))
        throw ConfigError("field 'model.dropout_rate' must lie in [0, 1)");
    m.members = get_or<std::size_t>(j, "model.", "members", m.members);
    if (m.kind == "ensemble" && m.members < 2)
        throw ConfigError("field 'model.members' must be >= 2");
    return m;
}

TrainConfig parse_train(const json& j, const ModelConfig& model) {
    reject_unknown(j, "train.",
                   {"batch_size", "samples", "lambda", "learning_rate", "iterations",
                    "log_every", "clip_norm", "sampling"});
    TrainConfig t;
    t.batch_size = get_or<std::size_t>(j, "train.", "batch_size", t.batch_size);
    t.samples = get_or<std::size_t>(j, "train.", "samples", t.samples);
    t.lambda = get_or<double>(j, "train.", "lambda", t.lambda);
    t.learning_rate = get_or<double>(j, "train.", "learning_rate", t.learning_rate);
    t.iterations = get_or<std::size_t>(j, "train.", "iterations", t.iterations);
    t.log_every = get_or<std::size_t>(j, "train.", "log_every", t.log_every);
    t.clip_norm = get_or<double>(j, "train.", "clip_norm", t.clip_norm);
    const std::string sampling = get_or<std::string>(j, "train.", "sampling", "local");
    if (sampling == "local")
        t.mode = SamplingMode::local_reparam;
    else if (sampling == "explicit")
        t.mode = SamplingMode::explicit_weights;
    else
        throw ConfigError("field 'train.sampling' must be local or explicit");
    t.objective = model.kind == "vb-cdn" ? Objective::vb : Objective::ml;
    try {
        t.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()));
    }
    return t;
}

DataConfig parse_data(const json& j) {
    reject_unknown(j, "data.",
                   {"kind", "train_images", "train_labels", "test_images",
                    "test_labels", "validation_fraction", "toy_noise_scale",
                    "toy_points"});
    DataConfig d;
    d.kind = get_required<std::string>(j, "data.", "kind");
    static const std::set<std::string> kinds{"toy-homoscedastic", "toy-heteroscedastic",
                                             "idx"};
    if (!kinds.count(d.kind))
        throw ConfigError("field 'data.kind' must be one of toy-homoscedastic, "
                          "toy-heteroscedastic, idx; got '" + d.kind + "'");
    d.train_images = get_or<std::string>(j, "data.", "train_images", "");
    d.train_labels = get_or<std::string>(j, "data.", "train_labels", "");
    d.test_images = get_or<std::string>(j, "data.", "test_images", "");
    d.test_labels = get_or<std::string>(j, "data.", "test_labels", "");
    d.validation_fraction =
        get_or<double>(j, "data.", "validation_fraction", d.validation_fraction);
    if (d.validation_fraction < 0.0 || d.validation_fraction >= 1.0)
        throw ConfigError("field 'data.validation_fraction' must lie in [0, 1)");
    d.toy_noise_scale = get_or<double>(j, "data.", "toy_noise_scale", 1.0);
    if (d.toy_noise_scale < 0.0)
        throw ConfigError("field 'data.toy_noise_scale' must be >= 0");
    d.toy_points = get_or<std::size_t>(j, "data.", "toy_points", 0);
    if (d.kind == "idx") {
        if (d.train_images.empty() || d.train_labels.empty())
            throw ConfigError("data.kind 'idx' requires 'data.train_images' and "
                              "'data.train_labels'");
        require_file(d.train_images, "data.train_images");
        require_file(d.train_labels, "data.train_labels");
        if (!d.test_images.empty()) require_file(d.test_images, "data.test_images");
        if (!d.test_labels.empty()) require_file(d.test_labels, "data.test_labels");
    }
    return d;
}

EvalConfig parse_eval(const json& j) {
    reject_unknown(j, "eval.",
                   {"samples", "epsilon_grid", "attack_passes", "attack_count",
                    "ood_images", "ood_labels", "ood_score"});
    EvalConfig e;
    e.samples = get_or<std::size_t>(j, "eval.", "samples", e.samples);
    if (e.samples < 1) throw ConfigError("field 'eval.samples' must be >= 1");
    e.epsilon_grid = get_or<std::vector<double>>(j, "eval.", "epsilon_grid",
                                                 e.epsilon_grid);
    for (double eps : e.epsilon_grid)
        if (!(eps >= 0.0 && eps <= 1.0))
            throw ConfigError("field 'eval.epsilon_grid' entries must lie in [0, 1]");
    for (std::size_t i = 1; i < e.epsilon_grid.size(); ++i)
        if (e.epsilon_grid[i] < e.epsilon_grid[i - 1])
            throw ConfigError("field 'eval.epsilon_grid' must be ascending");
    e.attack_passes = get_or<std::size_t>(j, "eval.", "attack_passes", e.attack_passes);
    if (e.attack_passes < 1) throw ConfigError("field 'eval.attack_passes' must be >= 1");
    e.attack_count = get_or<std::size_t>(j, "eval.", "attack_count", e.attack_count);
    if (e.attack_count < 1) throw ConfigError("field 'eval.attack_count' must be >= 1");
    e.ood_images = get_or<std::string>(j, "eval.", "ood_images", "");
    e.ood_labels = get_or<std::string>(j, "eval.", "ood_labels", "");
    if (!e.ood_images.empty()) require_file(e.ood_images, "eval.ood_images");
    if (!e.ood_labels.empty()) require_file(e.ood_labels, "eval.ood_labels");
    e.ood_score = get_or<std::string>(j, "eval.", "ood_score", e.ood_score);
    if (e.ood_score != "max_prob" && e.ood_score != "negative_entropy")
        throw ConfigError("field 'eval.ood_score' must be max_prob or negative_entropy");
    return e;
}

} // namespace

Architecture ModelConfig::to_architecture() const {
    Activation hyper_act = Activation::relu;
    if (hypernet_activation)
        hyper_act = *hypernet_activation;
    else if (kind == "vb-cdn")
        hyper_act = Activation::tanh;
    return Architecture::mlp(layers, task, output_dim, hypernet_hidden, hyper_act);
}

void ExperimentConfig::validate() const {
    try {
        model.to_architecture();
    } catch (const ConfigError& e) {
        throw ConfigError("model: " + std::string(e.what()));
    }
    train.validate();
    if (model.task == Task::regression && data.kind == "idx")
        throw ConfigError("data.kind 'idx' requires a classification model");
    if ((data.kind == "toy-homoscedastic" || data.kind == "toy-heteroscedastic") &&
        model.task != Task::regression)
        throw ConfigError("toy data requires 'model.task' = regression");
}

ExperimentConfig parse_config(const json& j) {
    reject_unknown(j, "", {"seed", "output_dir", "model", "train", "data", "eval"});
    ExperimentConfig c;
    c.seed = get_or<std::uint64_t>(j, "", "seed", 0);
    c.output_dir = get_or<std::string>(j, "", "output_dir", c.output_dir);
    if (!j.contains("model")) throw ConfigError("missing section 'model'");
    c.model = parse_model(j.at("model"));
    c.train = parse_train(j.contains("train") ? j.at("train") : json::object(), c.model);
    if (!j.contains("data")) throw ConfigError("missing section 'data'");
    c.data = parse_data(j.at("data"));
    c.eval = parse_eval(j.contains("eval") ? j.at("eval") : json::object());
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

} // namespace cdn
