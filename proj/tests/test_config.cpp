#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cdn/commands.hpp"
#include "support/test_helpers.hpp"

#include <filesystem>
#include <fstream>

using namespace cdn;
using nlohmann::json;

namespace {

json base_toy_config() {
    return json::parse(R"({
      "seed": 3,
      "output_dir": "unused",
      "model": {
        "kind": "ml-cdn",
        "layers": [1, 8, 2],
        "task": "regression",
        "output_dim": 1,
        "hypernet_hidden": [4]
      },
      "train": {
        "batch_size": 20,
        "samples": 1,
        "lambda": 0.001,
        "iterations": 40,
        "sampling": "explicit"
      },
      "data": { "kind": "toy-homoscedastic" },
      "eval": { "samples": 8 }
    })");
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    return std::string((std::istreambuf_iterator<char>(f)), {});
}

std::string fresh_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("cdn-test-" + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

} // namespace

TEST_CASE("config parses and validates") {
    ExperimentConfig cfg = parse_config(base_toy_config());
    CHECK(cfg.seed == 3);
    CHECK(cfg.model.kind == "ml-cdn");
    CHECK(cfg.train.batch_size == 20);
    CHECK(cfg.eval.samples == 8);
    CHECK(cfg.train.objective == Objective::ml);
}

TEST_CASE("unknown keys are rejected with the full field path") {
    json j = base_toy_config();
    j["trian"] = json::object();
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("trian"), ConfigError);

    j = base_toy_config();
    j["train"]["learning_rte"] = 0.1;
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("train.learning_rte"),
                         ConfigError);

    j = base_toy_config();
    j["model"]["dropout"] = 0.5;
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("model.dropout"),
                         ConfigError);
}

TEST_CASE("out-of-range fields are rejected by name") {
    json j = base_toy_config();
    j["train"]["learning_rate"] = 0.0;
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("learning_rate"),
                         ConfigError);

    j = base_toy_config();
    j["train"]["lambda"] = -1.0;
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("lambda"), ConfigError);

    j = base_toy_config();
    j["model"]["kind"] = "transformer";
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("model.kind"), ConfigError);

    j = base_toy_config();
    j["eval"]["epsilon_grid"] = {0.5, 0.1};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("epsilon_grid"),
                         ConfigError);

    j = base_toy_config();
    j["data"]["kind"] = "imagenet";
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("data.kind"), ConfigError);
}

TEST_CASE("missing data files are a config error naming the field") {
    json j = base_toy_config();
    j["model"]["task"] = "classification";
    j["model"]["layers"] = {4, 8, 3};
    j["model"]["output_dim"] = 3;
    j["data"] = {{"kind", "idx"},
                 {"train_images", "/nonexistent/images.idx"},
                 {"train_labels", "/nonexistent/labels.idx"}};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("data.train_images"),
                         ConfigError);
}

TEST_CASE("hypernet activation defaults by kind") {
    json j = base_toy_config();
    ExperimentConfig ml = parse_config(j);
    CHECK(ml.model.to_architecture().hypernet_activation == Activation::relu);
    j["model"]["kind"] = "vb-cdn";
    ExperimentConfig vb = parse_config(j);
    CHECK(vb.model.to_architecture().hypernet_activation == Activation::tanh);
    j["model"]["hypernet_activation"] = "relu";
    CHECK(parse_config(j).model.to_architecture().hypernet_activation ==
          Activation::relu);
}

TEST_CASE("toy command writes a 1000-row grid with non-negative std") {
    ExperimentConfig cfg = parse_config(base_toy_config());
    cfg.output_dir = fresh_dir("toy");
    cmd_toy(cfg);
    const std::string csv = slurp(cfg.output_dir + "/predictive.csv");
    std::size_t rows = 0;
    for (char c : csv) rows += c == '\n';
    CHECK(rows == 1001); // header + 1000 grid points
    CHECK(csv.rfind("x,mean,std,mixing_var,posterior_var", 0) == 0);
    CHECK(csv.find("nan") == std::string::npos);
    CHECK(csv.find("-nan") == std::string::npos);

    std::ifstream f(cfg.output_dir + "/predictive.csv");
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        const auto c3 = line.find(',', c2 + 1);
        const double sd = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
        CHECK(sd >= 0.0);
    }
}

TEST_CASE("commands re-run byte-identically under the same config and seed") {
    ExperimentConfig cfg = parse_config(base_toy_config());
    cfg.output_dir = fresh_dir("repro-a");
    cmd_toy(cfg);
    ExperimentConfig cfg2 = parse_config(base_toy_config());
    cfg2.output_dir = fresh_dir("repro-b");
    cmd_toy(cfg2);
    CHECK(slurp(cfg.output_dir + "/predictive.csv") ==
          slurp(cfg2.output_dir + "/predictive.csv"));
    CHECK(slurp(cfg.output_dir + "/loss.csv") == slurp(cfg2.output_dir + "/loss.csv"));
    CHECK(slurp(cfg.output_dir + "/model.ckpt") ==
          slurp(cfg2.output_dir + "/model.ckpt"));

    // a different seed changes the outputs
    ExperimentConfig cfg3 = parse_config(base_toy_config());
    cfg3.seed = 4;
    cfg3.output_dir = fresh_dir("repro-c");
    cmd_toy(cfg3);
    CHECK(slurp(cfg.output_dir + "/predictive.csv") !=
          slurp(cfg3.output_dir + "/predictive.csv"));
}

TEST_CASE("train / ood / attack pipeline on a small synthetic corpus") {
    const std::string dir = fresh_dir("pipeline");
    cdn::testing::make_synth_corpus(dir + "/train-img.idx", dir + "/train-lab.idx", 600,
                                    1);
    cdn::testing::make_synth_corpus(dir + "/test-img.idx", dir + "/test-lab.idx", 200,
                                    2);
    cdn::testing::make_synth_corpus(dir + "/ood-img.idx", dir + "/ood-lab.idx", 200, 3,
                                    /*alphabet=*/true);

    json j;
    j["seed"] = 11;
    j["output_dir"] = dir + "/out";
    j["model"] = {{"kind", "ml-cdn"},
                  {"layers", {784, 100, 10}},
                  {"task", "classification"},
                  {"output_dim", 10},
                  {"hypernet_hidden", {50}}};
    j["train"] = {{"batch_size", 100},
                  {"samples", 1},
                  {"lambda", 1e-6},
                  {"iterations", 300},
                  {"log_every", 100}};
    j["data"] = {{"kind", "idx"},
                 {"train_images", dir + "/train-img.idx"},
                 {"train_labels", dir + "/train-lab.idx"},
                 {"test_images", dir + "/test-img.idx"},
                 {"test_labels", dir + "/test-lab.idx"}};
    j["eval"] = {{"samples", 10},
                 {"epsilon_grid", {0.0, 0.3}},
                 {"attack_count", 50},
                 {"ood_images", dir + "/ood-img.idx"},
                 {"ood_labels", dir + "/ood-lab.idx"}};
    ExperimentConfig cfg = parse_config(j);

    cmd_train(cfg);
    CHECK(std::filesystem::exists(cfg.output_dir + "/model.ckpt"));
    const json metrics = json::parse(slurp(cfg.output_dir + "/metrics.json"));
    CHECK(metrics.at("test_accuracy").get<double>() > 0.5);

    cmd_ood(cfg, cfg.output_dir + "/model.ckpt");
    const json report = json::parse(slurp(cfg.output_dir + "/report.json"));
    CHECK(report.at("mmc_in").get<double>() >= 0.1);
    CHECK(report.at("mmc_in").get<double>() <= 1.0);
    CHECK(report.at("mmc_out").get<double>() >= 0.1);
    CHECK(report.at("auroc").get<double>() >= 0.0);
    CHECK(report.at("auroc").get<double>() <= 1.0);
    CHECK(std::filesystem::exists(cfg.output_dir + "/entropy_in_cdf.csv"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/entropy_out_cdf.csv"));

    cmd_attack(cfg, cfg.output_dir + "/model.ckpt");
    const std::string curve = slurp(cfg.output_dir + "/curve.csv");
    std::size_t rows = 0;
    for (char c : curve) rows += c == '\n';
    CHECK(rows == 3); // header + 2 grid points

    // checkpoint/architecture mismatch is a shape error
    json wrong = j;
    wrong["model"]["layers"] = {784, 40, 10};
    ExperimentConfig bad = parse_config(wrong);
    CHECK_THROWS_AS(cmd_ood(bad, cfg.output_dir + "/model.ckpt"), ShapeError);
}

TEST_CASE("identical-distribution ood sets give auroc near one half") {
    const std::string dir = fresh_dir("selfood");
    cdn::testing::make_synth_corpus(dir + "/a-img.idx", dir + "/a-lab.idx", 300, 5);
    Dataset a = load_idx(dir + "/a-img.idx", dir + "/a-lab.idx");

    Architecture arch = Architecture::mlp({784, 20, 10}, Task::classification, 10, {8});
    CdnModel m = init_cdn(arch, 6);
    Predictive p1 = predict_ml(m, a.inputs, 8, 7);
    Predictive p2 = predict_ml(m, a.inputs, 8, 8);
    const double v = auroc(max_prob_scores(p1.probs), max_prob_scores(p2.probs));
    CHECK(v > 0.45);
    CHECK(v < 0.55);
}
