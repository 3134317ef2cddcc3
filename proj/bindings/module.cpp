#include "cdn/commands.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

namespace py = pybind11;

namespace {

cdn::Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw cdn::DimError("expected a 2-d array");
    cdn::Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::memcpy(m.data(), a.data(), m.size() * sizeof(double));
    return m;
}

py::array_t<double> to_numpy(const cdn::Matrix& m) {
    py::array_t<double> a({m.rows(), m.cols()});
    std::memcpy(a.mutable_data(), m.data(), m.size() * sizeof(double));
    return a;
}

py::dict predictive_dict(const cdn::Predictive& p, bool classification) {
    py::dict d;
    if (classification) {
        d["probs"] = to_numpy(p.probs);
    } else {
        d["mean"] = to_numpy(p.mean);
        d["variance"] = to_numpy(p.variance);
    }
    return d;
}

cdn::ExperimentConfig config_from_json_str(const std::string& text) {
    return cdn::parse_config(nlohmann::json::parse(text));
}

/// Owns one model plus the metadata needed to predict/attack from python.
struct PyModel {
    cdn::AnyModel model;
    std::uint64_t seed = 0;

    bool classification() const {
        return model.arch().task == cdn::Task::classification;
    }

    py::dict predict(const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                     std::size_t samples, std::uint64_t s) const {
        return predictive_dict(model.predict(to_matrix(x), samples, s), classification());
    }

    py::array_t<double> fgsm(
        const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
        const std::vector<std::size_t>& labels, double epsilon, std::size_t passes,
        std::uint64_t s) const {
        cdn::AttackConfig cfg;
        cfg.epsilon = epsilon;
        cfg.passes = passes;
        return to_numpy(cdn::fgsm(model.attack_loss_fn(), to_matrix(x), labels, cfg, s));
    }
};

} // namespace

PYBIND11_MODULE(_cdnet, m) {
    m.doc() = "compound density networks: input-conditioned weight distributions "
              "over neural nets, with training and uncertainty evaluation";

    py::register_exception<cdn::ConfigError>(m, "ConfigError");
    py::register_exception<cdn::DataError>(m, "DataError");
    py::register_exception<cdn::NumericalError>(m, "NumericalError");

    py::class_<PyModel>(m, "Model")
        .def_static(
            "train",
            [](const std::string& config_json) {
                cdn::ExperimentConfig cfg = config_from_json_str(config_json);
                cdn::Dataset data = cdn::load_train_data(cfg);
                auto pm = std::make_unique<PyModel>();
                pm->model = cdn::AnyModel::construct(
                    cfg.model, cdn::derive_seed(cfg.seed, "init"));
                cdn::TrainConfig tc = cfg.train;
                tc.seed = cdn::derive_seed(cfg.seed, "train");
                pm->model.fit(data, tc);
                pm->seed = cfg.seed;
                return pm;
            },
            py::arg("config_json"), "train a model from an experiment config string")
        .def_static(
            "load",
            [](const std::string& path) {
                auto pm = std::make_unique<PyModel>();
                pm->model = cdn::AnyModel::load(path);
                return pm;
            },
            py::arg("path"))
        .def("save",
             [](const PyModel& pm, const std::string& path) {
                 pm.model.save(path, pm.seed, "none");
             })
        .def_property_readonly("kind", [](const PyModel& pm) { return pm.model.kind(); })
        .def("predict", &PyModel::predict, py::arg("x"), py::arg("samples") = 100,
             py::arg("seed") = 0)
        .def("fgsm", &PyModel::fgsm, py::arg("x"), py::arg("labels"), py::arg("epsilon"),
             py::arg("passes") = 1, py::arg("seed") = 0);

    m.def(
        "gen_toy",
        [](const std::string& variant, std::size_t n, double noise_scale,
           std::uint64_t seed) {
            cdn::ToySpec spec;
            if (variant == "heteroscedastic")
                spec.variant = cdn::ToyVariant::heteroscedastic;
            else if (variant != "homoscedastic")
                throw cdn::ConfigError("variant must be homoscedastic or heteroscedastic");
            spec.n = n;
            spec.noise_scale = noise_scale;
            spec.seed = seed;
            cdn::Dataset d = cdn::gen_toy(spec);
            return py::make_tuple(to_numpy(d.inputs), to_numpy(d.targets));
        },
        py::arg("variant") = "homoscedastic", py::arg("n") = 0,
        py::arg("noise_scale") = 1.0, py::arg("seed") = 0);

    m.def(
        "load_idx",
        [](const std::string& images, const std::string& labels) {
            cdn::Dataset d = cdn::load_idx(images, labels);
            return py::make_tuple(to_numpy(d.inputs), d.labels);
        },
        py::arg("images"), py::arg("labels"));

    m.def(
        "predictive_entropy",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs) {
            return cdn::predictive_entropy(to_matrix(probs));
        },
        py::arg("probs"));

    m.def("mmc",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p) {
              return cdn::mmc(to_matrix(p));
          });

    m.def("auroc", &cdn::auroc, py::arg("scores_in"), py::arg("scores_out"));

    m.def(
        "mvn_kl_to_standard",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& mean,
           const std::vector<double>& a, const std::vector<double>& b) {
            cdn::MatrixNormalParams p;
            p.M = cdn::Tensor::constant(to_matrix(mean));
            cdn::Matrix am(1, a.size()), bm(1, b.size());
            for (std::size_t i = 0; i < a.size(); ++i) am[i] = a[i];
            for (std::size_t i = 0; i < b.size(); ++i) bm[i] = b[i];
            p.a = cdn::Tensor::constant(am);
            p.b = cdn::Tensor::constant(bm);
            return cdn::mvn_kl_to_standard(p).item();
        },
        py::arg("mean"), py::arg("a"), py::arg("b"));

    m.def(
        "run_command",
        [](const std::string& command, const std::string& config_json,
           const std::string& checkpoint) {
            cdn::ExperimentConfig cfg = config_from_json_str(config_json);
            if (command == "toy")
                cdn::cmd_toy(cfg);
            else if (command == "train")
                cdn::cmd_train(cfg);
            else if (command == "ood")
                cdn::cmd_ood(cfg, checkpoint);
            else if (command == "attack")
                cdn::cmd_attack(cfg, checkpoint);
            else
                throw cdn::ConfigError("unknown command '" + command + "'");
        },
        py::arg("command"), py::arg("config_json"), py::arg("checkpoint") = "",
        "run one harness command (toy | train | ood | attack)");
}
