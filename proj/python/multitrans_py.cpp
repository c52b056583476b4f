#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "multitrans/errors.hpp"
#include "multitrans/eval.hpp"
#include "multitrans/io.hpp"
#include "multitrans/metrics.hpp"
#include "multitrans/synthetic.hpp"
#include "multitrans/train.hpp"

namespace py = pybind11;
using namespace multitrans;

namespace {

RunConfig config_from(const std::optional<std::string>& json) {
    return json ? run_config_from_json(*json) : RunConfig{};
}

py::array_t<double> features_array(const FeatureClip& c) {
    py::array_t<double> a({c.frames, c.sensors, c.input_dim});
    std::copy(c.features.begin(), c.features.end(), a.mutable_data());
    return a;
}

py::object strong_array(const FeatureClip& c) {
    if (!c.strong_label) return py::none();
    py::array_t<std::uint8_t> a({c.strong_label->frames, c.strong_label->classes});
    std::copy(c.strong_label->values.begin(), c.strong_label->values.end(), a.mutable_data());
    return a;
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["per_class_ap"] = r.per_class_ap;
    d["excluded_classes"] = r.excluded_classes;
    d["map"] = r.map;
    d["checkpoint_id"] = r.checkpoint_id;
    d["num_frames"] = r.num_frames;
    return d;
}

}  // namespace

PYBIND11_MODULE(_multitrans, m) {
    m.doc() = "Multi-sensor event detection with self-attention fusion over sensors";

    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);
    py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.def(
        "average_precision",
        [](const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
            return average_precision(scores, labels);
        },
        py::arg("scores"), py::arg("labels"),
        "Non-interpolated AP with index tie-breaking; None when there are no positives.");
    m.def(
        "lr_schedule", [](std::size_t epoch, std::size_t epochs) {
            TrainConfig c;
            c.epochs = epochs;
            return lr_schedule(epoch, c);
        },
        py::arg("epoch"), py::arg("epochs") = 50);
    m.def(
        "class_weights", [](const std::vector<std::size_t>& counts) { return class_weights(counts); },
        py::arg("event_counts"));
    m.def(
        "default_config", [] { return run_config_to_json(RunConfig{}); },
        "Default run config as a JSON document.");

    py::class_<FeatureClip>(m, "FeatureClip")
        .def_readonly("clip_id", &FeatureClip::clip_id)
        .def_readonly("frames", &FeatureClip::frames)
        .def_readonly("sensors", &FeatureClip::sensors)
        .def_readonly("input_dim", &FeatureClip::input_dim)
        .def_property_readonly("features", &features_array, "frames x sensors x input_dim")
        .def_property_readonly("weak_label", [](const FeatureClip& c) { return c.weak_label.values; })
        .def_property_readonly("strong_label", &strong_array, "frames x classes, or None")
        .def_property_readonly("modality", [](const FeatureClip& c) {
            std::vector<std::string> out;
            for (auto mo : c.modality) out.emplace_back(to_string(mo));
            return out;
        });

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("train", &Dataset::train)
        .def_readonly("test", &Dataset::test)
        .def_readonly("event_counts", &Dataset::event_counts);

    m.def(
        "generate_dataset",
        [](const std::optional<std::string>& config, std::optional<std::uint64_t> seed) {
            RunConfig cfg = config_from(config);
            if (seed) cfg.generator.seed = *seed;
            py::gil_scoped_release release;
            return generate_dataset(cfg.generator);
        },
        py::arg("config") = py::none(), py::arg("seed") = py::none());
    m.def(
        "save_dataset",
        [](const std::string& dir, const Dataset& data, const std::optional<std::string>& config) {
            save_dataset(dir, data, config_from(config).generator);
        },
        py::arg("dir"), py::arg("dataset"), py::arg("config") = py::none());
    m.def("load_dataset", [](const std::string& dir) { return load_dataset(dir); }, py::arg("dir"));

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_property_readonly("id", &Checkpoint::id)
        .def_property_readonly("kind", [](const Checkpoint& c) { return std::string(to_string(c.kind)); })
        .def_property_readonly("variant", [](const Checkpoint& c) { return std::string(to_string(c.config.variant)); })
        .def_property_readonly("fusion", [](const Checkpoint& c) { return std::string(to_string(c.config.fusion)); })
        .def_property_readonly("num_parameters", [](const Checkpoint& c) { return c.params.scalar_count(); })
        .def("to_json", [](const Checkpoint& c) { return checkpoint_to_json(c); })
        .def_static("from_json", [](const std::string& s) { return checkpoint_from_json(s); })
        .def_static(
            "oracle_stub", [](const std::optional<std::string>& config) {
                return Checkpoint::oracle_stub(config_from(config).model);
            },
            py::arg("config") = py::none());

    m.def(
        "train",
        [](const Dataset& data, const std::optional<std::string>& config, const std::optional<std::string>& variant,
           std::optional<std::size_t> epochs, std::optional<std::uint64_t> seed) {
            RunConfig cfg = config_from(config);
            if (variant) {
                const AblationVariant v = ablation_variant(*variant);
                cfg.model.variant = v.variant;
                cfg.model.fusion = v.fusion;
            }
            if (epochs) cfg.training.epochs = *epochs;
            if (seed) cfg.training.seed = *seed;
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(data.train, data.event_counts, cfg.model, cfg.training);
            }
            std::vector<std::tuple<std::size_t, double, double>> history;
            for (const auto& e : r.history) history.emplace_back(e.epoch, e.lr, e.mean_loss);
            return std::make_pair(Checkpoint{ModelKind::Network, cfg.model, std::move(r.params)}, history);
        },
        py::arg("dataset"), py::arg("config") = py::none(), py::arg("variant") = py::none(),
        py::arg("epochs") = py::none(), py::arg("seed") = py::none(),
        "Returns (checkpoint, [(epoch, lr, mean_loss), ...]). variant is an ablation row name such as 'C-3'.");

    m.def(
        "evaluate",
        [](const Checkpoint& c, const std::vector<FeatureClip>& clips) {
            EvalReport r;
            {
                py::gil_scoped_release release;
                r = evaluate(c, clips);
            }
            return report_dict(r);
        },
        py::arg("checkpoint"), py::arg("clips"));

    m.def(
        "dump_attention",
        [](const Checkpoint& c, const FeatureClip& clip) {
            std::vector<std::tuple<std::string, std::size_t, std::size_t, std::size_t, std::size_t, std::size_t, double,
                                   double>>
                rows;
            for (const auto& r : dump_attention(c, clip)) {
                rows.emplace_back(r.clip_id, r.frame, r.layer, r.head, r.query_sensor, r.key_sensor, r.weight,
                                  r.weight_normalized);
            }
            return rows;
        },
        py::arg("checkpoint"), py::arg("clip"),
        "Rows of (clip_id, frame, layer, head, query_sensor, key_sensor, weight, weight_normalized).");
}
