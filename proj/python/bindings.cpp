#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hift/checkpoint.hpp"
#include "hift/memory.hpp"
#include "hift/trainer.hpp"

namespace py = pybind11;

namespace {

py::dict estimate_to_dict(const hift::EstimateReport& e) {
    py::dict d;
    d["param_bytes"] = e.param_bytes.to_double();
    d["master_bytes"] = e.master_bytes.to_double();
    d["grad_bytes"] = e.grad_bytes.to_double();
    d["state_bytes"] = e.state_bytes.to_double();
    d["average_total_bytes"] = e.total.to_double();
    d["peak_bytes"] = e.peak.to_double();
    d["savings_vs_fpft_bytes"] = e.savings_vs_fpft.to_double();
    d["groups"] = e.groups;
    d["note"] = e.note;
    return d;
}

hift::LayeredModel model_from_arch_json(const std::string& arch_json,
                                        const std::string& precision) {
    hift::ModelArch arch = hift::arch_from_text(arch_json);
    if (hift::precision_from_name(precision) == hift::PrecisionMode::mixed) {
        arch.dtype = hift::DType::f16;
    }
    return hift::LayeredModel::build(arch, 0);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Hierarchical block-wise fine-tuning engine with a simulated "
              "host/device memory ledger.";

    m.def(
        "train",
        [](const std::string& config_json) {
            const hift::TrainConfig config = hift::TrainConfig::from_json(config_json);
            const hift::RunReport report = config.mode == hift::TrainMode::hift
                                               ? hift::train_hift(config)
                                               : hift::train_fpft(config);
            return report.to_json();
        },
        py::arg("config_json"),
        "Run one training experiment; returns the run report as a JSON string.");

    m.def(
        "compare",
        [](const std::string& report_a_json, const std::string& report_b_json) {
            const auto a = hift::RunReport::from_json(report_a_json);
            const auto b = hift::RunReport::from_json(report_b_json);
            return hift::compare_runs(a, b).to_text();
        },
        py::arg("report_a_json"), py::arg("report_b_json"),
        "Side-by-side comparison of two run reports (text table).");

    m.def(
        "estimate_fpft",
        [](double param_bytes, const std::string& optimizer, const std::string& precision) {
            // Exact rational inputs: interpret the double as a centi-byte ratio.
            const auto z = hift::Ratio(static_cast<std::int64_t>(param_bytes * 100.0 + 0.5), 100);
            return estimate_to_dict(hift::estimate_fpft(z, hift::optim_kind_from_name(optimizer),
                                                        hift::precision_from_name(precision)));
        },
        py::arg("param_bytes"), py::arg("optimizer") = "adamw", py::arg("precision") = "fp32",
        "Analytic full-parameter fine-tuning estimate from total parameter bytes.");

    m.def(
        "estimate_hift",
        [](double param_bytes, std::size_t k, const std::string& optimizer,
           const std::string& precision) {
            const auto z = hift::Ratio(static_cast<std::int64_t>(param_bytes * 100.0 + 0.5), 100);
            return estimate_to_dict(hift::estimate_hift(z, k,
                                                        hift::optim_kind_from_name(optimizer),
                                                        hift::precision_from_name(precision)));
        },
        py::arg("param_bytes"), py::arg("k"), py::arg("optimizer") = "adamw",
        py::arg("precision") = "fp32",
        "Analytic hierarchical fine-tuning estimate for k groups.");

    m.def(
        "estimate_for_arch",
        [](const std::string& arch_json, std::size_t m, const std::string& optimizer,
           const std::string& precision) {
            const auto model = model_from_arch_json(arch_json, precision);
            const auto kind = hift::optim_kind_from_name(optimizer);
            const auto mode = hift::precision_from_name(precision);
            py::dict d;
            d["fpft"] = estimate_to_dict(hift::estimate_fpft_for_model(model, kind, mode));
            d["hift"] = estimate_to_dict(hift::estimate_hift_for_model(model, kind, mode, m));
            d["trainable_peak_fraction"] = hift::trainable_peak_fraction(model, m);
            d["layer_units"] = model.unit_count();
            return d;
        },
        py::arg("arch_json"), py::arg("m") = 1, py::arg("optimizer") = "adamw",
        py::arg("precision") = "fp32",
        "Exact per-architecture estimates (required for adafactor's factored state).");

    m.def(
        "trainable_peak_fraction",
        [](const std::string& arch_json, std::size_t m) {
            return hift::trainable_peak_fraction(model_from_arch_json(arch_json, "fp32"), m);
        },
        py::arg("arch_json"), py::arg("m"),
        "Largest group's parameter share under m-layer grouping.");

    m.def("default_config", [](const std::string& task) {
        hift::TrainConfig c;
        c.task = hift::task_from_name(task);
        if (c.task == hift::TaskKind::synthetic_regression) {
            c.arch.input = hift::InputKind::vector;
            c.arch.head = hift::HeadKind::regressor;
        }
        return c.to_json();
    }, py::arg("task") = "synthetic-classification", "Template config JSON for a task.");

    py::register_exception<hift::ConfigError>(m, "HiftConfigError", PyExc_ValueError);
    py::register_exception<hift::ParseError>(m, "HiftParseError", PyExc_ValueError);
    py::register_exception<hift::DivergedError>(m, "HiftDivergedError", PyExc_RuntimeError);
}
