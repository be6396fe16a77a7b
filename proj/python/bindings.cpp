#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nesy/cli.hpp"
#include "nesy/experiments.hpp"
#include "nesy/hybrid.hpp"

namespace py = pybind11;
using namespace nesy;

namespace {

OccupancyClass parse_class(const py::handle& h) {
    if (py::isinstance<py::int_>(h)) return class_from_index(h.cast<int>());
    const auto name = h.cast<std::string>();
    if (auto c = class_from_name(name)) return *c;
    throw domain_error("unknown occupancy class '" + name + "'");
}

std::vector<OccupancyClass> parse_classes(const py::sequence& seq) {
    std::vector<OccupancyClass> out;
    for (const auto& h : seq) out.push_back(parse_class(h));
    return out;
}

ClassDistribution to_distribution(const std::vector<double>& p) {
    if (p.size() != kNumClasses) throw dimension_error("a distribution needs exactly 5 entries");
    ClassDistribution d;
    std::copy(p.begin(), p.end(), d.probs.begin());
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Neuro-symbolic parking occupancy prediction";

    static py::exception<Error> error(m, "NesyError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error, (std::string(error_code(e.kind())) + ": " + e.what()).c_str());
        }
    });

    m.def(
        "run",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv{"nesy"};
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command line with `args`; returns (exit_code, stdout, stderr).");

    m.def(
        "effective_config",
        [](const std::string& text, const std::vector<std::string>& overrides) {
            return cli::dump_config(cli::config_from_json(text, overrides));
        },
        py::arg("config_json") = "", py::arg("overrides") = std::vector<std::string>{},
        "Defaults merged with a JSON document and key=value overrides, as JSON text.");

    m.def(
        "discretize", [](double ratio) { return std::string(class_name(discretize_ratio(ratio))); }, py::arg("ratio"));

    m.def(
        "refine",
        [](const std::vector<double>& dist, const py::sequence& plausible) {
            return refine_distribution(to_distribution(dist), parse_classes(plausible)).probs;
        },
        py::arg("distribution"), py::arg("plausible"));

    m.def(
        "accuracy",
        [](const py::sequence& pred, const py::sequence& truth) {
            return compute_accuracy(parse_classes(pred), parse_classes(truth));
        },
        py::arg("pred"), py::arg("truth"));
    m.def(
        "accuracy_at_1",
        [](const py::sequence& pred, const py::sequence& truth) {
            return compute_accuracy_at_1(parse_classes(pred), parse_classes(truth));
        },
        py::arg("pred"), py::arg("truth"));

    m.attr("CLASSES") = py::make_tuple("VeryLow", "Low", "Moderate", "High", "VeryHigh");
}
