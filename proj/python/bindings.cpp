#include "adstage/architectures.hpp"
#include "adstage/cli.hpp"
#include "adstage/cost.hpp"
#include "adstage/data_pipeline.hpp"
#include "adstage/errors.hpp"
#include "adstage/evaluator.hpp"
#include "adstage/layers.hpp"
#include "adstage/report.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace adstage;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a)
{
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor& t)
{
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    FloatArray out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

// structured results cross the boundary as JSON text; the package decodes them
std::string dumps(const nlohmann::json& j) { return j.dump(); }

ModelScale parse_scale(const std::string& s)
{
    if (s == "full")
        return ModelScale::full;
    if (s == "toy")
        return ModelScale::toy;
    throw ConfigError("unknown scale '" + s + "' (full, toy)");
}

} // namespace

PYBIND11_MODULE(_adstage, m)
{
    m.doc() = "Native core of the adstage toolkit";

    auto base = py::register_exception<Error>(m, "AdstageError", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<SmoteError>(m, "SmoteError", base.ptr());
    py::register_exception<SplitError>(m, "SplitError", base.ptr());
    py::register_exception<EnsembleError>(m, "EnsembleError", base.ptr());
    py::register_exception<EvaluationError>(m, "EvaluationError", base.ptr());
    py::register_exception<DegenerateTestError>(m, "DegenerateTestError", base.ptr());

    m.def("model_names", &model_names);
    m.def(
        "model_cost",
        [](const std::string& model, const std::string& convention, const std::string& scale) {
            return dumps(to_json(flop_count(build_model(model, parse_scale(scale)), parse_flop_convention(convention))));
        },
        py::arg("model"), py::arg("convention") = "standard", py::arg("scale") = "full");
    m.def(
        "ensemble_cost",
        [](const std::vector<std::string>& models, const std::string& convention, const std::string& scale) {
            std::vector<CostReport> members;
            for (const auto& name : models)
                members.push_back(flop_count(build_model(name, parse_scale(scale)), parse_flop_convention(convention)));
            return dumps(to_json(ensemble_cost(members)));
        },
        py::arg("models"), py::arg("convention") = "standard", py::arg("scale") = "full");

    m.def("conv2d", [](const FloatArray& x, const FloatArray& w, const FloatArray& b) {
        return to_array(conv2d(to_tensor(x), to_tensor(w), to_tensor(b)).y);
    });
    m.def("dense", [](const FloatArray& x, const FloatArray& w, const FloatArray& b) {
        return to_array(dense(to_tensor(x), to_tensor(w), to_tensor(b)).y);
    });
    m.def(
        "pool2d",
        [](const FloatArray& x, const std::string& mode) {
            if (mode != "max" && mode != "avg")
                throw ConfigError("pool mode must be 'max' or 'avg'");
            return to_array(pool2d(to_tensor(x), mode == "max" ? PoolMode::max : PoolMode::avg).y);
        },
        py::arg("x"), py::arg("mode") = "max");
    m.def("softmax", [](const FloatArray& s) { return to_array(softmax(to_tensor(s))); });

    m.def(
        "smote",
        [](const FloatArray& X, const std::vector<std::size_t>& labels, std::size_t classes, std::size_t k,
           std::uint64_t seed) {
            const auto r = smote(to_tensor(X), labels, classes, SmoteConfig{k, seed});
            std::vector<bool> synthetic;
            for (auto p : r.provenance)
                synthetic.push_back(p == Provenance::synthetic);
            return py::make_tuple(to_array(r.X), r.labels, synthetic);
        },
        py::arg("X"), py::arg("labels"), py::arg("classes"), py::arg("k") = 5, py::arg("seed") = 42);
    m.def(
        "split",
        [](const std::vector<std::size_t>& labels, std::size_t classes, double test_fraction, double val_fraction,
           bool val_of_remainder, std::uint64_t seed) {
            const auto s = split_nested(labels, classes, SplitSpec{test_fraction, val_fraction, val_of_remainder, seed});
            return py::make_tuple(s.train, s.val, s.test);
        },
        py::arg("labels"), py::arg("classes"), py::arg("test_fraction") = 0.20, py::arg("val_fraction") = 0.10,
        py::arg("val_of_remainder") = true, py::arg("seed") = 42);

    m.def("ensemble_average", [](const std::vector<FloatArray>& members) {
        std::vector<PredictionMatrix> pm;
        for (std::size_t i = 0; i < members.size(); ++i)
            pm.push_back({to_tensor(members[i]), "m" + std::to_string(i)});
        return to_array(ensemble_average(pm).probs);
    });
    m.def(
        "metrics",
        [](const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred, std::size_t classes) {
            return dumps(to_json(metrics(confusion(truth, pred, classes))));
        },
        py::arg("truth"), py::arg("pred"), py::arg("classes") = kNumClasses);
    m.def("roc_auc", [](const FloatArray& probs, const std::vector<std::size_t>& truth) {
        return roc_auc(PredictionMatrix{to_tensor(probs), "probs"}, truth).auc;
    });
    m.def("wilcoxon", [](const std::vector<double>& a, const std::vector<double>& b) {
        return dumps(to_json(wilcoxon_signed_rank(a, b)));
    });

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
            py::gil_scoped_release release;
            code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    });
}
