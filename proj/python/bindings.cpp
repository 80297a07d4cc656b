#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hpm/bank.hpp"
#include "hpm/cli.hpp"
#include "hpm/detectors.hpp"
#include "hpm/error.hpp"
#include "hpm/eval.hpp"
#include "hpm/geometry.hpp"
#include "hpm/nullspace.hpp"

namespace py = pybind11;

namespace {

hpm::Variant parse_variant(const std::string& name) {
    const auto v = hpm::Variant::parse(name);
    if (!v) throw hpm::ValidationError("unknown variant: " + name);
    return *v;
}

hpm::RidgeMode parse_mode(const std::string& mode) {
    if (mode == "relative") return hpm::RidgeMode::relative;
    if (mode == "absolute") return hpm::RidgeMode::absolute;
    throw hpm::ValidationError("ridge_mode must be relative or absolute");
}

hpm::FeatureBank to_bank(const hpm::Matrix& features, const std::vector<int>& labels, int num_classes) {
    return hpm::make_bank(features, labels, num_classes);
}

py::dict spectrum_dict(const hpm::SpectrumDiagnostics& s) {
    py::dict d;
    d["eigenvalues"] = s.eigenvalues;
    d["effective_rank"] = s.effective_rank;
    d["log_condition"] = s.log_condition;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Hyperspherical pooled Mahalanobis OOD detection and diagnostics.";

    py::register_exception<hpm::ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<hpm::IoError>(m, "IoError", PyExc_OSError);

    m.def("project_sphere", [](const hpm::Vector& h) { return hpm::project_sphere(h); }, py::arg("h"));

    m.def(
        "load_bank",
        [](const std::filesystem::path& path) {
            const auto bank = hpm::load_bank(path);
            py::dict d;
            d["features"] = bank.features;
            d["labels"] = bank.labels;
            d["num_classes"] = bank.num_classes;
            d["name"] = bank.name;
            d["logits"] = bank.logits ? py::cast(*bank.logits) : py::none();
            return d;
        },
        py::arg("path"));

    m.def(
        "save_bank",
        [](const std::filesystem::path& path, const hpm::Matrix& features, const std::vector<int>& labels,
           int num_classes, std::optional<hpm::Matrix> logits) {
            auto bank = to_bank(features, labels, num_classes);
            bank.logits = std::move(logits);
            hpm::save_bank(bank, path);
        },
        py::arg("path"), py::arg("features"), py::arg("labels"), py::arg("num_classes"),
        py::arg("logits") = py::none());

    m.def(
        "class_counts",
        [](const std::vector<int>& labels, int num_classes) {
            hpm::FeatureBank bank;
            bank.features = hpm::Matrix::Zero(static_cast<hpm::Index>(labels.size()), 1);
            bank.labels = labels;
            bank.num_classes = num_classes;
            hpm::validate_bank(bank);
            return hpm::class_counts(bank);
        },
        py::arg("labels"), py::arg("num_classes"));

    m.def(
        "class_covariance",
        [](const hpm::Matrix& features, const std::vector<int>& labels, int num_classes, int c, bool normalized) {
            return hpm::class_covariance(to_bank(features, labels, num_classes), c, normalized).matrix;
        },
        py::arg("features"), py::arg("labels"), py::arg("num_classes"), py::arg("class_id"),
        py::arg("normalized") = false);

    m.def(
        "pooled_covariance",
        [](const hpm::Matrix& features, const std::vector<int>& labels, int num_classes, bool normalized) {
            const auto bank = to_bank(features, labels, num_classes);
            return hpm::pooled_covariance(bank, hpm::class_means(bank, normalized)).matrix;
        },
        py::arg("features"), py::arg("labels"), py::arg("num_classes"), py::arg("normalized") = true);

    m.def("spectrum", [](const hpm::Matrix& a) { return spectrum_dict(hpm::spectrum(a)); }, py::arg("matrix"));

    py::class_<hpm::MetricModel>(m, "MetricModel")
        .def_static(
            "fit",
            [](const hpm::Matrix& features, const std::vector<int>& labels, int num_classes,
               const std::string& variant, double lambda_rel, const std::string& ridge_mode) {
                return hpm::fit_metric(to_bank(features, labels, num_classes), parse_variant(variant),
                                       {lambda_rel, parse_mode(ridge_mode)});
            },
            py::arg("features"), py::arg("labels"), py::arg("num_classes"), py::arg("variant") = "hpm",
            py::arg("lambda_rel") = 1e-3, py::arg("ridge_mode") = "relative")
        .def_static("load", [](const std::filesystem::path& p) { return hpm::load_model(p); }, py::arg("path"))
        .def("save", [](const hpm::MetricModel& self, const std::filesystem::path& p) { hpm::save_model(self, p); },
             py::arg("path"))
        .def("score", [](const hpm::MetricModel& self, const hpm::Vector& h) { return hpm::score(self, h); },
             py::arg("h"))
        .def(
            "score_batch",
            [](const hpm::MetricModel& self, const hpm::Matrix& rows) {
                return hpm::score_batch(self, rows).scores;
            },
            py::arg("rows"))
        .def_property_readonly("variant", [](const hpm::MetricModel& self) { return self.variant.name(); })
        .def_property_readonly("anchors", [](const hpm::MetricModel& self) { return self.anchors; })
        .def_property_readonly("num_classes", [](const hpm::MetricModel& self) { return self.num_classes; })
        .def_property_readonly("dim", [](const hpm::MetricModel& self) { return self.dim; })
        .def_property_readonly("lambdas", [](const hpm::MetricModel& self) {
            std::vector<double> out;
            for (const auto& p : self.precisions) out.push_back(p.lambda);
            return out;
        });

    m.def("energy", [](const hpm::Vector& f, double t) { return hpm::energy(f, t); }, py::arg("logits"),
          py::arg("temperature") = 1.0);
    m.def("msp", [](const hpm::Vector& f) { return hpm::msp(f); }, py::arg("logits"));

    m.def(
        "auroc",
        [](const std::vector<double>& id, const std::vector<double>& ood) { return hpm::auroc(id, ood); },
        py::arg("id_scores"), py::arg("ood_scores"));
    m.def(
        "fpr_at_tpr",
        [](const std::vector<double>& id, const std::vector<double>& ood, double target) {
            return hpm::fpr_at_tpr(id, ood, target);
        },
        py::arg("id_scores"), py::arg("ood_scores"), py::arg("tpr_target") = 0.95);
    m.def("les", &hpm::les, py::arg("best_auroc_percent"), py::arg("cost"));

    m.def(
        "projectors",
        [](const hpm::Matrix& w) {
            const auto p = hpm::projectors(w);
            return py::make_tuple(p.row, p.null, p.rank_row);
        },
        py::arg("weights"));

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = hpm::run_cli(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
