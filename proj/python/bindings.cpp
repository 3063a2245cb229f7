#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cotsfa/augment.hpp"
#include "cotsfa/cli.hpp"
#include "cotsfa/dataset.hpp"
#include "cotsfa/errors.hpp"
#include "cotsfa/eval.hpp"
#include "cotsfa/loss.hpp"
#include "cotsfa/train.hpp"

namespace py = pybind11;
using namespace cotsfa;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() == 1) return Matrix(a.shape(0), 1, std::vector<double>(a.data(), a.data() + a.size()));
    if (a.ndim() != 2) throw DimensionError("expected a 1-d or 2-d array");
    return Matrix(a.shape(0), a.shape(1), std::vector<double>(a.data(), a.data() + a.size()));
}

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_matrix(const Matrix& m) {
    Array out({m.rows, m.cols});
    std::copy(m.values.begin(), m.values.end(), out.mutable_data());
    return out;
}

py::dict metrics_dict(const eval::Metrics& m) {
    py::dict d;
    d["mae"] = m.mae;
    d["mse"] = m.mse;
    d["smape"] = m.smape ? py::cast(*m.smape) : py::none();
    return d;
}

py::dict curve_dict(const augment::CurveParams& p) {
    py::dict d;
    d["A"] = p.A;
    d["B"] = p.B;
    d["C"] = p.C;
    d["Z"] = p.Z;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Anomaly-aware contrastive forecasting core";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<SamplingError>(m, "SamplingError", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.def(
        "anomaly_curve",
        [](double t, double A, double B, double C, double Z) { return augment::anomaly_curve({A, B, C, Z}, t); },
        py::arg("t"), py::arg("A") = augment::kMeanA, py::arg("B") = augment::kFixedB, py::arg("C") = 0.806,
        py::arg("Z") = augment::kFixedZ);

    m.def(
        "sample_curve_params",
        [](std::uint64_t seed, std::size_t horizon_span) {
            Rng rng = make_rng(seed, 0);
            return curve_dict(augment::sample_curve_params(rng, horizon_span));
        },
        py::arg("seed"), py::arg("horizon_span") = 30);

    m.def(
        "check_constraints",
        [](double A, double C, std::size_t horizon_span) {
            return augment::check_constraints({A, augment::kFixedB, C, augment::kFixedZ}, horizon_span).ok();
        },
        py::arg("A"), py::arg("C"), py::arg("horizon_span") = 30);

    m.def(
        "compute_metrics", [](const Array& pred, const Array& target) {
            return metrics_dict(eval::compute_metrics(to_matrix(pred), to_matrix(target)));
        },
        py::arg("prediction"), py::arg("target"));

    m.def("delta_improvement", &eval::delta_improvement, py::arg("err_base"), py::arg("err_cotsfa"));

    m.def(
        "paired_t_test",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            const auto r = eval::paired_t_test(a, b);
            py::dict d;
            d["n"] = r.n;
            d["t"] = r.t;
            d["p"] = r.p;
            d["tier"] = std::string(eval::to_string(r.tier));
            d["degenerate"] = r.degenerate;
            return d;
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "alignment_loss",
        [](const Array& z, const Array& z_aug, const Array& y, const Array& y_aug, std::size_t views,
           double temperature) {
            loss::SimilarityBatch b{to_tensor(z), to_tensor(z_aug), to_tensor(y), to_tensor(y_aug), views, temperature};
            return loss::alignment_loss(b).item();
        },
        py::arg("z"), py::arg("z_aug"), py::arg("y"), py::arg("y_aug"), py::arg("views"),
        py::arg("temperature") = 1.0);

    m.def(
        "early_stopper",
        [](const std::vector<double>& history, std::size_t patience) {
            const auto d = train::early_stopper(history, patience);
            return py::make_tuple(d.stop, d.best_index);
        },
        py::arg("history"), py::arg("patience") = 3);

    m.def(
        "gen_synthetic",
        [](std::size_t n_series, std::size_t length, std::size_t channels, std::uint64_t seed) {
            std::vector<Array> out;
            for (const auto& f : data::gen_synthetic(n_series, length, channels, seed)) out.push_back(from_matrix(f.values));
            return out;
        },
        py::arg("n_series"), py::arg("length"), py::arg("channels") = 1, py::arg("seed") = 0);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv{"cotsfa"};
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a CLI subcommand in-process; returns (exit code, stdout, stderr).");
}
