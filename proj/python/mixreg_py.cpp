// Python bindings. Structured results cross the boundary as JSON text in the
// same schema the command-line tool writes; arrays are numpy matrices.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mixreg/divergence.hpp"
#include "mixreg/errors.hpp"
#include "mixreg/experiment.hpp"
#include "mixreg/init.hpp"
#include "mixreg/io.hpp"
#include "mixreg/newton_em.hpp"
#include "mixreg/selection.hpp"
#include "mixreg/theory.hpp"

namespace py = pybind11;
using namespace mixreg;

namespace {

Dataset make_data(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    Dataset d{x, y};
    d.validate();
    return d;
}

ModelSpec spec_for(const Dataset& data, int K, int weight_degree, int mean_degree) {
    ModelSpec s;
    s.K = K;
    s.d = data.d();
    s.p = data.p();
    s.weight_degree = weight_degree;
    s.mean_degree = mean_degree;
    s.validate();
    return s;
}

FitConfig fit_config(const std::string& floor, int max_em_iters) {
    FitConfig c;
    c.floor = VarianceFloor::parse(floor);
    c.max_em_iters = max_em_iters;
    c.validate();
    return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Gaussian regression mixtures with softmax gates";

    py::register_exception<Error>(m, "MixregError", PyExc_RuntimeError);

    m.def(
        "generate",
        [](const std::string& truth_json, long n, std::uint64_t seed) {
            const Dataset d = experiment_data(truth_from_json(json::parse(truth_json)), n, seed);
            return py::make_tuple(d.x, d.y);
        },
        py::arg("truth_json"), py::arg("n"), py::arg("seed"),
        "Samples n points with x uniform on [0,1]^d; returns (x, y).");

    m.def(
        "fit",
        [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int K, std::uint64_t seed, int weight_degree,
           int mean_degree, const std::string& init, int init_trials, const std::string& floor, int max_em_iters) {
            const Dataset data = make_data(x, y);
            InitConfig ic;
            ic.strategy = init_strategy_from_string(init);
            ic.n_trials = init_trials;
            ic.seed = seed;
            const FitResult f = fit_with_restarts(data, spec_for(data, K, weight_degree, mean_degree), ic,
                                                  fit_config(floor, max_em_iters), 10);
            return to_json(f).dump();
        },
        py::arg("x"), py::arg("y"), py::arg("K"), py::arg("seed") = 0, py::arg("weight_degree") = 1,
        py::arg("mean_degree") = 1, py::arg("init") = "regular", py::arg("init_trials") = 50,
        py::arg("floor") = "fixed", py::arg("max_em_iters") = 200);

    m.def(
        "select",
        [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const std::vector<int>& K_range,
           std::optional<double> kappa, std::uint64_t seed, const std::string& penalty, int init_trials,
           int weight_degree, int mean_degree) {
            const Dataset data = make_data(x, y);
            SelectConfig c;
            if (kappa) {
                c.kappa = *kappa;
            } else {
                c.kappa_mode = SelectConfig::KappaMode::slope;
            }
            c.penalty = PenaltyMode::parse(penalty);
            c.init.seed = seed;
            c.init.n_trials = init_trials;
            return to_json(select(data, K_range, spec_for(data, 1, weight_degree, mean_degree), c)).dump();
        },
        py::arg("x"), py::arg("y"), py::arg("K_range"), py::arg("kappa") = 1.0, py::arg("seed") = 0,
        py::arg("penalty") = "dim", py::arg("init_trials") = 50, py::arg("weight_degree") = 1,
        py::arg("mean_degree") = 1, "kappa=None selects kappa by the slope heuristic.");

    m.def(
        "divergence",
        [](const std::string& truth_json, const std::string& fit_json, const Eigen::MatrixXd& x,
           const std::string& kind, int m_y, std::uint64_t seed, double rho) {
            const MixtureDensity s(truth_from_json(json::parse(truth_json)));
            const MixtureDensity t(params_from_json(json::parse(fit_json)));
            DivergenceEstimate e;
            if (kind == "kl") {
                e = kl_tensorized(s, t, x, m_y, seed);
            } else if (kind == "jkl") {
                e = jkl_tensorized(s, t, rho, x, m_y, seed);
            } else if (kind == "hellinger") {
                e = hellinger_tensorized(s, t, x, m_y, seed);
            } else {
                throw std::invalid_argument("unknown divergence '" + kind + "'");
            }
            return py::make_tuple(e.value, e.mc_std_error);
        },
        py::arg("truth_json"), py::arg("params_json"), py::arg("x"), py::arg("kind") = "kl", py::arg("m_y") = 1000,
        py::arg("seed") = 0, py::arg("rho") = 0.5, "Returns (value, mc_std_error).");

    m.def(
        "model_dim",
        [](int K, int d, int p, int weight_degree, int mean_degree) {
            ModelSpec s;
            s.K = K;
            s.d = d;
            s.p = p;
            s.weight_degree = weight_degree;
            s.mean_degree = mean_degree;
            s.validate();
            return model_dim(s);
        },
        py::arg("K"), py::arg("d") = 1, py::arg("p") = 1, py::arg("weight_degree") = 1, py::arg("mean_degree") = 1);

    m.def("gamma_kappa", &gamma_kappa, py::arg("kappa"));
    m.def(
        "sigma_m",
        [](long D, double C, long n) {
            const SigmaBound b = sigma_m_bound(D, C, n);
            return py::make_tuple(b.sigma_m, b.n_sigma_sq, b.bound);
        },
        py::arg("D"), py::arg("C"), py::arg("n"), "Returns (sigma_m, n sigma_m^2, bound).");
    m.def("gaussian_hellinger_exact", &gaussian_hellinger_exact, py::arg("mu1"), py::arg("S1"), py::arg("mu2"),
          py::arg("S2"));
}
