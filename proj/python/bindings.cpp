#include "hjmcal/calibration.hpp"
#include "hjmcal/hjm_pricing.hpp"
#include "hjmcal/neural_net.hpp"
#include "hjmcal/quadrature_oracle.hpp"
#include "hjmcal/verify.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace hjmcal;

namespace {

ModelParams params_from(const std::array<double, 7>& v) { return ModelParams::from_array(v); }

ContractSpec contract_from(double strike, double tau, double delivery_len) {
    return ContractSpec{strike, tau, tau, delivery_len};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Forward-curve option pricing, quadrature oracles and neural calibration";

    py::class_<ModelParams>(m, "ModelParams")
        .def(py::init(&params_from), py::arg("theta"))
        .def_readwrite("a", &ModelParams::a)
        .def_readwrite("b", &ModelParams::b)
        .def_readwrite("k", &ModelParams::k)
        .def_readwrite("alpha0", &ModelParams::alpha0)
        .def_readwrite("alpha1", &ModelParams::alpha1)
        .def_readwrite("alpha2", &ModelParams::alpha2)
        .def_readwrite("alpha3", &ModelParams::alpha3)
        .def("to_list", &ModelParams::to_array)
        .def("__repr__", [](const ModelParams& p) {
            return "ModelParams(" + py::repr(py::cast(p.to_array())).cast<std::string>() + ")";
        });

    // Pricing. Contracts start delivery at the option maturity.
    m.def(
        "call_price",
        [](const std::array<double, 7>& theta, double strike, double tau, double delivery_len, double rate) {
            return call_price(params_from(theta), contract_from(strike, tau, delivery_len), MarketConfig{0.0, rate});
        },
        py::arg("theta"), py::arg("strike"), py::arg("tau"), py::arg("delivery_len") = 1.0 / 12,
        py::arg("rate") = 0.0);
    m.def(
        "sigma_sq",
        [](const std::array<double, 7>& theta, double s, double t1, double delivery_len) {
            return sigma_sq(params_from(theta), s, ContractSpec{0.0, t1, t1, delivery_len});
        },
        py::arg("theta"), py::arg("s"), py::arg("t1"), py::arg("delivery_len") = 1.0 / 12);
    m.def(
        "xi_sq",
        [](const std::array<double, 7>& theta, double tau, double delivery_len) {
            return xi_sq(params_from(theta), 0.0, tau, ContractSpec{0.0, tau, tau, delivery_len});
        },
        py::arg("theta"), py::arg("tau"), py::arg("delivery_len") = 1.0 / 12);
    m.def(
        "mu_drift",
        [](const std::array<double, 7>& theta, double t1, double delivery_len) {
            return mu_drift(params_from(theta), ContractSpec{0.0, t1, t1, delivery_len}, 0.0);
        },
        py::arg("theta"), py::arg("t1"), py::arg("delivery_len") = 1.0 / 12);
    m.def("covariance_kernel", &covariance_kernel, py::arg("k"), py::arg("d"));

    m.def(
        "sigma_sq_quad",
        [](const std::array<double, 7>& theta, double s, double t1, double delivery_len, int nodes) {
            quad::QuadratureConfig cfg;
            cfg.nodes_per_dim = nodes;
            return quad::sigma_sq_quad(params_from(theta), s, ContractSpec{0.0, t1, t1, delivery_len},
                                       SpaceConfig{}, cfg);
        },
        py::arg("theta"), py::arg("s"), py::arg("t1"), py::arg("delivery_len") = 1.0 / 12,
        py::arg("nodes_per_dim") = 16);

    // Datasets and calibration helpers on the default box and contract grid.
    m.def(
        "price_grid",
        [](const std::array<double, 7>& theta) { return calib::price_grid(params_from(theta), calib::ContractGrid{}); },
        py::arg("theta"));
    m.def(
        "sample_theta",
        [](int n, int grid_points, std::uint64_t seed) {
            std::vector<std::array<double, 7>> out;
            for (const auto& p : calib::sample_theta(calib::ThetaBox{}, n, grid_points, seed)) out.push_back(p.to_array());
            return out;
        },
        py::arg("n"), py::arg("grid_points_per_dim") = 0, py::arg("seed") = 0);
    m.def("cluster_assign", &calib::cluster_assign, py::arg("tau"), py::arg("strike"));
    m.def(
        "make_bidask",
        [](const calib::PriceGrid& prices, double lo, double hi) {
            const auto b = calib::make_bidask(prices, lo, hi);
            return py::make_tuple(b.bid, b.ask);
        },
        py::arg("prices"), py::arg("spread_lo") = 0.9, py::arg("spread_hi") = 1.1);
    m.def(
        "parameter_count", [](const std::vector<int>& dims) { return nn::parameter_count(dims); },
        py::arg("dims"));

    py::class_<nn::Network>(m, "Network")
        .def_static("load", &nn::load_network, py::arg("path"))
        .def_static("from_json", &nn::deserialize, py::arg("document"))
        .def("to_json", &nn::serialize)
        .def_readonly("dims", &nn::Network::dims)
        .def_property_readonly("activation", [](const nn::Network& n) { return nn::to_string(n.activation); })
        .def_property_readonly("parameter_count", &nn::Network::parameter_count)
        .def("forward", [](const nn::Network& n, const Eigen::VectorXd& x) { return nn::forward(n, x); }, py::arg("x"))
        .def("forward_batch", &nn::forward_batch, py::arg("inputs"));
    m.def(
        "grid_network", [](std::uint64_t seed) { return calib::make_grid_network(calib::ThetaBox{}, seed); },
        py::arg("seed") = 0);
    m.def(
        "pointwise_network",
        [](std::uint64_t seed) {
            return calib::make_pointwise_network(calib::ThetaBox{}, calib::LambdaRanges{}, seed);
        },
        py::arg("seed") = 0);

    m.def(
        "verify",
        [](const std::string& suite, std::uint64_t seed) {
            const auto results = verify::run(suite, seed);
            py::dict out;
            for (const auto& s : results) out[py::str(s.suite)] = s.passed();
            return out;
        },
        py::arg("suite") = "all", py::arg("seed") = 0);
}
