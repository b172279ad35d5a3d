#include "hjmcal/verify.hpp"

#include "hjmcal/calibration.hpp"
#include "hjmcal/hjm_pricing.hpp"
#include "hjmcal/neural_net.hpp"
#include "hjmcal/quadrature_oracle.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace hjmcal::verify {

namespace {

double rel_diff(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Tracks the worst error of one named check.
struct Tracker {
    CheckResult r;

    Tracker(std::string name, double tol) {
        r.name = std::move(name);
        r.tolerance = tol;
        r.passed = true;
    }
    void add(double err) {
        ++r.cases;
        if (!(err <= r.tolerance)) r.passed = false;
        if (std::isnan(err) || err > r.measured) r.measured = err;
    }
    void fail(const std::string& why) {
        r.passed = false;
        if (r.detail.empty()) r.detail = why;
    }
    CheckResult done() { return r; }
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * nn::uniform01(rng);
}

ModelParams draw_theta(std::mt19937_64& rng, const calib::ThetaBox& box = {}) {
    calib::ParamVector v{};
    for (std::size_t d = 0; d < v.size(); ++d) v[d] = uniform(rng, box.lower[d], box.upper[d]);
    return ModelParams::from_array(v);
}

template <class F>
SuiteResult timed(const std::string& name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteResult s;
    s.suite = name;
    body(s.checks);
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return s;
}

// Pre-activations of every hidden unit for one input.
double min_abs_preactivation(const nn::Network& net, const Eigen::VectorXd& x) {
    Eigen::VectorXd a = x;
    if (!net.input_norm.empty())
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            const auto [lo, hi] = net.input_norm[static_cast<std::size_t>(i)];
            a[i] = (a[i] - lo) / (hi - lo);
        }
    double smallest = INFINITY;
    for (std::size_t l = 0; l + 1 < net.weights.size(); ++l) {
        Eigen::VectorXd z = net.weights[l] * a + net.biases[l];
        smallest = std::min(smallest, z.cwiseAbs().minCoeff());
        a = net.activation == nn::Activation::relu
                ? Eigen::VectorXd(z.cwiseMax(0.0))
                : Eigen::VectorXd(z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); }));
    }
    return smallest;
}

void gradcheck_architecture(const std::string& label, nn::Network net, const std::vector<std::pair<double, double>>& input_box,
                            int n_points, std::mt19937_64& rng, std::vector<CheckResult>& checks) {
    constexpr double h = 1e-5;
    constexpr double margin = 1e-3;
    Tracker params(label + "_param_gradient", 1e-5);
    Tracker inputs(label + "_input_gradient", 1e-5);
    for (int p = 0; p < n_points; ++p) {
        nn::init_glorot(net, rng());
        for (auto& b : net.biases)
            for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = uniform(rng, -0.1, 0.1);
        Eigen::VectorXd x(net.input_dim());
        int attempts = 0;
        do {
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                const auto [lo, hi] = input_box[static_cast<std::size_t>(i)];
                x[i] = uniform(rng, lo, hi);
            }
        } while (min_abs_preactivation(net, x) <= margin && ++attempts < 1000);
        if (attempts >= 1000) {
            params.fail("could not find an input away from activation kinks");
            continue;
        }
        Eigen::MatrixXd target(net.output_dim(), 1);
        for (Eigen::Index i = 0; i < target.size(); ++i) target(i) = uniform(rng, -1.0, 1.0);

        const nn::Gradients g = nn::grad(net, x, target, nn::LossKind::mse);
        Eigen::VectorXd theta = net.flat_params();
        Eigen::VectorXd fd(theta.size());
        nn::Network probe = net;
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            const double keep = theta[k];
            theta[k] = keep + h;
            probe.set_flat_params(theta);
            const double up = nn::loss_mse(nn::forward_batch(probe, x), target);
            theta[k] = keep - h;
            probe.set_flat_params(theta);
            const double down = nn::loss_mse(nn::forward_batch(probe, x), target);
            theta[k] = keep;
            fd[k] = (up - down) / (2.0 * h);
        }
        params.add((g.params - fd).norm() / std::max({g.params.norm(), fd.norm(), 1e-300}));

        Eigen::VectorXd fdx(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            // Step scaled to the raw input range so the normalised step is h.
            const auto [lo, hi] = input_box[static_cast<std::size_t>(i)];
            const double step = h * (hi - lo);
            Eigen::VectorXd xp = x, xm = x;
            xp[i] += step;
            xm[i] -= step;
            fdx[i] = (nn::loss_mse(nn::forward_batch(net, xp), target) -
                      nn::loss_mse(nn::forward_batch(net, xm), target)) /
                     (2.0 * step);
        }
        const Eigen::VectorXd gx = g.inputs.col(0);
        inputs.add((gx - fdx).norm() / std::max({gx.norm(), fdx.norm(), 1e-300}));
    }
    checks.push_back(params.done());
    checks.push_back(inputs.done());
}

}  // namespace

bool SuiteResult::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"oracle", "adjoint", "gradcheck", "linear-embed"};
    return names;
}

SuiteResult oracle_suite(std::uint64_t seed, int n_theta) {
    return timed("oracle", [&](std::vector<CheckResult>& checks) {
        std::mt19937_64 rng(seed);
        const SpaceConfig space;
        const quad::QuadratureConfig qcfg;
        const double T1 = 6.0 / 12, ell = 1.0 / 12;
        const ContractSpec contract{32.0, T1, T1, ell};

        Tracker closed("sigma_sq_closed_vs_quad", 1e-4);
        Tracker reduced("sigma_sq_quad_vs_reduced", 1e-6);
        Tracker additivity("xi_sq_additivity", 1e-12);
        Tracker xi_quad("xi_sq_vs_quadrature", 1e-8);
        Tracker stationary("sigma_sq_stationarity", 1e-12);
        for (int i = 0; i < n_theta; ++i) {
            const ModelParams theta = draw_theta(rng);
            for (double s : {0.0, 3.0 / 12}) {
                const double q = quad::sigma_sq_quad(theta, s, contract, space, qcfg);
                closed.add(std::abs(sigma_sq(theta, s, contract) - q) / q);
                reduced.add(std::abs(q - quad::sigma_sq_reduced(theta, s, contract, qcfg)) / q);
            }
            const double t1 = uniform(rng, 0.0, T1), t2 = uniform(rng, t1, T1);
            additivity.add(rel_diff(xi_sq(theta, 0.0, t1, contract) + xi_sq(theta, t1, t2, contract),
                                    xi_sq(theta, 0.0, t2, contract)));
            const double integral = quad::integrate([&](double s) { return sigma_sq(theta, s, contract); }, 0.0,
                                                    T1, {}, qcfg);
            xi_quad.add(rel_diff(xi_sq(theta, 0.0, T1, contract), integral));
            const double shift = uniform(rng, 0.0, 2.0);
            const ContractSpec later{32.0, T1 + shift, T1 + shift, ell};
            stationary.add(rel_diff(sigma_sq(theta, 0.1, contract), sigma_sq(theta, 0.1 + shift, later)));
        }
        checks.push_back(closed.done());
        checks.push_back(reduced.done());
        checks.push_back(additivity.done());
        checks.push_back(xi_quad.done());
        checks.push_back(stationary.done());

        Tracker doubling("quad_node_doubling", qcfg.rel_tol);
        for (int i = 0; i < 3; ++i) {
            const ModelParams theta = draw_theta(rng);
            const double coarse = quad::sigma_sq_quad(theta, 0.0, contract, space, qcfg);
            const double fine = quad::sigma_sq_quad(theta, 0.0, contract, space, qcfg.with_doubled_nodes());
            doubling.add(rel_diff(coarse, fine));
        }
        checks.push_back(doubling.done());

        Tracker delivery("delivery_direct_vs_parts", 1e-8);
        Tracker drift("mu_drift_vs_quadrature", 1e-10);
        const double ells[] = {1.0 / 12, 0.25, 0.5, 1.0};
        for (int i = 0; i < 50; ++i) {
            const ModelParams theta = draw_theta(rng);
            const auto g = quad::CurveSample::nelson_siegel(theta);
            const double x = uniform(rng, 0.0, 2.0);
            const double l = ells[i % 4];
            const double direct = quad::delivery_apply_direct(g, x, l, qcfg);
            delivery.add(rel_diff(direct, quad::delivery_apply_parts(g, x, l, qcfg)));
            drift.add(rel_diff(mu_drift(theta, ContractSpec{32.0, x, x, l}, 0.0), direct));
        }
        checks.push_back(delivery.done());
        checks.push_back(drift.done());

        Tracker diagonal("a_kernel_diagonal", 1e-10);
        Tracker kernel("covariance_kernel_vs_quadrature", 1e-8);
        for (int i = 0; i < 20; ++i) {
            const double k = uniform(rng, 8.0, 9.0);
            const double u = uniform(rng, 0.0, 2.0);
            diagonal.add(rel_diff(quad::a_kernel(k, u, u, qcfg), 4.0 / (3.0 * k)));
            const double d = uniform(rng, 0.0, 2.5);
            kernel.add(std::abs(covariance_kernel(k, d) - quad::covariance_overlap(k, d, 0.0, qcfg)) /
                       covariance_kernel(k, 0.0));
        }
        checks.push_back(diagonal.done());
        checks.push_back(kernel.done());
    });
}

SuiteResult adjoint_suite(std::uint64_t seed, int n_pairs) {
    return timed("adjoint", [&](std::vector<CheckResult>& checks) {
        std::mt19937_64 rng(seed);
        const SpaceConfig space;
        const quad::QuadratureConfig qcfg;
        Tracker identity("adjoint_identity", 1e-6);
        Tracker linear("vol_op_additivity", 1e-12);
        for (int i = 0; i < n_pairs; ++i) {
            const ModelParams theta = draw_theta(rng);
            space.validate_for(theta);
            const double c = uniform(rng, -1.0, 2.0);
            const double w = uniform(rng, 0.2, 0.4);
            const quad::RealFunction h = [c, w](double y) { return std::exp(-0.5 * (y - c) * (y - c) / (w * w)); };
            const auto f = quad::CurveSample::nelson_siegel(theta, space.tail_cutoff);

            const double lhs = quad::inner_alpha(quad::vol_op_image(theta, h, space, qcfg), f, qcfg, space);
            const double breaks[] = {-1.0, 0.0, 1.0};
            const double rhs = quad::integrate(
                [&](double y) { return h(y) * quad::vol_op_adjoint(theta, f, y, space, qcfg); }, -space.gamma,
                space.gamma, breaks, qcfg);
            identity.add(std::abs(lhs - rhs) / std::abs(rhs));

            const quad::RealFunction h2 = [c](double y) { return std::cos(y - c); };
            const double x = uniform(rng, 0.0, 3.0);
            const double both = quad::vol_op_apply(theta, [&](double y) { return h(y) + h2(y); }, x, space, qcfg);
            const double sum = quad::vol_op_apply(theta, h, x, space, qcfg) + quad::vol_op_apply(theta, h2, x, space, qcfg);
            linear.add(std::abs(both - sum) / std::max(1.0, std::abs(sum)));
        }
        checks.push_back(identity.done());
        checks.push_back(linear.done());

        Tracker constant("cov_apply_constant", 1e-10);
        Tracker positive("cov_apply_positivity", 0.0);
        for (int i = 0; i < 5; ++i) {
            const double k = uniform(rng, 8.0, 9.0);
            // With gamma = 50 the boundary term e^{-k gamma} is below double precision.
            constant.add(rel_diff(quad::cov_apply(k, [](double) { return 1.0; }, uniform(rng, -1.0, 1.0), 50.0, qcfg),
                                  2.0 / k));
            const double value = quad::cov_apply(
                k, [](double y) { return y * y * std::exp(-y * y); }, uniform(rng, -3.0, 3.0), 4.0, qcfg);
            positive.add(value >= 0.0 ? 0.0 : -value);
        }
        checks.push_back(constant.done());
        checks.push_back(positive.done());
    });
}

SuiteResult gradcheck_suite(std::uint64_t seed, int n_points) {
    return timed("gradcheck", [&](std::vector<CheckResult>& checks) {
        std::mt19937_64 rng(seed);
        const calib::ThetaBox box;
        const calib::LambdaRanges ranges;

        const nn::Network grid_net = calib::make_grid_network(box, 0);
        const nn::Network point_net = calib::make_pointwise_network(box, ranges, 0);

        Tracker grid_count("grid_parameter_count", 0.0);
        grid_count.add(std::abs(static_cast<double>(grid_net.parameter_count()) - 4053.0));
        grid_count.r.detail = "M = " + std::to_string(grid_net.parameter_count());
        Tracker point_count("pointwise_parameter_count", 0.0);
        point_count.add(std::abs(static_cast<double>(point_net.parameter_count()) - 2191.0));
        point_count.r.detail = "M = " + std::to_string(point_net.parameter_count());
        checks.push_back(grid_count.done());
        checks.push_back(point_count.done());

        gradcheck_architecture("grid_relu", grid_net, grid_net.input_norm, n_points, rng, checks);
        gradcheck_architecture("pointwise_elu", point_net, point_net.input_norm, n_points, rng, checks);
    });
}

SuiteResult linear_embed_suite(std::uint64_t seed, int n_matrices) {
    return timed("linear-embed", [&](std::vector<CheckResult>& checks) {
        std::mt19937_64 rng(seed);
        Tracker exact("linear_embed_exactness", 1e-12);
        Tracker zero("linear_embed_zero_matrix", 0.0);
        for (int m = 0; m < n_matrices; ++m) {
            const int p = 1 + static_cast<int>(nn::uniform_below(rng, 5));
            const int d = 1 + static_cast<int>(nn::uniform_below(rng, 5));
            Eigen::MatrixXd A(p, d);
            for (Eigen::Index i = 0; i < A.size(); ++i) A(i) = uniform(rng, -2.0, 2.0);
            for (int depth : {2, 3, 4}) {
                std::vector<int> dims{d};
                for (int l = 1; l < depth; ++l) dims.push_back(2 * d + static_cast<int>(nn::uniform_below(rng, 4)));
                dims.push_back(p);
                const nn::Network net = nn::linear_embed(A, depth, dims);
                Eigen::MatrixXd X(d, 1000);
                for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = uniform(rng, -5.0, 5.0);
                const Eigen::MatrixXd out = nn::forward_batch(net, X);
                const Eigen::MatrixXd ref = A * X;
                exact.add(((out - ref).array().abs() / (1.0 + ref.array().abs())).maxCoeff());
                if (m == 0) {
                    const nn::Network z = nn::linear_embed(Eigen::MatrixXd::Zero(p, d), depth, dims);
                    zero.add(nn::forward_batch(z, X).cwiseAbs().maxCoeff());
                }
            }
        }
        checks.push_back(exact.done());
        checks.push_back(zero.done());
    });
}

std::vector<SuiteResult> run(const std::string& suite, std::uint64_t seed) {
    if (suite == "all") {
        std::vector<SuiteResult> out;
        for (const auto& name : suite_names()) out.push_back(run(name, seed).front());
        return out;
    }
    if (suite == "oracle") return {oracle_suite(seed)};
    if (suite == "adjoint") return {adjoint_suite(seed)};
    if (suite == "gradcheck") return {gradcheck_suite(seed)};
    if (suite == "linear-embed") return {linear_embed_suite(seed)};
    throw std::invalid_argument("unknown suite '" + suite + "' (expected oracle, adjoint, gradcheck, linear-embed or all)");
}

std::string to_json(const std::vector<SuiteResult>& results) {
    nlohmann::ordered_json doc;
    bool all = true;
    auto suites = nlohmann::ordered_json::array();
    for (const auto& s : results) {
        nlohmann::ordered_json js;
        js["suite"] = s.suite;
        js["passed"] = s.passed();
        js["seconds"] = s.seconds;
        auto checks = nlohmann::ordered_json::array();
        for (const auto& c : s.checks) {
            nlohmann::ordered_json jc;
            jc["name"] = c.name;
            jc["passed"] = c.passed;
            jc["measured"] = c.measured;
            jc["tolerance"] = c.tolerance;
            jc["cases"] = c.cases;
            if (!c.detail.empty()) jc["detail"] = c.detail;
            checks.push_back(std::move(jc));
        }
        js["checks"] = std::move(checks);
        all = all && s.passed();
        suites.push_back(std::move(js));
    }
    doc["passed"] = all;
    doc["suites"] = std::move(suites);
    return doc.dump(1) + "\n";
}

}  // namespace hjmcal::verify
