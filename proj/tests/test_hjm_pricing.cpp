#include "doctest.h"
#include "oracles.hpp"

#include "hjmcal/hjm_pricing.hpp"
#include "hjmcal/quadrature_oracle.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace hjmcal;
using oracle::rel;

namespace {

ContractSpec contract(double t1, double strike = 32.0, double ell = 1.0 / 12) { return {strike, t1, t1, ell}; }

}  // namespace

TEST_CASE("seasonal_a") {
    CHECK(seasonal_a({0.3, {}}, 0.7) == 0.3);
    CHECK(seasonal_a({0.3, {{0.1, 0.0}}}, 0.25) == doctest::Approx(0.4).epsilon(1e-15));
    const double t = 1.0 / 3;
    const double want = 0.3 + 0.1 * std::sin(2 * std::numbers::pi * t) + 0.05 * std::cos(2 * std::numbers::pi * t);
    CHECK(seasonal_a({0.3, {{0.1, 0.05}}}, t) == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("nelson-siegel curve") {
    const ModelParams p = oracle::box_midpoint();
    CHECK(ns_eval(p, 0.0) == doctest::Approx(p.alpha0 + p.alpha1).epsilon(1e-15));
    CHECK(std::abs(ns_eval(p, 50.0) - p.alpha0) < 1e-10);
    CHECK(ns_eval(p, 0.2) == doctest::Approx(oracle::ns_curve(p, 0.2)).epsilon(1e-14));
    CHECK(ns_derivative(p, 0.3) ==
          doctest::Approx(oracle::central_difference([&](double x) { return oracle::ns_curve(p, x); }, 0.3, 1e-5))
              .epsilon(1e-8));
}

TEST_CASE("mu_drift") {
    ModelParams flat = oracle::box_midpoint();
    flat.alpha1 = flat.alpha2 = 0.0;
    CHECK(mu_drift(flat, contract(0.25), 0.0) == doctest::Approx(flat.alpha0).epsilon(1e-14));

    const ModelParams p = oracle::box_midpoint();
    const double t1 = 3.0 / 12, ell = 1.0 / 12;
    const double want = oracle::integrate([&](double x) { return oracle::ns_curve(p, x); }, t1, t1 + ell) / ell;
    CHECK(rel(mu_drift(p, contract(t1), 0.0), want) <= 1e-10);

    CHECK(std::abs(mu_drift(p, contract(t1, 32.0, 1e-8), 0.0) - ns_eval(p, t1)) <= 1e-6);

    SUBCASE("evaluation time shifts the window") {
        const double t = 0.1;
        const double w = oracle::integrate([&](double x) { return oracle::ns_curve(p, x); }, t1 - t, t1 - t + ell) / ell;
        CHECK(rel(mu_drift(p, contract(t1), t), w) <= 1e-10);
    }
}

TEST_CASE("elementary kernels") {
    CHECK(omega(0.0) == 1.0);
    CHECK(omega(1.0) == 0.0);
    CHECK(omega(-1.0) == 0.0);
    CHECK(omega(0.3) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(omega(2.0) == 0.0);

    const ModelParams p = oracle::box_midpoint();
    CHECK(vol_kernel(p, 2.0, 0.5) == 0.0);
    CHECK(vol_kernel(p, 0.4, 0.4) == doctest::Approx(0.35 * std::exp(-0.65 * 0.4)).epsilon(1e-15));
    CHECK(vol_kernel(p, 0.5, 0.2) == doctest::Approx(0.35 * std::exp(-0.325) * 0.7).epsilon(1e-14));

    CHECK(cov_kernel(8.5, 0.3, 0.3) == 1.0);
    CHECK(cov_kernel(8.5, 0.1, 0.2) == doctest::Approx(std::exp(-0.85)).epsilon(1e-14));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 50; ++i) {
        const double x = u(rng), y = u(rng);
        CHECK(cov_kernel(8.5, x, y) == cov_kernel(8.5, y, x));
    }
}

TEST_CASE("covariance kernel against nested integration") {
    // A(d) = int int omega(z) e^{-k|z - y|} omega(d + y) dy dz.
    for (double k : {0.5, 8.0, 8.5, 9.0}) {
        for (double d : {0.0, 0.3, 0.9, 1.0, 1.4, 1.95, 2.5, -0.7}) {
            auto inner = [&](double z) {
                auto f = [&](double y) { return std::exp(-k * std::abs(z - y)) * omega(d + y); };
                return oracle::integrate_fixed(f, {-1.0 - d, -d, std::clamp(z, -1.0 - d, 1.0 - d), 1.0 - d});
            };
            std::vector<double> outer{-1.0, 0.0, 1.0};
            for (double e : {-1.0 - d, -d, 1.0 - d})
                if (e > -1.0 && e < 1.0) outer.push_back(e);
            const double want = oracle::integrate_fixed([&](double z) { return omega(z) * inner(z); }, outer);
            const double got = covariance_kernel(k, d);
            if (want == 0.0) {
                CHECK(std::abs(got) < 1e-15);
            } else {
                CHECK(rel(got, want) <= 1e-9);
            }
        }
    }
    CHECK(covariance_kernel(8.5, 3.0) < covariance_kernel(8.5, 1.0));
}

TEST_CASE("sigma_sq") {
    ModelParams p = oracle::box_midpoint();
    ModelParams zero = p;
    zero.a = 0.0;
    CHECK(sigma_sq(zero, 0.0, contract(0.5)) == 0.0);

    // a^2 / l^2 int int e^{-b(u+v)} A(u - v) du dv over [x, x + l]^2.
    const double x = 0.5, ell = 1.0 / 12;
    auto outer = [&](double u) {
        return oracle::integrate_fixed(
            [&](double v) { return std::exp(-p.b * (u + v)) * covariance_kernel(p.k, u - v); }, {x, u, x + ell});
    };
    const double want = p.a * p.a / (ell * ell) * oracle::integrate_fixed(outer, {x, x + ell});
    CHECK(rel(sigma_sq(p, 0.0, contract(0.5)), want) <= 1e-10);

    const double quad = quad::sigma_sq_quad(p, 0.0, contract(0.5), SpaceConfig{});
    CHECK(rel(sigma_sq(p, 0.0, contract(0.5)), quad) <= 1e-4);

    const double s1 = 0.1, s2 = 0.35;
    CHECK(sigma_sq(p, s2, contract(0.5)) / sigma_sq(p, s1, contract(0.5)) ==
          doctest::Approx(std::exp(-2 * p.b * (0.5 - s2)) / std::exp(-2 * p.b * (0.5 - s1))).epsilon(1e-12));

    SUBCASE("strictly increasing in s") {
        double prev = 0.0;
        for (double s = 0.0; s <= 0.5; s += 0.05) {
            const double v = sigma_sq(p, s, contract(0.5));
            CHECK(v > prev);
            prev = v;
        }
    }
    SUBCASE("stationarity") {
        CHECK(sigma_sq(p, 0.2, contract(0.7)) == doctest::Approx(sigma_sq(p, 0.0, contract(0.5))).epsilon(1e-13));
    }
    SUBCASE("rejections") {
        ModelParams bad = p;
        bad.b = 0.0;
        CHECK_THROWS(sigma_sq(bad, 0.0, contract(0.5)));
        bad = p;
        bad.k = 0.0;
        CHECK_THROWS(sigma_sq(bad, 0.0, contract(0.5)));
        CHECK_THROWS(sigma_sq(p, 0.0, contract(0.5, 32.0, 0.0)));
        CHECK_THROWS(sigma_sq(p, 0.6, contract(0.5)));
    }
}

TEST_CASE("by-parts form") {
    for (double b : {0.5, 0.6, 0.7, 0.8})
        for (double ell : {1.0 / 12, 0.25, 0.5, 1.0}) CHECK(by_parts_bracket(b, ell) > 0.0);
    const ModelParams p = oracle::box_midpoint();
    CHECK(sigma_sq_by_parts(p, 0.0, contract(0.5)) > 0.0);
}

TEST_CASE("xi_sq") {
    const ModelParams p = oracle::box_midpoint();
    const ContractSpec c = contract(0.5);
    CHECK(xi_sq(p, 0.3, 0.3, c) == 0.0);
    const double whole = xi_sq(p, 0.0, 0.5, c);
    CHECK(rel(xi_sq(p, 0.0, 0.2, c) + xi_sq(p, 0.2, 0.5, c), whole) <= 1e-12);
    const double want = oracle::integrate([&](double s) { return sigma_sq(p, s, c); }, 0.0, 0.5);
    CHECK(rel(whole, want) <= 1e-8);
}

TEST_CASE("call_price") {
    ModelParams degenerate{0.0, 0.65, 8.5, 32.0, 0.0, 0.0, 4.75};
    CHECK(call_price(degenerate, contract(0.5, 31.6), {}) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(call_price(degenerate, contract(0.5, 32.4), {}) == 0.0);

    const ModelParams p = oracle::box_midpoint();
    SUBCASE("at the money") {
        const ContractSpec c0 = contract(0.25, 32.0);
        const double mu = mu_drift(p, c0, 0.0);
        const ContractSpec atm = contract(0.25, mu);
        const double xi = std::sqrt(xi_sq(p, 0.0, 0.25, atm));
        const MarketConfig m{0.0, 0.03};
        CHECK(call_price(p, atm, m) == doctest::Approx(std::exp(-0.03 * 0.25) * xi / std::sqrt(2 * std::numbers::pi))
                                           .epsilon(1e-12));
    }
    SUBCASE("gaussian expectation oracle") {
        const ContractSpec c = contract(0.25, 32.4);
        const double mu = mu_drift(p, c, 0.0);
        const double xi = std::sqrt(xi_sq(p, 0.0, 0.25, c));
        CHECK(rel(call_price(p, c, {}), oracle::call_expectation(mu, xi, 32.4, 1.0)) <= 1e-8);
    }
    SUBCASE("monotone in strike, bounded slope, above intrinsic") {
        const MarketConfig m{0.0, 0.02};
        double prev = 1e9;
        for (double k = 31.0; k <= 34.0; k += 0.1) {
            const double v = call_price(p, contract(0.5, k), m);
            CHECK(v < prev);
            const double slope = (call_price(p, contract(0.5, k + 1e-4), m) - call_price(p, contract(0.5, k - 1e-4), m)) / 2e-4;
            CHECK(slope <= 0.0);
            CHECK(slope >= -std::exp(-0.02 * 0.5) - 1e-6);
            const double mu = mu_drift(p, contract(0.5, k), 0.0);
            CHECK(v >= std::exp(-0.02 * 0.5) * std::max(mu - k, 0.0));
            prev = v;
        }
    }
    SUBCASE("increasing in volatility level") {
        ModelParams q = p;
        const double atm = mu_drift(p, contract(0.5), 0.0);
        double prev = 0.0;
        for (double a = 0.1; a <= 0.6; a += 0.1) {
            q.a = a;
            const double v = call_price(q, contract(0.5, atm + 0.05), {});
            CHECK(v > prev);
            prev = v;
        }
    }
}

TEST_CASE("normal cdf") {
    CHECK(normal_cdf(0.0) == 0.5);
    for (double x : {-5.0, -1.3, 0.2, 2.7}) {
        const double want = oracle::integrate(oracle::gaussian_density, -40.0, x);
        CHECK(std::abs(normal_cdf(x) - want) <= 1e-15);
    }
}

TEST_CASE("space config") {
    SpaceConfig s;
    CHECK_NOTHROW(s.validate());
    CHECK_NOTHROW(s.validate_for(oracle::box_midpoint()));
    ModelParams p = oracle::box_midpoint();
    p.b = 0.2;
    CHECK_THROWS(s.validate_for(p));
}
