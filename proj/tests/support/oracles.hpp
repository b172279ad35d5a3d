#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library's own quadrature code.

#include "hjmcal/hjm_pricing.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

// Adaptive Gauss-Kronrod; the integrands used here are smooth on each piece.
inline double integrate(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-13) {
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 8, tol, &err);
}

// Fixed 30-point Gauss rule, for the inner level of nested integrals.
inline double integrate_fixed(const std::function<double(double)>& f, std::vector<double> pts) {
    std::sort(pts.begin(), pts.end());
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        if (pts[i + 1] > pts[i]) sum += boost::math::quadrature::gauss<double, 30>::integrate(f, pts[i], pts[i + 1]);
    return sum;
}

// Piecewise integration with user supplied break points.
inline double integrate(const std::function<double(double)>& f, std::vector<double> pts, double tol = 1e-13) {
    std::sort(pts.begin(), pts.end());
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        if (pts[i + 1] > pts[i]) sum += integrate(f, pts[i], pts[i + 1], tol);
    return sum;
}

inline double gaussian_density(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// e^{-r T} E[max(mu + xi X - K, 0)], X standard normal. The payoff kink sits
// at x* = (K - mu) / xi; the integrand is smooth on [x*, x* + 40].
inline double call_expectation(double mu, double xi, double strike, double discount) {
    if (xi == 0.0) return discount * std::max(mu - strike, 0.0);
    const double lo = std::max((strike - mu) / xi, -40.0);
    auto f = [&](double x) { return (mu + xi * x - strike) * gaussian_density(x); };
    const double hi = std::max(lo, 0.0) + 40.0;
    std::vector<double> pts{lo};
    for (double p = std::ceil(lo); p < hi; p += 1.0)
        if (p > lo) pts.push_back(p);
    pts.push_back(hi);
    return discount * integrate(f, pts);
}

inline double ns_curve(const hjmcal::ModelParams& p, double x) {
    return p.alpha0 + p.alpha1 * std::exp(-p.alpha3 * x) + p.alpha2 * p.alpha3 * x * std::exp(-p.alpha3 * x);
}

inline double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

inline hjmcal::ModelParams box_midpoint() { return {0.35, 0.65, 8.5, 34.45, -1.25, 0.7, 4.75}; }

inline hjmcal::ModelParams random_theta(std::mt19937_64& rng) {
    static constexpr double lo[7] = {0.2, 0.5, 8.0, 34.2, -1.5, 0.2, 4.5};
    static constexpr double hi[7] = {0.5, 0.8, 9.0, 34.7, -1.0, 1.2, 5.0};
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::array<double, 7> v{};
    for (int i = 0; i < 7; ++i) v[i] = lo[i] + (hi[i] - lo[i]) * u(rng);
    return hjmcal::ModelParams::from_array(v);
}

// Central difference of f at x.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace oracle
