#include "hjmcal/hjm_pricing.hpp"

#include "hjmcal/gauss_legendre.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hjmcal {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

void require_variance_inputs(const ModelParams& params, const ContractSpec& contract) {
    params.validate();
    require(contract.delivery_len > 0.0, "delivery length must be positive");
}

// sinh(z) / z, accurate near zero.
double sinhc(double z) {
    if (std::abs(z) < 1e-4) return 1.0 + z * z / 6.0;
    return std::sinh(z) / z;
}

// Sigma^2 at s = T1 (time to delivery zero): 2 a^2 e^{-bl} / l^2 * int_0^l A(r) sinh(b(l - r)) / b dr.
double sigma_sq_at_delivery(const ModelParams& p, double ell) {
    const auto& rule = gauss_legendre(20);
    const double breaks[] = {1.0, 2.0};
    const auto pieces = panel_edges(0.0, ell, breaks);
    // A(r) contains e^{-k r}; keep k * panel width moderate.
    const double max_width = std::min(0.25, 2.0 / p.k);

    double integral = 0.0;
    for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
        const double lo = pieces[i];
        const double hi = pieces[i + 1];
        const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / max_width)));
        const double h = (hi - lo) / panels;
        for (int j = 0; j < panels; ++j) {
            integral += rule.integrate(
                [&](double r) {
                    const double w = ell - r;
                    return covariance_kernel(p.k, r) * w * sinhc(p.b * w);
                },
                lo + j * h, lo + (j + 1) * h);
        }
    }
    return 2.0 * p.a * p.a * std::exp(-p.b * ell) / (ell * ell) * integral;
}

}  // namespace

ModelParams ModelParams::from_array(const std::array<double, size>& v) {
    return ModelParams{v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
}

std::array<double, ModelParams::size> ModelParams::to_array() const {
    return {a, b, k, alpha0, alpha1, alpha2, alpha3};
}

void ModelParams::validate() const {
    for (double v : to_array()) require(std::isfinite(v), "model parameters must be finite");
    require(a >= 0.0, "volatility level a must be nonnegative");
    require(b > 0.0, "Samuelson rate b must be positive");
    require(k > 0.0, "covariance rate k must be positive");
    require(alpha3 > 0.0, "Nelson-Siegel rate alpha3 must be positive");
}

void ContractSpec::validate() const {
    require(strike > 0.0, "strike must be positive");
    require(delivery_len > 0.0, "delivery length must be positive");
    require(maturity >= 0.0, "maturity must be nonnegative");
    require(delivery_start >= maturity, "delivery must not start before the option matures");
}

void SpaceConfig::validate() const {
    require(alpha_exp > 0.0, "alpha_exp must be positive");
    require(gamma > 0.0, "gamma must be positive");
    require(tail_cutoff > 0.0, "tail_cutoff must be positive");
}

void SpaceConfig::validate_for(const ModelParams& params) const {
    validate();
    params.validate();
    require(alpha_exp < 2.0 * params.b, "alpha_exp must be below 2b");
    require(alpha_exp < 2.0 * params.alpha3, "alpha_exp must be below 2 alpha3");
}

double seasonal_a(const SeasonalCoefficients& coeffs, double t) {
    double value = coeffs.base;
    for (std::size_t j = 0; j < coeffs.harmonics.size(); ++j) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(j + 1) * t;
        value += coeffs.harmonics[j].first * std::sin(w) + coeffs.harmonics[j].second * std::cos(w);
    }
    return value;
}

double ns_eval(const ModelParams& p, double x) {
    return p.alpha0 + (p.alpha1 + p.alpha2 * p.alpha3 * x) * std::exp(-p.alpha3 * x);
}

double ns_derivative(const ModelParams& p, double x) {
    return p.alpha3 * std::exp(-p.alpha3 * x) * (p.alpha2 - p.alpha1 - p.alpha2 * p.alpha3 * x);
}

double mu_drift(const ModelParams& p, const ContractSpec& contract, double t) {
    require(p.alpha3 > 0.0, "Nelson-Siegel rate alpha3 must be positive");
    require(contract.delivery_len > 0.0, "delivery length must be positive");
    require(t <= contract.delivery_start, "evaluation time after delivery start");
    const double x = contract.delivery_start - t;
    const double ell = contract.delivery_len;
    const double z = p.alpha3 * ell;
    // (1 - e^{-z}) / z written with expm1 so that l -> 0 recovers ns_eval(x).
    const double avg_decay = -std::expm1(-z) / z;
    return p.alpha0 + std::exp(-p.alpha3 * x) *
                          ((p.alpha1 + p.alpha2 + p.alpha2 * p.alpha3 * x) * avg_decay -
                           p.alpha2 * std::exp(-z));
}

double omega(double x) {
    const double ax = std::abs(x);
    return ax <= 1.0 ? 1.0 - ax : 0.0;
}

double vol_kernel(const ModelParams& p, double x, double y) {
    return p.a * std::exp(-p.b * x) * omega(x - y);
}

double cov_kernel(double k, double x, double y) {
    return std::exp(-k * std::abs(x - y));
}

double covariance_kernel(double k, double d) {
    require(k > 0.0, "covariance rate k must be positive");
    d = std::abs(d);
    const double k3 = k * k * k;
    const double k4 = k3 * k;
    auto e = [k](double s) { return std::exp(-k * s); };
    if (d <= 1.0) {
        return (d * d * d - 2.0 * d * d + 4.0 / 3.0) / k + (6.0 * d - 4.0) / k3 +
               (-4.0 * e(1.0 - d) + e(2.0 - d) + 6.0 * e(d) - 4.0 * e(1.0 + d) + e(2.0 + d)) / k4;
    }
    if (d <= 2.0) {
        const double c = 2.0 - d;
        return c * c * c / (3.0 * k) + (4.0 - 2.0 * d) / k3 +
               (e(2.0 - d) - 4.0 * e(d - 1.0) + 6.0 * e(d) - 4.0 * e(d + 1.0) + e(d + 2.0)) / k4;
    }
    return (e(d - 2.0) - 4.0 * e(d - 1.0) + 6.0 * e(d) - 4.0 * e(d + 1.0) + e(d + 2.0)) / k4;
}

double sigma_sq(const ModelParams& params, double s, const ContractSpec& contract) {
    require_variance_inputs(params, contract);
    require(s <= contract.delivery_start, "s must not exceed the delivery start");
    const double x = contract.delivery_start - s;
    return std::exp(-2.0 * params.b * x) * sigma_sq_at_delivery(params, contract.delivery_len);
}

double xi_sq(const ModelParams& params, double t, double tau, const ContractSpec& contract) {
    require_variance_inputs(params, contract);
    require(t <= tau, "tau must not precede t");
    require(tau <= contract.delivery_start, "tau must not exceed the delivery start");
    const double b = params.b;
    const double T1 = contract.delivery_start;
    // (e^{-2b(T1 - tau)} - e^{-2b(T1 - t)}) / (2b), with expm1 for short intervals.
    const double window = -std::exp(-2.0 * b * (T1 - tau)) * std::expm1(-2.0 * b * (tau - t)) / (2.0 * b);
    return sigma_sq_at_delivery(params, contract.delivery_len) * window;
}

double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double call_price(const ModelParams& params, const ContractSpec& contract,
                  const MarketConfig& market) {
    params.validate();
    contract.validate();
    const double t = market.eval_time;
    const double tau = contract.maturity;
    require(t <= tau, "evaluation time after option maturity");

    const double discount = std::exp(-market.rate * (tau - t));
    const double mu = mu_drift(params, contract, t);
    const double xi = std::sqrt(xi_sq(params, t, tau, contract));
    const double moneyness = mu - contract.strike;
    if (xi == 0.0) return discount * std::max(moneyness, 0.0);
    const double d = moneyness / xi;
    return discount * (xi * normal_pdf(d) + moneyness * normal_cdf(d));
}

double by_parts_bracket(double b, double ell) {
    const double b2 = b * b;
    return (2.0 / 3.0) * (b2 + 3.0) * (1.0 + std::exp(-2.0 * b * ell)) -
           2.0 * std::exp(-b * ell) *
               ((b2 / 6.0) * (3.0 * (ell - 2.0) * ell * ell + 4.0) - 3.0 * ell + 2.0);
}

double sigma_sq_by_parts(const ModelParams& params, double s, const ContractSpec& contract) {
    require_variance_inputs(params, contract);
    require(s <= contract.delivery_start, "s must not exceed the delivery start");
    const double b = params.b;
    const double ell = contract.delivery_len;
    return 2.0 * params.a * params.a / (params.k * std::pow(b, 4) * ell * ell) *
           std::exp(-2.0 * b * (contract.delivery_start - s)) * by_parts_bracket(b, ell);
}

}  // namespace hjmcal
