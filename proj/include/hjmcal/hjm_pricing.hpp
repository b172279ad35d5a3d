#pragma once

#include <array>
#include <utility>
#include <vector>

namespace hjmcal {

// Parameter vector theta = (a, b, k, alpha0, alpha1, alpha2, alpha3).
//   a       volatility level (per sqrt year)
//   b       Samuelson decay rate (1/year)
//   k       covariance decay rate (1/year)
//   alpha*  Nelson-Siegel levels (price units) and decay rate alpha3 (1/year)
struct ModelParams {
    double a = 0.0;
    double b = 0.0;
    double k = 0.0;
    double alpha0 = 0.0;
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double alpha3 = 0.0;

    static constexpr std::size_t size = 7;

    static ModelParams from_array(const std::array<double, size>& v);
    std::array<double, size> to_array() const;

    // Throws std::invalid_argument unless a >= 0, b > 0, k > 0, alpha3 > 0.
    void validate() const;

    bool operator==(const ModelParams&) const = default;
};

// Option on a forward-style swap: strike K, option maturity tau, delivery
// over [delivery_start, delivery_start + delivery_len].
struct ContractSpec {
    double strike = 0.0;
    double maturity = 0.0;
    double delivery_start = 0.0;
    double delivery_len = 0.0;

    void validate() const;
};

struct MarketConfig {
    double eval_time = 0.0;
    double rate = 0.0;
};

// a(t) = base + sum_j (s_j sin(2 pi j t) + c_j cos(2 pi j t)), j = 1..J.
struct SeasonalCoefficients {
    double base = 0.0;
    std::vector<std::pair<double, double>> harmonics;  // (s_j, c_j)
};

// Filipovic space weight exp(alpha_exp * x), noise domain [-gamma, gamma]
// and the truncation point used for integrals over R+.
struct SpaceConfig {
    double alpha_exp = 0.5;
    double gamma = 4.0;
    double tail_cutoff = 50.0;

    void validate() const;
    // The volatility operator maps into H_alpha only if alpha_exp < 2b, and
    // the Nelson-Siegel curve lies in H_alpha only if alpha_exp < 2 alpha3.
    void validate_for(const ModelParams& params) const;
};

double seasonal_a(const SeasonalCoefficients& coeffs, double t);

// Nelson-Siegel initial curve alpha0 + (alpha1 + alpha2 alpha3 x) e^{-alpha3 x}.
double ns_eval(const ModelParams& params, double x);
double ns_derivative(const ModelParams& params, double x);

// Swap drift: average of the Nelson-Siegel curve over the delivery window
// [T1 - t, T1 + l - t], in closed form.
double mu_drift(const ModelParams& params, const ContractSpec& contract, double t);

// Triangle weight (1 - |x|) on [-1, 1].
double omega(double x);
// Volatility kernel a e^{-bx} omega(x - y).
double vol_kernel(const ModelParams& params, double x, double y);
// Covariance kernel e^{-k|x - y|}.
double cov_kernel(double k, double x, double y);

/// Exact covariance-weighted overlap of two triangle weights,
///   A(d) = int int omega(z) e^{-k|z - y|} omega(d + y) dy dz,
/// i.e. the autocorrelation of omega convolved with the Laplace kernel.
/// Piecewise closed form on |d| in [0,1], [1,2], [2, inf). For large k it
/// approaches (2/k) int omega(z) omega(z + d) dz.
double covariance_kernel(double k, double d);

/// Instantaneous variance Sigma^2_s of the swap price for s <= T1, with O = R:
///   Sigma^2_s = a^2 / l^2 int int_{[x, x+l]^2} e^{-b(u+v)} A(u - v) du dv,
/// x = T1 - s. The double integral collapses to a one-dimensional smooth
/// integral in r = |u - v| which is evaluated with a fixed Gauss-Legendre rule.
/// Rejects b <= 0, k <= 0, l <= 0.
double sigma_sq(const ModelParams& params, double s, const ContractSpec& contract);

/// xi^2 = int_t^tau Sigma^2_s ds, closed form (Sigma^2_s is C e^{-2b(T1 - s)}).
double xi_sq(const ModelParams& params, double t, double tau, const ContractSpec& contract);

/// Discounted Gaussian call price e^{-r(tau-t)} E[max(mu + xi X - K, 0)].
/// Falls back to the discounted intrinsic value when xi = 0.
double call_price(const ModelParams& params, const ContractSpec& contract,
                  const MarketConfig& market);

// Bracket term B(b, l) of the integration-by-parts closed form below.
double by_parts_bracket(double b, double ell);

/// Closed form obtained by integrating by parts while treating omega'' as
/// zero. It drops the jump terms of omega' and therefore does not equal the
/// four-fold variance integral (it grows like 1/l as l -> 0). Kept only to
/// compare against data generated with that expression.
double sigma_sq_by_parts(const ModelParams& params, double s, const ContractSpec& contract);

double normal_pdf(double x);
// Phi(x) = erfc(-x / sqrt 2) / 2.
double normal_cdf(double x);

}  // namespace hjmcal
