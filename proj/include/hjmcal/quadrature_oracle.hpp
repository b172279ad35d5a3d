#pragma once

// Numerical evaluation of the operator-level objects of the forward curve
// model (volatility operator and its adjoint, covariance operator, delivery
// operator, Filipovic inner product, four-fold variance integral). These are
// deliberately brute force: they exist to check the closed forms in
// hjm_pricing.hpp, not to be fast.

#include "hjmcal/hjm_pricing.hpp"

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace hjmcal::quad {

struct QuadratureConfig {
    int nodes_per_dim = 16;   // Gauss-Legendre nodes per panel
    int panels = 1;           // sub-panels per smooth piece
    double abs_tol = 1e-13;
    double rel_tol = 1e-10;
    int max_refinements = 10;  // panel doublings before giving up (1-D routines)

    void validate() const;
    QuadratureConfig with_doubled_nodes() const;
};

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using RealFunction = std::function<double(double)>;

// A deterministic curve g on [0, cutoff] together with g'. `kinks` lists
// points where g' is not smooth; integrals split panels there.
struct CurveSample {
    RealFunction value;
    RealFunction derivative;
    double cutoff = 50.0;
    std::vector<double> kinks;

    static CurveSample constant(double c, double cutoff = 50.0);
    static CurveSample nelson_siegel(const ModelParams& params, double cutoff = 50.0);
};

// Composite Gauss-Legendre over [lo, hi] split at `breaks`, doubling the
// panel count until two successive results agree within the tolerances.
// Throws ConvergenceError when max_refinements is exhausted.
double integrate(const RealFunction& f, double lo, double hi, std::span<const double> breaks,
                 const QuadratureConfig& cfg);

// Fixed rule (no refinement), used inside nested integrals. Each smooth piece
// gets cfg.panels panels, further split so that no panel is wider than max_width.
double integrate_fixed(const RealFunction& f, double lo, double hi,
                       std::span<const double> breaks, const QuadratureConfig& cfg,
                       double max_width = 1.0);

// <f1, f2>_alpha = f1(0) f2(0) + int_0^cutoff f1' f2' e^{alpha x} dx.
// Throws ConvergenceError if the estimated tail mass beyond the cutoff
// exceeds rel_tol of the integral.
double inner_alpha(const CurveSample& f1, const CurveSample& f2, const QuadratureConfig& cfg,
                   const SpaceConfig& space);

// (sigma h)(x) = int_{-gamma}^{gamma} kappa(x, y) h(y) dy.
double vol_op_apply(const ModelParams& params, const RealFunction& h, double x,
                    const SpaceConfig& space, const QuadratureConfig& cfg);
// d/dx (sigma h)(x).
double vol_op_derivative(const ModelParams& params, const RealFunction& h, double x,
                         const SpaceConfig& space, const QuadratureConfig& cfg);
// sigma h as a curve, for use with inner_alpha.
CurveSample vol_op_image(const ModelParams& params, RealFunction h, const SpaceConfig& space,
                         const QuadratureConfig& cfg);

// (sigma^* f)(y) = kappa(0, y) f(0) + int_0^cutoff d kappa/dx (x, y) f'(x) e^{alpha x} dx.
double vol_op_adjoint(const ModelParams& params, const CurveSample& f, double y,
                      const SpaceConfig& space, const QuadratureConfig& cfg);

// (Q h)(x) = int_{-gamma}^{gamma} e^{-k|x - y|} h(y) dy.
double cov_apply(double k, const RealFunction& h, double x, double gamma,
                 const QuadratureConfig& cfg);

// Swap curve from the instantaneous curve: (1/l) int_x^{x+l} g(y) dy.
double delivery_apply_direct(const CurveSample& g, double x, double ell,
                             const QuadratureConfig& cfg);
// Same operator in the integration-by-parts form
//   g(x) + int q_l(x, y) g'(y) dy,  q_l(x, y) = (x + l - y) / l on [x, x + l].
double delivery_apply_parts(const CurveSample& g, double x, double ell,
                            const QuadratureConfig& cfg);

// Local-limit kernel (2/k) int omega(v - z) omega(u - z) dz. This is the
// k -> infinity form of the covariance-weighted overlap; see
// covariance_overlap for the full double integral.
double a_kernel(double k, double u, double v, const QuadratureConfig& cfg = {});

// int int omega(v - z) e^{-k|z - y|} omega(u - y) dy dz by nested quadrature.
double covariance_overlap(double k, double u, double v, const QuadratureConfig& cfg = {});

/// Four-fold integral for Sigma^2_s over O = [-gamma, gamma]:
///   a(s)^2 int int int int e^{-bu} e^{-bv} d_l(x, u) d_l(x, v)
///          omega(v - z) q(z, y) omega(u - y) dy dz du dv,   x = T1 - s.
/// Panels are split at every kink of omega and of q. Requires
/// gamma >= T1 - s + l + 2 so that the omega supports lie inside O. When
/// `seasonal` is given, a(s) comes from it instead of params.a.
double sigma_sq_quad(const ModelParams& params, double s, const ContractSpec& contract,
                     const SpaceConfig& space, const QuadratureConfig& cfg = {},
                     const std::optional<SeasonalCoefficients>& seasonal = std::nullopt);

// As sigma_sq_quad, then again with doubled nodes; throws ConvergenceError
// if the two differ by more than cfg.rel_tol (relative).
double sigma_sq_quad_checked(const ModelParams& params, double s, const ContractSpec& contract,
                             const SpaceConfig& space, const QuadratureConfig& cfg = {});

/// Factorised route: the u and v integrals separate, leaving
///   Sigma^2_s = a^2 / l^2 int int J(y) e^{-k|y - z|} J(z) dy dz,
///   J(y) = int_x^{x+l} e^{-bu} omega(u - y) du.
double sigma_sq_reduced(const ModelParams& params, double s, const ContractSpec& contract,
                        const QuadratureConfig& cfg = {});

/// The k -> infinity limit of the factorised route, where the covariance
/// kernel acts as (2/k) times the identity:
///   (2 a^2 / (k l^2)) int J(z)^2 dz.
/// Differs from Sigma^2_s by O(1/k).
double sigma_sq_local_limit(const ModelParams& params, double s, const ContractSpec& contract,
                            const QuadratureConfig& cfg = {});

}  // namespace hjmcal::quad
