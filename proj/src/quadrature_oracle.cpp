#include "hjmcal/quadrature_oracle.hpp"

#include "hjmcal/gauss_legendre.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace hjmcal::quad {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

double sum_pieces(const RealFunction& f, const std::vector<double>& edges, std::size_t nodes,
                  int panels, double max_width) {
    const auto& rule = gauss_legendre(nodes);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const double lo = edges[i];
        const double hi = edges[i + 1];
        int m = panels;
        if (max_width > 0.0) m = std::max(m, static_cast<int>(std::ceil((hi - lo) / max_width)));
        const double h = (hi - lo) / m;
        for (int j = 0; j < m; ++j) total += rule.integrate(f, lo + j * h, lo + (j + 1) * h);
    }
    return total;
}

bool close_enough(double a, double b, const QuadratureConfig& cfg) {
    return std::abs(a - b) <= std::max(cfg.abs_tol, cfg.rel_tol * std::abs(b));
}

// omega'(d), with the value 0 at the kinks (they carry no mass).
double omega_slope(double d) {
    if (d > 0.0 && d < 1.0) return -1.0;
    if (d < 0.0 && d > -1.0) return 1.0;
    return 0.0;
}

// d kappa / dx at (x, y).
double vol_kernel_dx(const ModelParams& p, double x, double y) {
    const double d = x - y;
    return p.a * std::exp(-p.b * x) * (omega_slope(d) - p.b * omega(d));
}

// J(y) = int_x^{x+l} e^{-bu} omega(u - y) du.
double inner_j(double b, double x, double ell, double y, const QuadratureConfig& cfg) {
    const double lo = std::max(x, y - 1.0);
    const double hi = std::min(x + ell, y + 1.0);
    if (hi <= lo) return 0.0;
    const double breaks[] = {y};
    return integrate_fixed([&](double u) { return std::exp(-b * u) * omega(u - y); }, lo, hi, breaks,
                           cfg);
}

}  // namespace

void QuadratureConfig::validate() const {
    require(nodes_per_dim >= 2, "nodes_per_dim must be at least 2");
    require(panels >= 1, "panels must be at least 1");
    require(abs_tol > 0.0 && rel_tol > 0.0, "tolerances must be positive");
    require(max_refinements >= 0, "max_refinements must be nonnegative");
}

QuadratureConfig QuadratureConfig::with_doubled_nodes() const {
    QuadratureConfig out = *this;
    out.nodes_per_dim *= 2;
    return out;
}

CurveSample CurveSample::constant(double c, double cutoff) {
    return CurveSample{[c](double) { return c; }, [](double) { return 0.0; }, cutoff, {}};
}

CurveSample CurveSample::nelson_siegel(const ModelParams& params, double cutoff) {
    return CurveSample{[params](double x) { return ns_eval(params, x); },
                       [params](double x) { return ns_derivative(params, x); }, cutoff, {}};
}

double integrate(const RealFunction& f, double lo, double hi, std::span<const double> breaks,
                 const QuadratureConfig& cfg) {
    cfg.validate();
    if (hi <= lo) return 0.0;
    const auto edges = panel_edges(lo, hi, breaks);
    const auto n = static_cast<std::size_t>(cfg.nodes_per_dim);
    int panels = cfg.panels;
    double prev = sum_pieces(f, edges, n, panels, 1.0);
    for (int r = 0; r < cfg.max_refinements; ++r) {
        panels *= 2;
        const double next = sum_pieces(f, edges, n, panels, 1.0);
        if (!std::isfinite(next)) throw ConvergenceError("integrand is not finite");
        if (close_enough(prev, next, cfg)) return next;
        prev = next;
    }
    std::ostringstream msg;
    msg << "panel refinement did not stabilise on [" << lo << ", " << hi << "] after "
        << cfg.max_refinements << " doublings";
    throw ConvergenceError(msg.str());
}

double integrate_fixed(const RealFunction& f, double lo, double hi, std::span<const double> breaks,
                       const QuadratureConfig& cfg, double max_width) {
    if (hi <= lo) return 0.0;
    return sum_pieces(f, panel_edges(lo, hi, breaks), static_cast<std::size_t>(cfg.nodes_per_dim),
                      cfg.panels, max_width);
}

double inner_alpha(const CurveSample& f1, const CurveSample& f2, const QuadratureConfig& cfg,
                   const SpaceConfig& space) {
    space.validate();
    const double cutoff = std::min(f1.cutoff, f2.cutoff);
    const double alpha = space.alpha_exp;
    auto integrand = [&](double x) { return f1.derivative(x) * f2.derivative(x) * std::exp(alpha * x); };
    std::vector<double> breaks = f1.kinks;
    breaks.insert(breaks.end(), f2.kinks.begin(), f2.kinks.end());
    const double body = integrate(integrand, 0.0, cutoff, breaks, cfg);

    // Tail mass past the cutoff, assuming the integrand keeps decaying at the
    // rate seen over its last unit interval.
    const double at_cut = std::abs(integrand(cutoff));
    if (at_cut > 0.0) {
        const double before = std::abs(integrand(cutoff - 1.0));
        const double ratio = before > 0.0 ? at_cut / before : 1.0;
        const double tail = ratio < 1.0 ? at_cut / -std::log(ratio) : INFINITY;
        if (tail > std::max(cfg.abs_tol, cfg.rel_tol * std::abs(body)))
            throw ConvergenceError("integrand has not decayed by the tail cutoff");
    }
    return f1.value(0.0) * f2.value(0.0) + body;
}

double vol_op_apply(const ModelParams& params, const RealFunction& h, double x,
                    const SpaceConfig& space, const QuadratureConfig& cfg) {
    const double lo = std::max(-space.gamma, x - 1.0);
    const double hi = std::min(space.gamma, x + 1.0);
    const double breaks[] = {x};
    return integrate([&](double y) { return vol_kernel(params, x, y) * h(y); }, lo, hi, breaks, cfg);
}

double vol_op_derivative(const ModelParams& params, const RealFunction& h, double x,
                         const SpaceConfig& space, const QuadratureConfig& cfg) {
    const double lo = std::max(-space.gamma, x - 1.0);
    const double hi = std::min(space.gamma, x + 1.0);
    const double breaks[] = {x};
    return integrate([&](double y) { return vol_kernel_dx(params, x, y) * h(y); }, lo, hi, breaks,
                     cfg);
}

CurveSample vol_op_image(const ModelParams& params, RealFunction h, const SpaceConfig& space,
                         const QuadratureConfig& cfg) {
    return CurveSample{
        [=](double x) { return vol_op_apply(params, h, x, space, cfg); },
        [=](double x) { return vol_op_derivative(params, h, x, space, cfg); },
        space.tail_cutoff,
        // h is cut off at +-gamma, which leaves kinks one unit either side.
        {space.gamma - 1.0, space.gamma + 1.0},
    };
}

double vol_op_adjoint(const ModelParams& params, const CurveSample& f, double y,
                      const SpaceConfig& space, const QuadratureConfig& cfg) {
    const double boundary = vol_kernel(params, 0.0, y) * f.value(0.0);
    const double lo = std::max(0.0, y - 1.0);
    const double hi = std::min(f.cutoff, y + 1.0);
    std::vector<double> breaks = f.kinks;
    breaks.push_back(y);
    const double alpha = space.alpha_exp;
    const double body = integrate(
        [&](double x) { return vol_kernel_dx(params, x, y) * f.derivative(x) * std::exp(alpha * x); },
        lo, hi, breaks, cfg);
    return boundary + body;
}

double cov_apply(double k, const RealFunction& h, double x, double gamma, const QuadratureConfig& cfg) {
    require(k > 0.0, "covariance rate k must be positive");
    require(gamma > 0.0, "gamma must be positive");
    QuadratureConfig local = cfg;
    // Start with panels no wider than about 2/k over the whole interval.
    local.panels = std::max(cfg.panels, static_cast<int>(std::ceil(k * gamma)));
    const double breaks[] = {x};
    return integrate([&](double y) { return cov_kernel(k, x, y) * h(y); }, -gamma, gamma, breaks,
                     local);
}

double delivery_apply_direct(const CurveSample& g, double x, double ell, const QuadratureConfig& cfg) {
    require(ell > 0.0, "delivery length must be positive");
    return integrate(g.value, x, x + ell, g.kinks, cfg) / ell;
}

double delivery_apply_parts(const CurveSample& g, double x, double ell, const QuadratureConfig& cfg) {
    require(ell > 0.0, "delivery length must be positive");
    const double tail = integrate([&](double y) { return (x + ell - y) / ell * g.derivative(y); }, x,
                                  x + ell, g.kinks, cfg);
    return g.value(x) + tail;
}

double a_kernel(double k, double u, double v, const QuadratureConfig& cfg) {
    require(k > 0.0, "covariance rate k must be positive");
    const double lo = std::max(u, v) - 1.0;
    const double hi = std::min(u, v) + 1.0;
    if (hi <= lo) return 0.0;
    const double breaks[] = {u, v};
    // The integrand is piecewise quadratic, so one fixed panel per piece is exact.
    return 2.0 / k *
           integrate_fixed([&](double z) { return omega(v - z) * omega(u - z); }, lo, hi, breaks, cfg,
                           0.0);
}

double covariance_overlap(double k, double u, double v, const QuadratureConfig& cfg) {
    require(k > 0.0, "covariance rate k must be positive");
    const double width = 1.0;
    auto inner = [&](double z) {
        const double breaks[] = {u, z};
        return omega(v - z) * integrate_fixed(
                                  [&](double y) { return cov_kernel(k, z, y) * omega(u - y); },
                                  u - 1.0, u + 1.0, breaks, cfg, width);
    };
    const double breaks[] = {v, u - 1.0, u, u + 1.0};
    return integrate_fixed(inner, v - 1.0, v + 1.0, breaks, cfg, width);
}

double sigma_sq_quad(const ModelParams& params, double s, const ContractSpec& contract,
                     const SpaceConfig& space, const QuadratureConfig& cfg,
                     const std::optional<SeasonalCoefficients>& seasonal) {
    params.validate();
    space.validate();
    cfg.validate();
    require(contract.delivery_len > 0.0, "delivery length must be positive");
    require(s <= contract.delivery_start, "s must not exceed the delivery start");
    const double x = contract.delivery_start - s;
    const double ell = contract.delivery_len;
    require(space.gamma >= x + ell + 2.0, "gamma must be at least T1 - s + l + 2");

    const double level = seasonal ? seasonal_a(*seasonal, s) : params.a;
    if (level == 0.0) return 0.0;
    const double b = params.b;
    const double k = params.k;
    const double g = space.gamma;
    const double width = 1.0;

    // Innermost: for fixed (v, y), int omega(v - z) e^{-k|z - y|} dz.
    auto z_integral = [&](double v, double y) {
        const double breaks[] = {v, y};
        return integrate_fixed([&](double z) { return omega(v - z) * cov_kernel(k, z, y); },
                               std::max(-g, v - 1.0), std::min(g, v + 1.0), breaks, cfg, width);
    };
    auto y_integral = [&](double u, double v) {
        const double breaks[] = {u, v - 1.0, v, v + 1.0};
        return integrate_fixed([&](double y) { return omega(u - y) * z_integral(v, y); },
                               std::max(-g, u - 1.0), std::min(g, u + 1.0), breaks, cfg, width);
    };
    auto v_integral = [&](double u) {
        const double breaks[] = {u - 2.0, u - 1.0, u + 1.0, u + 2.0};
        return integrate_fixed([&](double v) { return std::exp(-b * v) * y_integral(u, v); }, x,
                               x + ell, breaks, cfg, 1.0);
    };
    const double total = integrate_fixed([&](double u) { return std::exp(-b * u) * v_integral(u); },
                                         x, x + ell, {}, cfg, 1.0);
    return level * level * total / (ell * ell);
}

double sigma_sq_quad_checked(const ModelParams& params, double s, const ContractSpec& contract,
                             const SpaceConfig& space, const QuadratureConfig& cfg) {
    const double coarse = sigma_sq_quad(params, s, contract, space, cfg);
    const double fine = sigma_sq_quad(params, s, contract, space, cfg.with_doubled_nodes());
    if (!close_enough(coarse, fine, cfg)) {
        std::ostringstream msg;
        msg << "four-fold integral changed from " << coarse << " to " << fine
            << " when doubling nodes";
        throw ConvergenceError(msg.str());
    }
    return fine;
}

double sigma_sq_reduced(const ModelParams& params, double s, const ContractSpec& contract,
                        const QuadratureConfig& cfg) {
    params.validate();
    cfg.validate();
    require(contract.delivery_len > 0.0, "delivery length must be positive");
    require(s <= contract.delivery_start, "s must not exceed the delivery start");
    if (params.a == 0.0) return 0.0;
    const double x = contract.delivery_start - s;
    const double ell = contract.delivery_len;
    const double b = params.b;
    const double k = params.k;
    const double width = 1.0;
    const double kinks[] = {x - 1.0, x + ell - 1.0, x, x + ell, x + 1.0, x + ell + 1.0};

    auto outer = [&](double y) {
        std::vector<double> breaks(std::begin(kinks), std::end(kinks));
        breaks.push_back(y);
        const double inner = integrate_fixed(
            [&](double z) { return cov_kernel(k, y, z) * inner_j(b, x, ell, z, cfg); }, x - 1.0,
            x + ell + 1.0, breaks, cfg, width);
        return inner_j(b, x, ell, y, cfg) * inner;
    };
    const double total = integrate_fixed(outer, x - 1.0, x + ell + 1.0, kinks, cfg, width);
    return params.a * params.a * total / (ell * ell);
}

double sigma_sq_local_limit(const ModelParams& params, double s, const ContractSpec& contract,
                            const QuadratureConfig& cfg) {
    params.validate();
    require(contract.delivery_len > 0.0, "delivery length must be positive");
    require(s <= contract.delivery_start, "s must not exceed the delivery start");
    const double x = contract.delivery_start - s;
    const double ell = contract.delivery_len;
    const double kinks[] = {x - 1.0, x + ell - 1.0, x, x + ell, x + 1.0, x + ell + 1.0};
    const double total = integrate_fixed(
        [&](double z) {
            const double j = inner_j(params.b, x, ell, z, cfg);
            return j * j;
        },
        x - 1.0, x + ell + 1.0, kinks, cfg, 1.0);
    return 2.0 * params.a * params.a / (params.k * ell * ell) * total;
}

}  // namespace hjmcal::quad
