#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hjmcal {

// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendreRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendreRule(std::size_t n);

    std::size_t size() const { return nodes.size(); }

    // Integral of f over [lo, hi] with this rule.
    template <class F>
    double integrate(F&& f, double lo, double hi) const {
        const double half = 0.5 * (hi - lo);
        const double mid = 0.5 * (hi + lo);
        double sum = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            sum += weights[i] * f(mid + half * nodes[i]);
        }
        return sum * half;
    }
};

// Shared rule of order n; rules are built once and never modified.
const GaussLegendreRule& gauss_legendre(std::size_t n);

// Sorted breakpoints restricted to [lo, hi], always including both ends.
std::vector<double> panel_edges(double lo, double hi, std::span<const double> breaks);

}  // namespace hjmcal
