#include "hjmcal/gauss_legendre.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace hjmcal {

GaussLegendreRule::GaussLegendreRule(std::size_t n) : nodes(n), weights(n) {
    if (n < 1) throw std::invalid_argument("Gauss-Legendre rule needs at least one node");
    // Newton iteration on P_n started from the Chebyshev-like guess; nodes are
    // symmetric so only half of them are computed.
    const std::size_t m = (n + 1) / 2;
    for (std::size_t i = 0; i < m; ++i) {
        double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = 0.0;
            for (std::size_t j = 1; j <= n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / static_cast<double>(j);
            }
            dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[n - 1 - i] = weights[i];
    }
}

const GaussLegendreRule& gauss_legendre(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, std::unique_ptr<GaussLegendreRule>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<GaussLegendreRule>(n);
    return *slot;
}

std::vector<double> panel_edges(double lo, double hi, std::span<const double> breaks) {
    std::vector<double> edges{lo, hi};
    for (double b : breaks) {
        if (b > lo && b < hi) edges.push_back(b);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

}  // namespace hjmcal
