#pragma once

// Independent reference computations used by the unit and acceptance tests:
// quadrature, finite differences through the links, and direct evaluation in
// extended precision. None of these call into the code under test.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mixboost/normal.hpp"

namespace oracle {

inline double cdf(const mixboost::MixtureParams& p, double y) {
    long double total = 0.0L;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const long double z = (static_cast<long double>(y) - p.locations[k]) / p.scales[k];
        total += p.weights[k] * 0.5L * std::erfc(-z / std::sqrt(2.0L));
    }
    return static_cast<double>(total);
}

inline double survival(const mixboost::MixtureParams& p, double y) {
    long double total = 0.0L;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const long double z = (static_cast<long double>(y) - p.locations[k]) / p.scales[k];
        total += p.weights[k] * 0.5L * std::erfc(z / std::sqrt(2.0L));
    }
    return static_cast<double>(total);
}

inline double density(const mixboost::MixtureParams& p, double y) {
    const long double norm = 1.0L / std::sqrt(2.0L * 3.14159265358979323846264338327950288L);
    long double total = 0.0L;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const long double z = (static_cast<long double>(y) - p.locations[k]) / p.scales[k];
        total += p.weights[k] * norm * std::exp(-0.5L * z * z) / p.scales[k];
    }
    return static_cast<double>(total);
}

inline double logs(const mixboost::MixtureParams& p, double y) { return -std::log(density(p, y)); }

/// CRPS as the integral of (F(z) - 1{z >= y})^2 over a grid padded by 12
/// component scales on both sides, split at y.
inline double crps_quadrature(const mixboost::MixtureParams& p, double y) {
    double lo = y, hi = y;
    for (std::size_t k = 0; k < p.size(); ++k) {
        lo = std::min(lo, p.locations[k] - 12.0 * p.scales[k]);
        hi = std::max(hi, p.locations[k] + 12.0 * p.scales[k]);
    }
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    const auto below = [&](double z) {
        const double f = cdf(p, z);
        return f * f;
    };
    const auto above = [&](double z) {
        const double s = survival(p, z);
        return s * s;
    };
    return GK::integrate(below, lo, y, 15, 1e-13) + GK::integrate(above, y, hi, 15, 1e-13);
}

/// E|X| for X ~ N(mu, var) by quadrature of |x| times the density.
inline double abs_moment(double mu, double var) {
    const double sd = std::sqrt(var);
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    const auto f = [&](double x) {
        const double z = (x - mu) / sd;
        return std::abs(x) * std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
    };
    const double lo = std::min(0.0, mu - 14.0 * sd), hi = std::max(0.0, mu + 14.0 * sd);
    double total = 0.0;
    if (lo < 0.0) total += GK::integrate(f, lo, 0.0, 15, 1e-14);
    if (hi > 0.0) total += GK::integrate(f, 0.0, hi, 15, 1e-14);
    return total;
}

/// Linear predictors in the order weights, then (location, scale) per component.
inline mixboost::MixtureParams from_etas(const std::vector<double>& eta, std::size_t K) {
    mixboost::MixtureParams p;
    p.weights.resize(K);
    p.locations.resize(K);
    p.scales.resize(K);
    double top = eta[0];
    for (std::size_t k = 1; k < K; ++k) top = std::max(top, eta[k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(eta[k] - top);
    for (std::size_t k = 0; k < K; ++k) {
        p.weights[k] = std::exp(eta[k] - top) / sum;
        p.locations[k] = eta[K + 2 * k];
        p.scales[k] = std::exp(eta[K + 2 * k + 1]);
    }
    return p;
}

/// Central differences (step h) of a score through softmax / identity / exp links.
template <typename Score>
std::vector<double> fd_gradient(const Score& score, const std::vector<double>& eta, std::size_t K, double y,
                                double h = 1e-6) {
    std::vector<double> grad(eta.size());
    for (std::size_t j = 0; j < eta.size(); ++j) {
        std::vector<double> up = eta, down = eta;
        up[j] += h;
        down[j] -= h;
        grad[j] = (score(from_etas(up, K), y) - score(from_etas(down, K), y)) / (2.0 * h);
    }
    return grad;
}

inline bool close(double analytic, double reference, double rel, double abs) {
    return std::abs(analytic - reference) <= std::max(rel * std::abs(reference), abs);
}

}  // namespace oracle
