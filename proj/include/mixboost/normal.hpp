#pragma once

// Normal and normal-mixture distribution math: density, CDF, quantiles and
// the closed-form logarithmic score and CRPS.

#include <cstddef>
#include <string>
#include <vector>

namespace mixboost {

enum class Loss { LogS, CRPS };

const char* to_string(Loss loss);
Loss parse_loss(const std::string& text);

struct ScalarGaussian {
    double location = 0.0;
    double scale = 1.0;
};

/// Weights, locations and scales of a K-component normal mixture.
struct MixtureParams {
    std::vector<double> weights;
    std::vector<double> locations;
    std::vector<double> scales;

    MixtureParams() = default;
    MixtureParams(std::vector<double> w, std::vector<double> mu, std::vector<double> sigma);

    static MixtureParams single(double location, double scale);
    static MixtureParams single(const ScalarGaussian& g) { return single(g.location, g.scale); }

    [[nodiscard]] std::size_t size() const noexcept { return weights.size(); }

    /// Throws DomainError unless lengths agree, K >= 1, weights lie in [0,1]
    /// and sum to 1 within 1e-12, and scales are finite and positive.
    void validate() const;

    /// Predictive mean sum_k w_k mu_k.
    [[nodiscard]] double mean() const;
};

double std_normal_pdf(double z);
double std_normal_cdf(double z);

/// E|X| for X ~ N(mu, var).
double a_func(double mu, double var);

double logs_mixture(const MixtureParams& params, double y);
double crps_mixture(const MixtureParams& params, double y);
double mixture_pdf(const MixtureParams& params, double y);
double mixture_cdf(const MixtureParams& params, double y);
double mixture_quantile(const MixtureParams& params, double p);

namespace detail {

// Unvalidated kernels for inner loops; callers guarantee valid params.
double phi(double z) noexcept;
double Phi(double z) noexcept;
double a_func(double mu, double var) noexcept;
double log_density(const MixtureParams& params, double y) noexcept;
double crps(const MixtureParams& params, double y) noexcept;
double cdf(const MixtureParams& params, double y) noexcept;

/// Loss of one case; throws ScoreOverflow (row tagged) when LogS is not finite.
double score(Loss loss, const MixtureParams& params, double y, std::ptrdiff_t row = -1);

}  // namespace detail

}  // namespace mixboost
