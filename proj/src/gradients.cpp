#include "mixboost/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mixboost/error.hpp"

namespace mixboost {

namespace detail {

void softmax_into(std::span<const double> etas, std::span<double> out) noexcept {
    double top = -std::numeric_limits<double>::infinity();
    for (double e : etas) top = std::max(top, e);
    double total = 0.0;
    for (std::size_t i = 0; i < etas.size(); ++i) {
        out[i] = std::exp(etas[i] - top);
        total += out[i];
    }
    for (std::size_t i = 0; i < etas.size(); ++i) out[i] /= total;
}

namespace {

// Log of w_k f_k(y) for every component, and the log of their sum.
double component_log_terms(const MixtureParams& params, double y, double* terms) noexcept {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double z = (y - params.locations[i]) / params.scales[i];
        terms[i] = params.weights[i] > 0.0
                       ? std::log(params.weights[i]) - 0.5 * z * z - std::log(params.scales[i])
                       : -std::numeric_limits<double>::infinity();
        top = std::max(top, terms[i]);
    }
    if (!std::isfinite(top)) return top;
    double sum = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) sum += std::exp(terms[i] - top);
    return top + std::log(sum);
}

void posterior_into(const MixtureParams& params, double y, std::vector<double>& pi) {
    const std::size_t k = params.size();
    pi.resize(k);
    const double log_total = component_log_terms(params, y, pi.data());
    if (!std::isfinite(log_total)) {
        std::ostringstream msg;
        msg << "posterior probabilities undefined: mixture density is zero at y=" << y;
        throw ScoreOverflow(msg.str());
    }
    for (std::size_t i = 0; i < k; ++i) pi[i] = std::exp(pi[i] - log_total);
}

}  // namespace

void logs_gradients_into(const MixtureParams& params, double y, PredictorGradients& out) {
    const std::size_t k = params.size();
    // d_eta_omega doubles as scratch for the posterior probabilities.
    std::vector<double>& pi = out.d_eta_omega;
    posterior_into(params, y, pi);
    out.d_eta_mu.resize(k);
    out.d_eta_sigma.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double resid = params.locations[i] - y;
        const double sigma = params.scales[i];
        const double z = resid / sigma;
        out.d_eta_mu[i] = pi[i] * resid / (sigma * sigma);
        out.d_eta_sigma[i] = pi[i] * (1.0 - z * z);
        pi[i] = params.weights[i] - pi[i];
    }
}

void crps_gradients_into(const MixtureParams& params, double y, PredictorGradients& out) noexcept {
    const std::size_t k = params.size();
    const auto& w = params.weights;
    const auto& mu = params.locations;
    const auto& sd = params.scales;

    // A(y - mu_i, s_i^2) terms and their weighted sum.
    double a_obs_stack[16];
    std::vector<double> a_obs_heap;
    double* a_obs = a_obs_stack;
    if (k > 16) {
        a_obs_heap.resize(k);
        a_obs = a_obs_heap.data();
    }
    double weighted_obs = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        a_obs[i] = detail::a_func(y - mu[i], sd[i] * sd[i]);
        weighted_obs += w[i] * a_obs[i];
    }
    double pair_total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            pair_total += w[i] * w[j] * detail::a_func(mu[i] - mu[j], sd[i] * sd[i] + sd[j] * sd[j]);
        }
    }
    const double crps = weighted_obs - 0.5 * pair_total;

    for (std::size_t kk = 0; kk < k; ++kk) {
        const double zk = (y - mu[kk]) / sd[kk];
        double loc_sum = 0.0;
        double scale_sum = 0.0;
        double pair_sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double var = sd[kk] * sd[kk] + sd[i] * sd[i];
            const double s = std::sqrt(var);
            const double zi = (mu[kk] - mu[i]) / s;
            loc_sum += w[i] * (1.0 - 2.0 * detail::Phi(zi));
            scale_sum += w[i] * (sd[kk] / s) * detail::phi(zi);
            pair_sum += w[i] * detail::a_func(mu[i] - mu[kk], var);
        }
        out.d_eta_mu[kk] = w[kk] * (1.0 - 2.0 * detail::Phi(zk) + loc_sum);
        out.d_eta_sigma[kk] = 2.0 * w[kk] * sd[kk] * (detail::phi(zk) - scale_sum);
        // sum_i (delta_ik w_i + w_i w_k) A(y - mu_i, s_i^2) = w_k A_k + w_k sum_i w_i A_i
        out.d_eta_omega[kk] = -2.0 * w[kk] * crps + w[kk] * a_obs[kk] + w[kk] * weighted_obs
                              - w[kk] * pair_sum;
    }
}

}  // namespace detail

std::vector<double> softmax(std::span<const double> etas) {
    if (etas.empty()) throw DomainError("softmax of an empty vector");
    for (double e : etas) {
        if (!std::isfinite(e)) throw DomainError("softmax: non-finite linear predictor");
    }
    std::vector<double> out(etas.size());
    detail::softmax_into(etas, out);
    return out;
}

std::vector<double> posterior_probs(const MixtureParams& params, double y) {
    params.validate();
    std::vector<double> pi;
    detail::posterior_into(params, y, pi);
    return pi;
}

PredictorGradients logs_gradients(const MixtureParams& params, double y) {
    params.validate();
    PredictorGradients out;
    out.resize(params.size());
    detail::logs_gradients_into(params, y, out);
    return out;
}

PredictorGradients crps_gradients(const MixtureParams& params, double y) {
    params.validate();
    if (!std::isfinite(y)) throw DomainError("crps_gradients: non-finite observation");
    PredictorGradients out;
    out.resize(params.size());
    detail::crps_gradients_into(params, y, out);
    return out;
}

PredictorGradients loss_gradients(Loss loss, const MixtureParams& params, double y) {
    return loss == Loss::LogS ? logs_gradients(params, y) : crps_gradients(params, y);
}

}  // namespace mixboost
