#pragma once

// Gradients of LogS and CRPS of a normal mixture with respect to the linear
// predictors of every weight (softmax link), location (identity link) and
// scale (log link).

#include <span>
#include <vector>

#include "mixboost/normal.hpp"

namespace mixboost {

struct PredictorGradients {
    std::vector<double> d_eta_mu;
    std::vector<double> d_eta_sigma;
    std::vector<double> d_eta_omega;

    void resize(std::size_t k) {
        d_eta_mu.assign(k, 0.0);
        d_eta_sigma.assign(k, 0.0);
        d_eta_omega.assign(k, 0.0);
    }
};

/// Max-shifted softmax.
std::vector<double> softmax(std::span<const double> etas);

/// pi_k = w_k f_k(y) / sum_i w_i f_i(y). Throws ScoreOverflow when the total density is zero.
std::vector<double> posterior_probs(const MixtureParams& params, double y);

PredictorGradients logs_gradients(const MixtureParams& params, double y);
PredictorGradients crps_gradients(const MixtureParams& params, double y);
PredictorGradients loss_gradients(Loss loss, const MixtureParams& params, double y);

namespace detail {

void softmax_into(std::span<const double> etas, std::span<double> out) noexcept;

// Unvalidated variants writing into preallocated storage (out sized K).
void logs_gradients_into(const MixtureParams& params, double y, PredictorGradients& out);
void crps_gradients_into(const MixtureParams& params, double y, PredictorGradients& out) noexcept;

}  // namespace detail

}  // namespace mixboost
