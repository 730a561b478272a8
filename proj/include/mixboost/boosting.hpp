#pragma once

// Non-cyclic gradient boosting over all linear predictors of a mixture
// regression model, and K-fold cross-validation of the stopping iteration.

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mixboost/model_spec.hpp"

namespace mixboost {

/// Training means and sample sds (n - 1) of the design columns.
struct ColumnStats {
    std::vector<std::string> columns;
    std::vector<double> means;
    std::vector<double> sds;

    /// (x - mean) / sd per column, with the stored statistics.
    [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
    [[nodiscard]] Design apply(const Design& design) const;
};

/// Computes column statistics; throws DomainError naming any constant column.
ColumnStats column_stats(const Design& design);

struct StandardizedData {
    Design design;
    Eigen::VectorXd y;  // passed through unchanged
    ColumnStats stats;
};
StandardizedData standardize_columns(const Design& design, const Eigen::VectorXd& y);

struct BoostConfig {
    double step_length = 0.05;
    std::size_t m_stop = 2000;
    std::size_t cv_folds = 10;
    std::uint64_t seed = 1;
    Loss loss = Loss::LogS;
    /// When false, intercepts stay at zero. When true, each intercept is an
    /// additional candidate whose base learner is the constant 1.
    bool boost_intercepts = false;

    void validate() const;
};

struct BoostStep {
    std::size_t predictor = 0;
    std::size_t term = 0;  // index into Coefficients::terms[predictor]
    double rho = 0.0;
    double delta = 0.0;  // step_length * rho
};

struct BoostState {
    ModelSpec spec;  // with loss set from the config
    BoostConfig config;
    std::vector<BoostStep> steps;
    /// train_loss[m] is the training loss after m updates.
    std::vector<double> train_loss;
    /// Filled when validation data was supplied; frozen after an early halt.
    std::vector<double> validation_loss;
    /// Iteration at which no candidate reduced the loss, if any.
    std::optional<std::size_t> halted_at;

    [[nodiscard]] std::size_t iterations() const { return steps.size(); }
    /// Replays the first m updates.
    [[nodiscard]] Coefficients coefficients_at(std::size_t m) const;
};

struct ValidationSet {
    const Eigen::MatrixXd* x = nullptr;
    const Eigen::VectorXd* y = nullptr;
};

/// Runs up to config.m_stop updates on standardized data.
BoostState boost_fit(const ModelSpec& spec, const Design& design, const Eigen::VectorXd& y,
                     const BoostConfig& config, ValidationSet validation = {});

struct CvResult {
    std::size_t m_opt = 0;
    /// Summed validation loss over folds, index m = 0..m_stop.
    std::vector<double> validation_loss;
};

/// Random row folds from config.seed; m_opt is the first minimizer over 1..m_stop.
CvResult cross_validate_mstop(const ModelSpec& spec, const Design& design, const Eigen::VectorXd& y,
                              const BoostConfig& config);

/// Fold label per row: a seeded permutation dealt round-robin.
std::vector<std::size_t> assign_folds(std::size_t n, std::size_t folds, std::uint64_t seed);

/// Long-format CSV: iteration, predictor_id, covariate_id, coefficient. Every
/// term that is ever nonzero appears at every iteration 0..m.
void write_coefficient_paths(std::ostream& out, const BoostState& state, std::size_t m);

}  // namespace mixboost
