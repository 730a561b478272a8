#pragma once

// Quasi-Newton (BFGS) minimization of the total LogS or CRPS over all
// coefficients of a model, plus the plain-text model file.

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <string>

#include "mixboost/model_spec.hpp"

namespace mixboost {

struct LossAndGradient {
    double loss = 0.0;
    Eigen::VectorXd gradient;  // flattened like Coefficients::flatten()
};

/// Sum over rows of the loss and its gradient with respect to every coefficient.
LossAndGradient total_loss_and_gradient(const BoundModel& model, const Coefficients& coeffs,
                                        const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
LossAndGradient total_loss_and_gradient(const ModelSpec& spec, const Coefficients& coeffs,
                                        const Design& design, const Eigen::VectorXd& y);
double total_loss(const BoundModel& model, const Coefficients& coeffs, const Eigen::MatrixXd& x,
                  const Eigen::VectorXd& y);

struct BfgsOptions {
    std::size_t max_iterations = 5000;
    double relative_tolerance = 1e-8;
    double armijo = 1e-4;
    double shrink = 0.5;
    std::size_t max_backtracks = 60;
    /// Mixtures fitted from zero are refitted from quantile-spread location
    /// intercepts (every component order); the lowest loss wins.
    bool mixture_starts = true;
};

enum class StopReason { RelativeTolerance, MaxIterations, ZeroGradient };
const char* to_string(StopReason reason);

/// Objective returning f(x) and writing its gradient. May throw ScoreOverflow,
/// which line searches treat as an infinite value.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct BfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd gradient;
    std::size_t iterations = 0;
    StopReason stop = StopReason::MaxIterations;
};

/// BFGS with backtracking Armijo line search. Stops when the relative
/// decrease |f_old - f_new| <= tol * (|f_old| + tol) or after max_iterations.
BfgsResult minimize_bfgs(const Objective& objective, Eigen::VectorXd x0, const BfgsOptions& opts = {});

struct FittedCoefficients {
    Coefficients coefficients;
    std::size_t iterations = 0;
    double gradient_norm = 0.0;
    double loss = 0.0;
    double initial_loss = 0.0;
    StopReason stop = StopReason::MaxIterations;
};

/// Fits all coefficients (intercepts included) starting from zero, plus the
/// extra mixture starts described in BfgsOptions.
FittedCoefficients fit_bfgs(const ModelSpec& spec, const Design& design, const Eigen::VectorXd& y,
                            const BfgsOptions& opts = {});
/// Same, from an explicit starting point.
FittedCoefficients fit_bfgs(const ModelSpec& spec, const Design& design, const Eigen::VectorXd& y,
                            const Coefficients& start, const BfgsOptions& opts = {});

/// Versioned plain-text model file: header, then one block per predictor with
/// named coefficients at 17 significant digits.
void write_model_file(std::ostream& out, const ModelSpec& spec, const Coefficients& coeffs);
struct ModelFileContents {
    ModelSpec spec;
    Coefficients coefficients;
};
/// Reads the block written by write_model_file; stops after its "end" line.
ModelFileContents read_model_file(std::istream& in);

/// Formats a double with 17 significant digits.
std::string format_double(double value);

}  // namespace mixboost
