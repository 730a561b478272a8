#pragma once

// Forecast verification: scores, calibration histograms, interval coverage,
// significance tests, bootstrap errors and permutation importance.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mixboost/models.hpp"
#include "mixboost/normal.hpp"

namespace mixboost {

/// Central interval level matching a 51-member ensemble: 50/52.
inline constexpr double kDefaultIntervalLevel = 50.0 / 52.0;

std::vector<double> pit_values(std::span<const MixtureParams> predictions, std::span<const double> observations);

struct HistogramDiag {
    std::vector<std::size_t> counts;
    [[nodiscard]] std::size_t bins() const { return counts.size(); }
    [[nodiscard]] std::size_t total() const;
    [[nodiscard]] double reliability_index() const;
};

/// Equal-width bins on [0, 1]; a value of exactly 1 falls in the last bin.
HistogramDiag pit_histogram(std::span<const double> pit, std::size_t bins = 20);

/// Rank of each observation among its m members (row of `ensemble`), ties
/// broken uniformly at random; m + 1 bins.
HistogramDiag rank_histogram(const Eigen::MatrixXd& ensemble, std::span<const double> observations,
                             std::uint64_t seed);

/// Sum over bins of |observed relative frequency - 1/B|.
double reliability_index(std::span<const std::size_t> counts);

struct CoverageWidth {
    double coverage_percent = 0.0;
    double mean_width = 0.0;
};
CoverageWidth interval_coverage_width(std::span<const MixtureParams> predictions,
                                      std::span<const double> observations,
                                      double level = kDefaultIntervalLevel);

struct PointScores {
    double mae = 0.0;   // of the predictive median
    double rmse = 0.0;  // of the predictive mean
};
PointScores point_scores(std::span<const MixtureParams> predictions, std::span<const double> observations);

double skill_score(double mean_score, double mean_score_ref);

/// Empirical CRPS of a finite ensemble (row of members) against y.
double crps_ensemble(std::span<const double> members, double y);

struct DmResult {
    double statistic = 0.0;
    double p_two_sided = 1.0;
    /// P-value for the alternative that series a has the larger mean loss.
    double p_greater = 0.5;
    /// True when the differential has zero variance.
    bool indistinguishable = false;
};
/// Diebold-Mariano test on d = a - b with lag-0 variance; N >= 30.
DmResult dm_test(std::span<const double> loss_a, std::span<const double> loss_b);

std::vector<bool> benjamini_hochberg(std::span<const double> p_values, double alpha = 0.05);

struct BootstrapOptions {
    double block_length_mean = 25.0;
    std::size_t n_boot = 1000;
    std::uint64_t seed = 1;
};
/// Stationary (geometric block) bootstrap standard error of the mean.
double bootstrap_se(std::span<const double> series, const BootstrapOptions& opts = {});

struct Importance {
    std::string covariate;
    double importance = 0.0;
    double se = 0.0;
};
/// Increase in mean CRPS when one raw covariate column is permuted, averaged
/// over `repeats` permutations.
Importance permutation_importance(const FinalizedModel& model, const RawRows& rows,
                                  std::span<const double> observations, const std::string& covariate_id,
                                  std::uint64_t seed, std::size_t repeats = 1,
                                  const BootstrapOptions& bootstrap = {});

struct ScoreReport {
    std::string model;
    std::string station;
    std::size_t cases = 0;
    double crps = 0.0, crps_se = 0.0;
    double logs = 0.0, logs_se = 0.0;
    double mae = 0.0, mae_se = 0.0;
    double rmse = 0.0, rmse_se = 0.0;
    double coverage = 0.0, coverage_se = 0.0;
    double width = 0.0, width_se = 0.0;
    double pit_ri = 0.0;
};

struct CaseScores {
    std::vector<double> crps;
    std::vector<double> logs;
};
CaseScores case_scores(std::span<const MixtureParams> predictions, std::span<const double> observations);

ScoreReport score_report(const std::string& model, const std::string& station,
                         std::span<const MixtureParams> predictions, std::span<const double> observations,
                         double level = kDefaultIntervalLevel, std::size_t pit_bins = 20,
                         const BootstrapOptions& bootstrap = {});

void write_scores_csv(std::ostream& out, std::span<const ScoreReport> reports);
void write_histogram_csv(std::ostream& out, const HistogramDiag& hist);
void write_importance_csv(std::ostream& out, std::span<const Importance> rows);
struct Significance {
    std::string station;
    double p_value = 1.0;
    bool rejected = false;
};
void write_significance_csv(std::ostream& out, std::span<const Significance> rows);

}  // namespace mixboost
