#pragma once

// Run configuration and per-station orchestration: climatology, anomalies,
// fitting, prediction and verification.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mixboost/boosting.hpp"
#include "mixboost/dataset.hpp"
#include "mixboost/models.hpp"
#include "mixboost/verify.hpp"

namespace mixboost {

struct RunConfig {
    std::uint64_t seed = 1;
    // [data]
    std::filesystem::path forecasts = "forecasts.csv";
    std::filesystem::path observations = "observations.csv";
    std::vector<std::string> stations;  // empty: all
    // [model]
    std::string model = "mixsamos-gb";
    Loss loss = Loss::LogS;
    // [boost]
    double step_length = 0.05;
    std::optional<std::size_t> m_stop;  // default depends on the model
    std::size_t cv_folds = 10;
    bool boost_intercepts = true;  // intercepts are boosting candidates
    // [split]; unset ends mean "last 365 days are the test period"
    std::optional<Date> train_start, train_end, test_start, test_end;
    // [verify]
    double level = kDefaultIntervalLevel;
    std::size_t pit_bins = 20;
    double block_length = 25.0;
    std::size_t n_boot = 1000;
    bool importance = false;
    std::size_t importance_repeats = 1;

    /// Parses key = value lines grouped in [sections]. Relative paths are
    /// resolved against `base_dir`.
    static RunConfig parse(std::istream& in, const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& path);
    void validate() const;
    [[nodiscard]] std::string to_ini() const;

    [[nodiscard]] ModelSpec model_spec(const CovariateCatalog& catalog) const;
    [[nodiscard]] BoostConfig boost_config(const ModelSpec& spec, std::uint64_t station_seed) const;
    [[nodiscard]] BootstrapOptions bootstrap(std::uint64_t station_seed) const;
};

struct StationSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};
StationSplit split_days(const StationDataset& station, const RunConfig& config);

/// Seed for everything random within one station.
std::uint64_t station_seed(const RunConfig& config, const std::string& station_id);

struct StationClimatology {
    ClimatologyFit response;
    std::vector<CovariateSource> covariates;
};

/// Fits (or, for raw-scale models, sets to identity) the climatologies of the
/// response and of every covariate the spec uses, on training days only.
StationClimatology fit_station_climatology(const StationDataset& station, const std::vector<std::size_t>& train,
                                           const ModelSpec& spec, const CovariateCatalog& catalog);

struct TrainResult {
    FinalizedModel model;
    std::optional<CvResult> cv;
    std::optional<BoostState> boost;
    std::size_t dropped_rows = 0;  // training days with incomplete covariates
    std::size_t training_rows = 0;
};

TrainResult train_station(const StationDataset& station, const StationSplit& split, const RunConfig& config,
                          const CovariateCatalog& catalog);

struct StationForecasts {
    std::string station_id;
    std::size_t K = 1;
    std::vector<Date> dates;
    std::vector<double> observations;
    std::vector<MixtureParams> predictions;
    /// Raw t2m ensemble (control last) on the same days.
    Eigen::MatrixXd ensemble;
    std::vector<std::string> row_errors;
};

/// Predicts the given days; rows that cannot be predicted are reported in
/// row_errors and left out.
StationForecasts predict_station(const FinalizedModel& model, const StationDataset& station,
                                 const std::vector<std::size_t>& days, const CovariateCatalog& catalog);

struct StationEvaluation {
    ScoreReport model;
    ScoreReport raw_ensemble;  // CRPS only
    std::vector<double> model_crps;
    std::vector<double> raw_crps;
    std::vector<double> pit;
    HistogramDiag rank;
    std::optional<DmResult> dm;  // model vs raw ensemble CRPS
};

StationEvaluation evaluate_station(const StationForecasts& forecasts, const RunConfig& config,
                                   const std::string& model_name);

/// Outcome of one station in a batch run.
struct StationOutcome {
    std::string station_id;
    bool ok = false;
    int failure_code = 0;  // 2 data, 3 numerical
    std::string error;
    std::optional<TrainResult> train;
    std::optional<StationForecasts> forecasts;
    std::optional<StationEvaluation> evaluation;
    std::vector<Importance> importance;
};

/// Runs `work` for every station on `jobs` threads and returns outcomes in
/// station order. Exceptions are captured per station.
std::vector<StationOutcome> for_each_station(
    const std::vector<StationDataset>& data, unsigned jobs,
    const std::function<void(const StationDataset&, StationOutcome&)>& work);

/// Selects stations listed in the config (all when the list is empty).
std::vector<StationDataset> select_stations(std::vector<StationDataset> data, const RunConfig& config);

/// Full run: train, predict, evaluate (and importance when enabled); writes
/// all artifacts under out_dir. Returns the outcomes.
std::vector<StationOutcome> run_pipeline(const RunConfig& config, const std::vector<StationDataset>& data,
                                         const std::filesystem::path& out_dir, unsigned jobs);

/// Artifact writers shared by the batch run and the CLI subcommands.
void write_predictions_csv(std::ostream& out, const std::vector<StationForecasts>& forecasts);
struct PredictionRecord {
    std::string station_id;
    Date date;
    MixtureParams params;
};
std::vector<PredictionRecord> read_predictions_csv(std::istream& in);
void write_mopt_csv(std::ostream& out, const std::vector<StationOutcome>& outcomes);

/// Exit status for a set of outcomes: 0, or the first failure code.
int exit_code(const std::vector<StationOutcome>& outcomes);

}  // namespace mixboost
