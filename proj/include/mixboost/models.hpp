#pragma once

// Constructors for the named models and self-contained prediction from raw
// ensemble summaries to observed-scale mixtures.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mixboost/boosting.hpp"
#include "mixboost/climatology.hpp"
#include "mixboost/model_spec.hpp"

namespace mixboost {

enum class Summary { Mean, Ctrl, Sd };
const char* to_string(Summary summary);
Summary parse_summary(std::string_view text);

/// Anomaly covariate ids per weather variable: "<var>_MEAN", "<var>_CTRL", "<var>_SD".
struct CovariateCatalog {
    std::vector<std::string> variables;

    /// t2m, pr, u10m, v10m, sh, tcc, ws10m, wg10m.
    static CovariateCatalog standard();

    static std::string id(const std::string& variable, Summary summary);
    [[nodiscard]] bool has(const std::string& variable) const;
    /// MEAN and SD ids, variable by variable.
    [[nodiscard]] std::vector<std::string> perturbed_group() const;
    /// CTRL ids.
    [[nodiscard]] std::vector<std::string> control_group() const;
    /// MEAN, CTRL, SD ids, variable by variable.
    [[nodiscard]] std::vector<std::string> all() const;
    void validate() const;
};

ModelSpec make_samos(const CovariateCatalog& catalog, Loss loss = Loss::LogS);
ModelSpec make_samos_gb(const CovariateCatalog& catalog, Loss loss = Loss::LogS);
ModelSpec make_mixsamos(const CovariateCatalog& catalog, Loss loss = Loss::LogS);
ModelSpec make_mixsamos_gb(const CovariateCatalog& catalog, Loss loss = Loss::LogS);
/// MIXSAMOS structure on the raw scale; a baseline only.
ModelSpec make_mixmos(const CovariateCatalog& catalog, Loss loss = Loss::LogS);

/// Builds a model by name: samos, samos-gb, mixsamos, mixsamos-gb, mixmos.
ModelSpec make_model(const std::string& name, const CovariateCatalog& catalog, Loss loss = Loss::LogS);
/// Defaults for boosted models: 2000 iterations for one component, 6000 for two.
BoostConfig default_boost_config(const ModelSpec& spec);

/// How a design column is derived from raw ensemble summaries.
struct CovariateSource {
    std::string id;
    std::string variable;
    Summary summary = Summary::Mean;
    Transform transform;
    ClimatologyFit climatology;  // of the transformed summary
};

/// A deployable model: coefficients plus everything needed to map raw
/// summaries to observed-scale mixtures.
struct FinalizedModel {
    ModelSpec spec;
    Coefficients coefficients;
    std::size_t iteration = 0;  // boosting iterations used; 0 for BFGS fits
    std::vector<CovariateSource> covariates;  // design column order
    std::optional<ColumnStats> column_stats;  // boosting only
    ClimatologyFit response_climatology;
    std::string station_id;

    [[nodiscard]] std::vector<std::string> columns() const;
};

FinalizedModel finalize_model(const BoostState& state, std::size_t m, const ColumnStats& stats,
                              std::vector<CovariateSource> covariates, ClimatologyFit response,
                              std::string station_id = "");
FinalizedModel finalize_bfgs(const ModelSpec& spec, const Coefficients& coeffs,
                             std::vector<CovariateSource> covariates, ClimatologyFit response,
                             std::string station_id = "");

/// Raw (untransformed) summaries, one column per model covariate, in any
/// column order; NaN marks a missing value.
struct RawRows {
    std::vector<std::string> columns;
    Eigen::MatrixXd x;
    std::vector<int> doys;
};

struct RowPrediction {
    std::optional<MixtureParams> params;
    std::string error;  // set when params is empty
};

/// Converts raw summaries to the model's anomaly design. Rows with a missing
/// or invalid value get NaN entries and a message in `errors`.
Design anomaly_design(const FinalizedModel& model, const RawRows& rows, std::vector<std::string>* errors);

/// Mixture on the anomaly scale for rows of an already prepared design.
std::vector<MixtureParams> predict_anomaly(const FinalizedModel& model, const Design& anomalies);

std::vector<RowPrediction> predict(const FinalizedModel& model, const RawRows& rows);

void write_finalized_model(std::ostream& out, const FinalizedModel& model);
FinalizedModel read_finalized_model(std::istream& in);

}  // namespace mixboost
