#pragma once

// Per-station ensemble forecasts and observations: long-format CSV ingest and
// export, and reduction of members to ensemble summaries.

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mixboost/models.hpp"

namespace mixboost {

struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    /// Parses YYYY-MM-DD; throws DataError on anything else.
    static Date parse(std::string_view text);
    [[nodiscard]] std::string str() const;
    [[nodiscard]] int doy() const;
    [[nodiscard]] Date plus_days(int n) const;
    auto operator<=>(const Date&) const = default;
};

struct MemberValues {
    double ctrl = 0.0;
    std::vector<double> perturbed;  // p01, p02, ...
};

struct DayRecord {
    Date date;
    double observation = 0.0;  // NaN when missing
    std::map<std::string, MemberValues> forecasts;
};

struct StationDataset {
    std::string station_id;
    std::vector<std::string> variables;  // in order of first appearance
    std::vector<DayRecord> days;         // sorted by date, unique

    [[nodiscard]] std::size_t members(const std::string& variable) const;
};

struct IngestStats {
    std::size_t forecast_rows = 0;
    std::size_t observation_rows = 0;
    std::size_t dropped_missing_observation = 0;
};

/// Reads the long-format forecast CSV and, when given, the observation CSV.
/// With observations, days lacking a usable observation are dropped and
/// counted. Errors name the file and line.
std::vector<StationDataset> ingest(const std::string& forecast_path, const std::optional<std::string>& obs_path,
                                   IngestStats* stats = nullptr);
std::vector<StationDataset> ingest_streams(std::istream& forecasts, const std::string& forecast_name,
                                           std::istream* observations, const std::string& obs_name,
                                           IngestStats* stats = nullptr);

/// Writes the two CSVs in canonical order (station, date, variable, ctrl
/// then p01...), numbers in shortest round-trip form.
void export_forecasts(std::ostream& out, const std::vector<StationDataset>& data);
void export_observations(std::ostream& out, const std::vector<StationDataset>& data);

/// Shortest decimal text that reads back to the same double; "NA" for NaN.
std::string format_shortest(double value);

struct EnsembleSummary {
    double mean = 0.0;
    double sd = 0.0;
};
/// Mean (1/n) and sample sd (1/(n - 1)) with sorted summation; n >= 2.
EnsembleSummary summarize_ensemble(std::span<const double> members);

/// Ensemble sds are clamped to this before log-family transforms.
inline constexpr double kMinEnsembleSd = 1e-6;

/// Raw summary rows (MEAN, CTRL, SD per variable as named by the catalog)
/// for selected days; doys filled from the dates.
RawRows summary_rows(const StationDataset& station, const std::vector<std::size_t>& day_indices,
                     const CovariateCatalog& catalog);

}  // namespace mixboost
