#pragma once

// Variable transforms, seasonal climatologies with one sine/cosine pair, and
// conversion to and from standardized anomalies.

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mixboost/estimate.hpp"
#include "mixboost/normal.hpp"

namespace mixboost {

enum class TransformKind { Identity, Log, Logit, HalfLogit };

/// Inputs are clamped to [eps, upper - eps] before the transform so that
/// boundary values (e.g. cloud cover of exactly 0 or 1) stay finite.
inline constexpr double kTransformEpsilon = 1e-9;

struct Transform {
    TransformKind kind = TransformKind::Identity;

    [[nodiscard]] const char* name() const;
    static Transform parse(std::string_view name);
    bool operator==(const Transform&) const = default;
};

/// h(x). Values strictly outside the domain throw DomainError naming `variable`.
double apply_transform(Transform t, double x, std::string_view variable = "");
double invert_transform(Transform t, double h);

/// Transform used for a variable's ensemble mean/control (`sd = false`) or
/// ensemble standard deviation (`sd = true`). Unknown variables use identity.
Transform transform_for(std::string_view variable, bool sd);

/// Ordinal day of year, 1..366, with Feb 29 = 60 in leap years.
int day_of_year(int year, int month, int day);
bool is_leap_year(int year);

/// Harmonic basis value 2*pi*doy/365.25.
double seasonal_angle(int doy);

struct ClimatologyFit {
    std::array<double, 3> loc_coeffs{};    // intercept, sin, cos
    std::array<double, 3> scale_coeffs{};  // on the log scale
    std::string variable_id;
    std::string station_id;

    [[nodiscard]] double mean(int doy) const;
    [[nodiscard]] double sd(int doy) const;
    /// Standard normal at every doy: leaves values unchanged.
    static ClimatologyFit identity(std::string station_id = "", std::string variable_id = "");
    bool operator==(const ClimatologyFit&) const = default;
};

/// Maximum-likelihood seasonal normal fit. Non-finite values are dropped first.
ClimatologyFit fit_climatology(std::span<const double> values, std::span<const int> doys,
                               std::string station_id = "", std::string variable_id = "",
                               const BfgsOptions& opts = {});

struct AnomalySeries {
    std::vector<double> values;
    std::vector<int> doys;
    std::string variable_id;
    std::string station_id;
};

double standardize_value(double x, int doy, const ClimatologyFit& fit);
AnomalySeries standardize(std::span<const double> values, std::span<const int> doys, const ClimatologyFit& fit);

/// Maps an anomaly-scale mixture back to the observed scale at `doy`.
MixtureParams destandardize_mixture(const MixtureParams& z_params, const ClimatologyFit& fit_y, int doy);

void write_climatology_csv(std::ostream& out, std::span<const ClimatologyFit> fits);
std::vector<ClimatologyFit> read_climatology_csv(std::istream& in);

}  // namespace mixboost
