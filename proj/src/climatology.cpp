#include "mixboost/climatology.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "mixboost/error.hpp"

namespace mixboost {

const char* Transform::name() const {
    switch (kind) {
        case TransformKind::Identity: return "identity";
        case TransformKind::Log: return "log";
        case TransformKind::Logit: return "logit";
        case TransformKind::HalfLogit: return "half-logit";
    }
    return "?";
}

Transform Transform::parse(std::string_view name) {
    if (name == "identity" || name == "id") return {TransformKind::Identity};
    if (name == "log") return {TransformKind::Log};
    if (name == "logit") return {TransformKind::Logit};
    if (name == "half-logit") return {TransformKind::HalfLogit};
    throw DomainError("unknown transform '" + std::string(name) + "'");
}

namespace {

[[noreturn]] void domain_violation(Transform t, double x, std::string_view variable) {
    std::ostringstream msg;
    msg << t.name() << " transform";
    if (!variable.empty()) msg << " of variable '" << variable << "'";
    msg << ": value " << x << " is outside the domain";
    throw DomainError(msg.str());
}

double clamp_logit(double p) {
    p = std::clamp(p, kTransformEpsilon, 1.0 - kTransformEpsilon);
    return std::log(p / (1.0 - p));
}

double inv_logit(double h) {
    return h >= 0.0 ? 1.0 / (1.0 + std::exp(-h)) : std::exp(h) / (1.0 + std::exp(h));
}

}  // namespace

double apply_transform(Transform t, double x, std::string_view variable) {
    if (!std::isfinite(x)) domain_violation(t, x, variable);
    switch (t.kind) {
        case TransformKind::Identity:
            return x;
        case TransformKind::Log:
            if (x < 0.0) domain_violation(t, x, variable);
            return std::log(std::max(x, kTransformEpsilon));
        case TransformKind::Logit:
            if (x < 0.0 || x > 1.0) domain_violation(t, x, variable);
            return clamp_logit(x);
        case TransformKind::HalfLogit:
            if (x < 0.0 || x > 2.0) domain_violation(t, x, variable);
            return clamp_logit(x / 2.0);
    }
    return x;
}

double invert_transform(Transform t, double h) {
    switch (t.kind) {
        case TransformKind::Identity: return h;
        case TransformKind::Log: return std::exp(h);
        case TransformKind::Logit: return inv_logit(h);
        case TransformKind::HalfLogit: return 2.0 * inv_logit(h);
    }
    return h;
}

Transform transform_for(std::string_view variable, bool sd) {
    if (variable == "sh" || variable == "ws10m" || variable == "wg10m") return {TransformKind::Log};
    if (variable == "tcc") return {sd ? TransformKind::HalfLogit : TransformKind::Logit};
    if (sd && (variable == "t2m" || variable == "pr" || variable == "u10m" || variable == "v10m")) {
        return {TransformKind::Log};
    }
    return {TransformKind::Identity};
}

bool is_leap_year(int year) {
    return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int day_of_year(int year, int month, int day) {
    static constexpr int kCumulative[12] = {0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334};
    static constexpr int kLength[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month < 1 || month > 12) throw DomainError("invalid month " + std::to_string(month));
    const int length = kLength[month - 1] + (month == 2 && is_leap_year(year) ? 1 : 0);
    if (day < 1 || day > length) throw DomainError("invalid day " + std::to_string(day));
    return kCumulative[month - 1] + day + (month > 2 && is_leap_year(year) ? 1 : 0);
}

double seasonal_angle(int doy) {
    return 2.0 * std::numbers::pi * static_cast<double>(doy) / 365.25;
}

double ClimatologyFit::mean(int doy) const {
    const double a = seasonal_angle(doy);
    return loc_coeffs[0] + loc_coeffs[1] * std::sin(a) + loc_coeffs[2] * std::cos(a);
}

double ClimatologyFit::sd(int doy) const {
    const double a = seasonal_angle(doy);
    const double eta = scale_coeffs[0] + scale_coeffs[1] * std::sin(a) + scale_coeffs[2] * std::cos(a);
    return std::exp(std::clamp(eta, -kScaleEtaClamp, kScaleEtaClamp));
}

ClimatologyFit ClimatologyFit::identity(std::string station_id, std::string variable_id) {
    ClimatologyFit fit;
    fit.station_id = std::move(station_id);
    fit.variable_id = std::move(variable_id);
    return fit;
}

ClimatologyFit fit_climatology(std::span<const double> values, std::span<const int> doys,
                               std::string station_id, std::string variable_id, const BfgsOptions& opts) {
    if (values.size() != doys.size()) throw DomainError("fit_climatology: values and doys differ in length");
    std::vector<double> y;
    std::vector<int> d;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) continue;
        if (doys[i] < 1 || doys[i] > 366) throw DomainError("fit_climatology: doy out of range");
        y.push_back(values[i]);
        d.push_back(doys[i]);
    }
    const std::string what = "climatology for " + station_id + "/" + variable_id;
    if (y.size() < 10) throw DomainError(what + ": need at least 10 observations, got " + std::to_string(y.size()));
    if (std::set<int>(d.begin(), d.end()).size() < 2) throw DomainError(what + ": need at least 2 distinct days of year");

    ModelSpec spec;
    spec.name = "climatology";
    spec.K = 1;
    spec.loss = Loss::LogS;
    spec.predictors = {
        {Target::Weight, 0, {}, false},
        {Target::Location, 0, {"sin", "cos"}, true},
        {Target::Scale, 0, {"sin", "cos"}, true},
    };
    const Eigen::Index n = static_cast<Eigen::Index>(y.size());
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd yv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = seasonal_angle(d[static_cast<std::size_t>(i)]);
        x(i, 0) = std::sin(a);
        x(i, 1) = std::cos(a);
        yv[i] = y[static_cast<std::size_t>(i)];
    }
    const BoundModel model(spec, {"sin", "cos"});

    // Start from the unconditional moments; a zero start is badly scaled for
    // raw variables such as pressure.
    const double mean = yv.mean();
    const double var = (yv.array() - mean).square().sum() / static_cast<double>(n - 1);
    const double sd0 = std::max(std::sqrt(var), 1e-6 * std::max(1.0, std::abs(mean)));
    Coefficients start = Coefficients::zeros(spec);
    start.terms[1][0] = mean;
    start.terms[2][0] = std::log(sd0);

    Objective objective = [&](const Eigen::VectorXd& flat, Eigen::VectorXd& grad) {
        auto lg = total_loss_and_gradient(model, Coefficients::unflatten(spec, flat), x, yv);
        grad = std::move(lg.gradient);
        return lg.loss;
    };
    BfgsResult res;
    try {
        res = minimize_bfgs(objective, start.flatten(), opts);
    } catch (const ConvergenceError& e) {
        throw ConvergenceError(what + ": " + e.what(), e.iterations(), e.gradient_norm());
    }
    if (res.stop == StopReason::MaxIterations) {
        throw ConvergenceError(what + ": BFGS reached the iteration limit", res.iterations, res.gradient.norm());
    }
    const Coefficients c = Coefficients::unflatten(spec, res.x);
    ClimatologyFit fit;
    fit.station_id = std::move(station_id);
    fit.variable_id = std::move(variable_id);
    for (std::size_t t = 0; t < 3; ++t) {
        fit.loc_coeffs[t] = c.terms[1][t];
        fit.scale_coeffs[t] = c.terms[2][t];
    }
    return fit;
}

double standardize_value(double x, int doy, const ClimatologyFit& fit) {
    return (x - fit.mean(doy)) / fit.sd(doy);
}

AnomalySeries standardize(std::span<const double> values, std::span<const int> doys, const ClimatologyFit& fit) {
    if (values.size() != doys.size()) throw DomainError("standardize: values and doys differ in length");
    AnomalySeries out;
    out.variable_id = fit.variable_id;
    out.station_id = fit.station_id;
    out.values.reserve(values.size());
    out.doys.assign(doys.begin(), doys.end());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw DomainError("standardize: non-finite value at position " + std::to_string(i) + " of " +
                              fit.station_id + "/" + fit.variable_id);
        }
        out.values.push_back(standardize_value(values[i], doys[i], fit));
    }
    return out;
}

MixtureParams destandardize_mixture(const MixtureParams& z_params, const ClimatologyFit& fit_y, int doy) {
    z_params.validate();
    const double m = fit_y.mean(doy);
    const double s = fit_y.sd(doy);
    MixtureParams out = z_params;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out.locations[k] = z_params.locations[k] * s + m;
        out.scales[k] = z_params.scales[k] * s;
    }
    return out;
}

void write_climatology_csv(std::ostream& out, std::span<const ClimatologyFit> fits) {
    out << "station_id,variable,loc0,loc1,loc2,scale0,scale1,scale2\n";
    for (const auto& f : fits) {
        out << f.station_id << "," << f.variable_id;
        for (double v : f.loc_coeffs) out << "," << format_double(v);
        for (double v : f.scale_coeffs) out << "," << format_double(v);
        out << "\n";
    }
}

std::vector<ClimatologyFit> read_climatology_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("climatology file is empty");
    std::vector<ClimatologyFit> fits;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 8) throw DataError("climatology line " + std::to_string(line_no) + ": expected 8 fields");
        ClimatologyFit f;
        f.station_id = fields[0];
        f.variable_id = fields[1];
        for (std::size_t t = 0; t < 6; ++t) {
            const std::string& s = fields[2 + t];
            double v = 0.0;
            const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
                throw DataError("climatology line " + std::to_string(line_no) + ": bad number '" + s + "'");
            }
            (t < 3 ? f.loc_coeffs[t] : f.scale_coeffs[t - 3]) = v;
        }
        fits.push_back(std::move(f));
    }
    return fits;
}

}  // namespace mixboost
