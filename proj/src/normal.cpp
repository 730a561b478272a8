#include "mixboost/normal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "mixboost/error.hpp"

namespace mixboost {

namespace {

constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;  // 1/sqrt(2 pi)
constexpr double kHalfLog2Pi = 0.918938533204672741780329736406;   // log(2 pi)/2

void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) {
        std::ostringstream msg;
        msg << what << ": non-finite input " << x;
        throw DomainError(msg.str());
    }
}

}  // namespace

const char* to_string(Loss loss) {
    return loss == Loss::LogS ? "logs" : "crps";
}

Loss parse_loss(const std::string& text) {
    if (text == "logs" || text == "LogS" || text == "LOGS") return Loss::LogS;
    if (text == "crps" || text == "CRPS") return Loss::CRPS;
    throw DomainError("unknown loss '" + text + "' (expected logs or crps)");
}

MixtureParams::MixtureParams(std::vector<double> w, std::vector<double> mu,
                             std::vector<double> sigma)
    : weights(std::move(w)), locations(std::move(mu)), scales(std::move(sigma)) {}

MixtureParams MixtureParams::single(double location, double scale) {
    return MixtureParams({1.0}, {location}, {scale});
}

void MixtureParams::validate() const {
    const std::size_t k = weights.size();
    if (k == 0) throw DomainError("mixture must have at least one component");
    if (locations.size() != k || scales.size() != k) {
        throw DomainError("mixture weights, locations and scales differ in length");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double w = weights[i];
        if (!(w >= 0.0 && w <= 1.0)) throw DomainError("mixture weight outside [0,1]");
        if (!std::isfinite(locations[i])) throw DomainError("non-finite mixture location");
        if (!(scales[i] > 0.0) || !std::isfinite(scales[i])) {
            throw DomainError("mixture scale must be finite and positive");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("mixture weights do not sum to one");
}

double MixtureParams::mean() const {
    double m = 0.0;
    for (std::size_t k = 0; k < size(); ++k) m += weights[k] * locations[k];
    return m;
}

namespace detail {

double phi(double z) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// erfc keeps full relative precision in the lower tail, which the CRPS and
// quantile code rely on.
double Phi(double z) noexcept { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }

double a_func(double mu, double var) noexcept {
    const double sigma = std::sqrt(var);
    const double z = mu / sigma;
    return mu * (2.0 * Phi(z) - 1.0) + 2.0 * sigma * phi(z);
}

double log_density(const MixtureParams& params, double y) noexcept {
    const std::size_t k = params.size();
    double terms[16];
    double top = -std::numeric_limits<double>::infinity();
    std::vector<double> heap;
    double* t = terms;
    if (k > 16) {
        heap.resize(k);
        t = heap.data();
    }
    for (std::size_t i = 0; i < k; ++i) {
        const double z = (y - params.locations[i]) / params.scales[i];
        t[i] = params.weights[i] > 0.0
                   ? std::log(params.weights[i]) - 0.5 * z * z - std::log(params.scales[i])
                   : -std::numeric_limits<double>::infinity();
        top = std::max(top, t[i]);
    }
    if (!std::isfinite(top)) return -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += std::exp(t[i] - top);
    return top + std::log(sum) - kHalfLog2Pi;
}

double crps(const MixtureParams& params, double y) noexcept {
    const std::size_t k = params.size();
    double first = 0.0;
    double second = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double wi = params.weights[i];
        const double vi = params.scales[i] * params.scales[i];
        first += wi * a_func(y - params.locations[i], vi);
        for (std::size_t j = 0; j < k; ++j) {
            const double vj = params.scales[j] * params.scales[j];
            second += wi * params.weights[j] * a_func(params.locations[i] - params.locations[j], vi + vj);
        }
    }
    return std::max(0.0, first - 0.5 * second);
}

double cdf(const MixtureParams& params, double y) noexcept {
    double c = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        c += params.weights[i] * Phi((y - params.locations[i]) / params.scales[i]);
    }
    return std::min(1.0, c);
}

double score(Loss loss, const MixtureParams& params, double y, std::ptrdiff_t row) {
    if (loss == Loss::CRPS) return crps(params, y);
    const double s = -log_density(params, y);
    if (!std::isfinite(s)) {
        std::ostringstream msg;
        msg << "LogS overflow: predictive density is numerically zero at y=" << y;
        if (row >= 0) msg << " (row " << row << ")";
        throw ScoreOverflow(msg.str(), row);
    }
    return s;
}

}  // namespace detail

double std_normal_pdf(double z) {
    require_finite(z, "std_normal_pdf");
    return detail::phi(z);
}

double std_normal_cdf(double z) {
    require_finite(z, "std_normal_cdf");
    return detail::Phi(z);
}

double a_func(double mu, double var) {
    require_finite(mu, "a_func");
    if (!(var > 0.0) || !std::isfinite(var)) throw DomainError("a_func: variance must be positive");
    return detail::a_func(mu, var);
}

double logs_mixture(const MixtureParams& params, double y) {
    params.validate();
    require_finite(y, "logs_mixture");
    return detail::score(Loss::LogS, params, y);
}

double crps_mixture(const MixtureParams& params, double y) {
    params.validate();
    require_finite(y, "crps_mixture");
    return detail::crps(params, y);
}

double mixture_pdf(const MixtureParams& params, double y) {
    params.validate();
    return std::exp(detail::log_density(params, y));
}

double mixture_cdf(const MixtureParams& params, double y) {
    params.validate();
    if (std::isnan(y)) throw DomainError("mixture_cdf: NaN input");
    return detail::cdf(params, y);
}

double mixture_quantile(const MixtureParams& params, double p) {
    params.validate();
    if (!(p > 0.0 && p < 1.0)) throw DomainError("mixture_quantile: p must lie in (0,1)");

    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t k = 0; k < params.size(); ++k) {
        lo = std::min(lo, params.locations[k] - 40.0 * params.scales[k]);
        hi = std::max(hi, params.locations[k] + 40.0 * params.scales[k]);
    }

    // Safeguarded Newton on F(x) - p; falls back to bisection when the step
    // leaves the bracket or the density vanishes.
    double x = std::clamp(params.mean(), lo, hi);
    for (int iter = 0; iter < 400; ++iter) {
        const double f = detail::cdf(params, x) - p;
        if (std::abs(f) <= 1e-13) return x;
        if (f < 0.0) lo = x; else hi = x;
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max({1.0, std::abs(lo), std::abs(hi)})) {
            return x;
        }
        const double dens = std::exp(detail::log_density(params, x));
        double next = dens > 0.0 ? x - f / dens : std::numeric_limits<double>::quiet_NaN();
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    return x;
}

}  // namespace mixboost
