#include "mixboost/simulate.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <nlohmann/json.hpp>

#include "mixboost/error.hpp"
#include "mixboost/rng.hpp"

namespace mixboost {

namespace {

struct VariableClimate {
    const char* name;
    std::array<double, 3> loc;
    std::array<double, 3> scale;
    double jitter;  // station-to-station spread of the location intercept
};

// Climatologies of the transformed ensemble mean, per variable.
const std::vector<VariableClimate>& other_climates() {
    static const std::vector<VariableClimate> table = {
        {"pr", {1013.0, 2.0, 3.0}, {std::log(7.0), 0.05, 0.1}, 5.0},
        {"u10m", {1.0, 0.5, 0.5}, {std::log(3.0), 0.0, 0.1}, 0.5},
        {"v10m", {0.5, 0.3, 0.2}, {std::log(3.0), 0.0, 0.1}, 0.5},
        {"sh", {std::log(0.006), -0.2, -0.4}, {std::log(0.25), 0.0, 0.05}, 0.1},
        {"tcc", {0.3, 0.2, 0.3}, {std::log(1.2), 0.0, 0.05}, 0.2},
        {"ws10m", {std::log(3.5), 0.05, 0.15}, {std::log(0.35), 0.0, 0.05}, 0.1},
        {"wg10m", {std::log(7.0), 0.05, 0.15}, {std::log(0.3), 0.0, 0.05}, 0.1},
    };
    return table;
}

struct ScenarioParams {
    double phi = 0.0;         // AR(1) coefficient of all latent series
    double ctrl_corr = 0.9;   // control latent vs mean latent, non-response variables
    double member_tau = 0.5;  // member spread around the center, non-response variables
};

ScenarioParams params_for(const std::string& scenario) {
    if (scenario == "seasonal-basic") return {0.0, 0.9, 0.5};
    if (scenario == "underdispersed") return {0.6, 0.9, 0.5};
    if (scenario == "bimodal") return {0.5, 0.9, 0.5};
    if (scenario == "sparse-signal") return {0.5, 0.0, 0.5};
    std::string names;
    for (const auto& s : scenario_names()) names += (names.empty() ? "" : ", ") + s;
    throw DomainError("unknown scenario '" + scenario + "' (known: " + names + ")");
}

std::vector<double> ar1(Rng& rng, std::size_t n, double phi) {
    std::vector<double> x(n);
    const double innovation = std::sqrt(1.0 - phi * phi);
    for (std::size_t t = 0; t < n; ++t) {
        const double e = rng.normal();
        x[t] = t == 0 ? e : phi * x[t - 1] + innovation * e;
    }
    return x;
}

double climate_mean(const std::array<double, 3>& c, int doy) {
    const double a = seasonal_angle(doy);
    return c[0] + c[1] * std::sin(a) + c[2] * std::cos(a);
}

double climate_sd(const std::array<double, 3>& c, int doy) {
    return std::exp(climate_mean(c, doy));
}

// Bimodal scenario: the perturbed ensemble and the control sit on either side
// of the weather signal, and the observation follows one of them.
constexpr double kBimodalSignal = 0.8;
constexpr double kBimodalNoise = 0.3;

double bimodal_offset(double g) {
    return (g >= 0.0 ? 1.0 : -1.0) * (1.0 + 0.3 * std::abs(g));
}

}  // namespace

const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names = {"seasonal-basic", "underdispersed", "bimodal", "sparse-signal"};
    return names;
}

std::string station_name(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "ST%02zu", index + 1);
    return buf;
}

Simulation simulate(const SimulationOptions& opts) {
    const ScenarioParams sp = params_for(opts.scenario);
    if (opts.stations < 1) throw DomainError("simulate: need at least one station");
    if (opts.years < 1) throw DomainError("simulate: need at least one year");
    if (opts.members < 2) throw DomainError("simulate: need at least two perturbed members");
    if (!(opts.missing_fraction >= 0.0 && opts.missing_fraction < 1.0)) {
        throw DomainError("simulate: missing fraction must lie in [0, 1)");
    }

    std::vector<Date> dates;
    const Date end{opts.start.year + opts.years, opts.start.month, opts.start.day};
    for (Date d = opts.start; d < end; d = d.plus_days(1)) dates.push_back(d);
    const std::size_t n = dates.size();

    Simulation sim;
    if (opts.scenario == "seasonal-basic") {
        sim.description = "Z = 0.8 v + 0.6 e; calibrated 51-member ensemble around 0.8 v; response climatology "
                          "location (5, 2, 0), log-scale (0.1, 0, 0)";
        sim.active_covariates = {"t2m_MEAN", "t2m_CTRL"};
    } else if (opts.scenario == "underdispersed") {
        sim.description = "as seasonal-basic with AR(1) latents and member spread 0.15 instead of 0.6";
        sim.active_covariates = {"t2m_MEAN", "t2m_CTRL"};
    } else if (opts.scenario == "bimodal") {
        sim.description = "Z = 0.8 v + d or 0.8 v - d (fair coin) plus 0.3 e, d = sign(g) (1 + 0.3 |g|); "
                          "perturbed members around 0.8 v + d with spread 0.3, control at 0.8 v - d";
        sim.active_covariates = {"t2m_MEAN", "t2m_CTRL"};
    } else {
        sim.description = "Z ~ 1/2 N(v_t2m + 0.7 v_pr, 0.6^2) + 1/2 N(c_t2m, 0.6^2); all other summaries are noise";
        sim.active_covariates = {"t2m_MEAN", "pr_MEAN", "t2m_CTRL"};
    }

    const auto& climates = other_climates();
    for (std::size_t s = 0; s < opts.stations; ++s) {
        const std::string sid = station_name(s);
        Rng rng(derive_seed(opts.seed, sid));

        ClimatologyFit response;
        response.station_id = sid;
        response.variable_id = "t2m";
        if (opts.scenario == "seasonal-basic") {
            response.loc_coeffs = {5.0, 2.0, 0.0};
            response.scale_coeffs = {0.1, 0.0, 0.0};
        } else {
            response.loc_coeffs = {9.0 + 4.0 * (rng.uniform() - 0.5), 2.0 * (rng.uniform() - 0.5),
                                   -8.0 + 2.0 * (rng.uniform() - 0.5)};
            response.scale_coeffs = {std::log(3.0) + 0.2 * (rng.uniform() - 0.5), 0.05, 0.15};
        }
        std::vector<std::array<double, 3>> other_loc;
        for (const auto& c : climates) {
            auto loc = c.loc;
            loc[0] += c.jitter * (rng.uniform() - 0.5);
            other_loc.push_back(loc);
        }

        // Latent series, one pair per variable: v (ensemble center) and c (control).
        const double phi = sp.phi;
        std::vector<double> v_t2m = ar1(rng, n, phi);
        std::vector<double> c_t2m = ar1(rng, n, phi);
        std::vector<std::vector<double>> v_other, c_other;
        for (std::size_t w = 0; w < climates.size(); ++w) {
            v_other.push_back(ar1(rng, n, phi));
            std::vector<double> c = ar1(rng, n, phi);
            const double r = sp.ctrl_corr;
            for (std::size_t t = 0; t < n; ++t) c[t] = r * v_other[w][t] + std::sqrt(1.0 - r * r) * c[t];
            c_other.push_back(std::move(c));
        }
        if (opts.scenario == "seasonal-basic" || opts.scenario == "underdispersed") {
            for (std::size_t t = 0; t < n; ++t) c_t2m[t] = 0.9 * v_t2m[t] + std::sqrt(1.0 - 0.81) * c_t2m[t];
        }

        StationDataset ds;
        ds.station_id = sid;
        ds.variables = CovariateCatalog::standard().variables;
        ds.days.resize(n);
        std::vector<double> members(opts.members);
        for (std::size_t t = 0; t < n; ++t) {
            DayRecord& day = ds.days[t];
            day.date = dates[t];
            const int doy = dates[t].doy();
            const double mu_y = response.mean(doy);
            const double sd_y = response.sd(doy);

            // Response anomaly and t2m ensemble in response anomaly units.
            double z = 0.0, center = 0.0, ctrl = 0.0, tau = 0.0;
            if (opts.scenario == "seasonal-basic" || opts.scenario == "underdispersed") {
                z = 0.8 * v_t2m[t] + 0.6 * rng.normal();
                center = 0.8 * v_t2m[t];
                ctrl = 0.8 * c_t2m[t];
                tau = opts.scenario == "seasonal-basic" ? 0.6 : 0.15;
            } else if (opts.scenario == "bimodal") {
                // c_t2m drives the split between the two groups.
                const double d = bimodal_offset(c_t2m[t]);
                const bool second = rng.bernoulli(0.5);
                center = kBimodalSignal * v_t2m[t] + d;
                ctrl = kBimodalSignal * v_t2m[t] - d;
                z = (second ? ctrl : center) + kBimodalNoise * rng.normal();
                tau = kBimodalNoise;
            } else {
                const bool second = rng.bernoulli(0.5);
                z = (second ? c_t2m[t] : v_t2m[t] + 0.7 * v_other[0][t]) + 0.6 * rng.normal();
                center = v_t2m[t];
                ctrl = c_t2m[t];
                tau = 0.5;
            }
            day.observation = rng.bernoulli(opts.missing_fraction) ? std::numeric_limits<double>::quiet_NaN()
                                                                   : mu_y + sd_y * z;
            MemberValues t2m;
            t2m.ctrl = mu_y + sd_y * ctrl;
            for (double& m : members) m = mu_y + sd_y * (center + tau * rng.normal());
            t2m.perturbed = members;
            day.forecasts.emplace("t2m", std::move(t2m));

            for (std::size_t w = 0; w < climates.size(); ++w) {
                const Transform h = transform_for(climates[w].name, false);
                const double m = climate_mean(other_loc[w], doy);
                const double sd = climate_sd(climates[w].scale, doy);
                MemberValues mv;
                mv.ctrl = invert_transform(h, m + sd * c_other[w][t]);
                for (double& x : members) x = invert_transform(h, m + sd * (v_other[w][t] + sp.member_tau * rng.normal()));
                mv.perturbed = members;
                day.forecasts.emplace(climates[w].name, std::move(mv));
            }
        }
        sim.data.push_back(std::move(ds));
        sim.truth.push_back({sid, response});
    }
    return sim;
}

std::string simulation_metadata_json(const SimulationOptions& opts, const Simulation& sim) {
    nlohmann::ordered_json j;
    j["scenario"] = opts.scenario;
    j["seed"] = opts.seed;
    j["stations"] = opts.stations;
    j["years"] = opts.years;
    j["start"] = opts.start.str();
    j["members"] = opts.members;
    j["missing_fraction"] = opts.missing_fraction;
    j["description"] = sim.description;
    j["active_covariates"] = sim.active_covariates;
    const ScenarioParams sp = params_for(opts.scenario);
    j["latent_ar1"] = sp.phi;
    j["control_correlation"] = sp.ctrl_corr;
    auto& truth = j["truth"];
    truth = nlohmann::ordered_json::array();
    for (const auto& t : sim.truth) {
        nlohmann::ordered_json st;
        st["station_id"] = t.station_id;
        st["response_location"] = t.response.loc_coeffs;
        st["response_log_scale"] = t.response.scale_coeffs;
        truth.push_back(std::move(st));
    }
    return j.dump(2) + "\n";
}

}  // namespace mixboost
