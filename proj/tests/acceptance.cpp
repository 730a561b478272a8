// Acceptance run: one PASS/FAIL line per criterion. Every tolerance, seed
// count and experiment size is fixed below. Pass criterion numbers as
// arguments to run a subset.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "mixboost/boosting.hpp"
#include "mixboost/climatology.hpp"
#include "mixboost/estimate.hpp"
#include "mixboost/gradients.hpp"
#include "mixboost/models.hpp"
#include "mixboost/pipeline.hpp"
#include "mixboost/simulate.hpp"
#include "mixboost/verify.hpp"
#include "oracles.hpp"

using namespace mixboost;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, a, b, c, d);
    return buf;
}

// Random mixture in linear-predictor form, shared by criteria 1-3.
struct RandomCase {
    std::size_t K;
    std::vector<double> eta;
    double y;
};

std::vector<RandomCase> random_cases(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<int> k_dist(1, 3);
    std::normal_distribution<double> weight(0.0, 1.0);
    std::uniform_real_distribution<double> loc(-3.0, 3.0), log_scale(-1.0, 1.0), obs(-4.0, 4.0);
    std::vector<RandomCase> cases;
    for (std::size_t i = 0; i < count; ++i) {
        RandomCase c;
        c.K = static_cast<std::size_t>(k_dist(gen));
        c.eta.resize(3 * c.K);
        for (std::size_t k = 0; k < c.K; ++k) c.eta[k] = weight(gen);
        for (std::size_t k = 0; k < c.K; ++k) {
            c.eta[c.K + 2 * k] = loc(gen);
            c.eta[c.K + 2 * k + 1] = log_scale(gen);
        }
        c.y = obs(gen);
        cases.push_back(std::move(c));
    }
    return cases;
}

std::vector<double> as_eta_gradient(const PredictorGradients& g, std::size_t K) {
    std::vector<double> out(3 * K);
    for (std::size_t k = 0; k < K; ++k) {
        out[k] = g.d_eta_omega[k];
        out[K + 2 * k] = g.d_eta_mu[k];
        out[K + 2 * k + 1] = g.d_eta_sigma[k];
    }
    return out;
}

// 1. Analytic gradients against central finite differences.
Outcome gradient_correctness() {
    constexpr std::size_t kCases = 1000;
    constexpr double kRel = 1e-6, kAbs = 1e-8, kStep = 1e-6;
    const auto cases = random_cases(kCases, 20240101);
    std::size_t bad = 0;
    double worst = 0.0;
    const auto crps = [](const MixtureParams& p, double y) { return crps_mixture(p, y); };
    const auto logs = [](const MixtureParams& p, double y) { return oracle::logs(p, y); };
    for (const auto& c : cases) {
        const MixtureParams p = oracle::from_etas(c.eta, c.K);
        const auto a_logs = as_eta_gradient(logs_gradients(p, c.y), c.K);
        const auto a_crps = as_eta_gradient(crps_gradients(p, c.y), c.K);
        const auto f_logs = oracle::fd_gradient(logs, c.eta, c.K, c.y, kStep);
        const auto f_crps = oracle::fd_gradient(crps, c.eta, c.K, c.y, kStep);
        for (std::size_t j = 0; j < c.eta.size(); ++j) {
            for (const auto& [a, f] : {std::pair{a_logs[j], f_logs[j]}, std::pair{a_crps[j], f_crps[j]}}) {
                if (!oracle::close(a, f, kRel, kAbs)) ++bad;
                worst = std::max(worst, std::abs(a - f) / std::max(std::abs(f), kAbs / kRel));
            }
        }
    }
    return {bad == 0, fmt("%.0f cases x 2 losses, %.0f mismatches, worst scaled error %.2e", kCases, double(bad), worst)};
}

// 2. Closed-form CRPS against quadrature of the integral definition.
Outcome crps_closed_form() {
    constexpr std::size_t kCases = 1000;
    constexpr double kAbs = 1e-8;
    constexpr double kReference = 0.2336950;  // CRPS of N(0, 1) at y = 0
    constexpr double kReferenceTol = 1e-6;
    const auto cases = random_cases(kCases, 20240202);
    double worst = 0.0;
    for (const auto& c : cases) {
        const MixtureParams p = oracle::from_etas(c.eta, c.K);
        worst = std::max(worst, std::abs(crps_mixture(p, c.y) - oracle::crps_quadrature(p, c.y)));
    }
    const double single = crps_mixture(MixtureParams::single(0.0, 1.0), 0.0);
    const bool pass = worst <= kAbs && std::abs(single - kReference) <= kReferenceTol;
    return {pass, fmt("max |closed form - quadrature| = %.2e over %.0f cases; N(0,1) at 0 = %.9f", worst,
                      double(kCases), single)};
}

// 3. Weight gradients sum to zero.
Outcome softmax_gauge() {
    constexpr double kTol = 1e-10;
    auto cases = random_cases(1000, 20240101);
    const auto more = random_cases(1000, 20240303);
    cases.insert(cases.end(), more.begin(), more.end());
    double worst = 0.0;
    for (const auto& c : cases) {
        const MixtureParams p = oracle::from_etas(c.eta, c.K);
        for (Loss loss : {Loss::LogS, Loss::CRPS}) {
            const auto g = loss_gradients(loss, p, c.y);
            double sum = 0.0;
            for (double v : g.d_eta_omega) sum += v;
            worst = std::max(worst, std::abs(sum));
        }
    }
    return {worst <= kTol, fmt("max |sum of weight gradients| = %.2e over %.0f cases, both losses", worst,
                               double(cases.size()))};
}

// 4. BFGS recovery of a two-component MIXSAMOS truth.
Outcome parameter_recovery() {
    constexpr std::size_t kSeeds = 20, kRows = 5000;
    constexpr double kLocationTol = 0.1, kWeightTol = 0.05, kRequired = 0.95;
    const ModelSpec spec = make_mixsamos(CovariateCatalog{{"t2m"}});
    // Predictor order: weight1, weight2, location1, scale1, location2, scale2.
    const Coefficients truth{{{0.2, 0.5}, {0.0, -0.3}, {-2.0, 0.8}, {-0.5, 0.2}, {2.0, 0.6}, {-0.3}}};
    std::size_t good = 0;
    double worst_loc = 0.0, worst_w = 0.0;
    for (std::size_t s = 0; s < kSeeds; ++s) {
        std::mt19937_64 gen(1000 + s);
        std::normal_distribution<double> nd(0.0, 1.0);
        std::uniform_real_distribution<double> ud(0.0, 1.0);
        Design design;
        design.columns = {"t2m_MEAN", "t2m_CTRL", "t2m_SD"};
        design.x.resize(kRows, 3);
        Eigen::VectorXd y(kRows);
        const BoundModel bound(spec, design.columns);
        for (std::size_t i = 0; i < kRows; ++i) {
            const double mean = nd(gen);
            design.x(i, 0) = mean;
            design.x(i, 1) = 0.5 * mean + std::sqrt(0.75) * nd(gen);
            design.x(i, 2) = nd(gen);
        }
        const RowMatrix eta = bound.linear_predictors(truth, design.x);
        std::vector<double> true_w(kRows);
        for (std::size_t i = 0; i < kRows; ++i) {
            MixtureParams p;
            bound.params_from_etas(eta.row(i).data(), p);
            true_w[i] = p.weights[0];
            const std::size_t k = ud(gen) < p.weights[0] ? 0 : 1;
            y[i] = p.locations[k] + p.scales[k] * nd(gen);
        }
        const FittedCoefficients fit = fit_bfgs(spec, design, y);
        const RowMatrix fitted = bound.linear_predictors(fit.coefficients, design.x);
        double w_err = 0.0;
        for (std::size_t i = 0; i < kRows; ++i) {
            MixtureParams p;
            bound.params_from_etas(fitted.row(i).data(), p);
            w_err += std::abs(p.weights[0] - true_w[i]);
        }
        w_err /= static_cast<double>(kRows);
        double loc_err = 0.0;
        for (std::size_t j : {spec.location_index(0), spec.location_index(1)}) {
            for (std::size_t t = 0; t < truth.terms[j].size(); ++t) {
                loc_err = std::max(loc_err, std::abs(fit.coefficients.terms[j][t] - truth.terms[j][t]));
            }
        }
        worst_loc = std::max(worst_loc, loc_err);
        worst_w = std::max(worst_w, w_err);
        if (loc_err <= kLocationTol && w_err <= kWeightTol) ++good;
    }
    const double rate = static_cast<double>(good) / kSeeds;
    return {rate >= kRequired, fmt("%.0f/20 seeds recovered (worst location coefficient error %.3f, worst mean "
                                   "weight error %.3f)",
                                   double(good), worst_loc, worst_w)};
}

// 5. Every boosting update re-derived from scratch.
struct MechanicsReport {
    std::size_t iterations = 0, violations = 0;
    std::string first;
};

MechanicsReport check_mechanics(const ModelSpec& spec, const Design& design, const Eigen::VectorXd& y,
                                const BoostConfig& config) {
    const BoostState state = boost_fit(spec, design, y, config);
    MechanicsReport r;
    r.iterations = state.steps.size();
    const auto n = static_cast<std::size_t>(design.x.rows());
    const std::size_t K = spec.K, J = spec.predictors.size();
    const BoundModel bound(state.spec, design.columns);
    const auto fail = [&](std::size_t m, const std::string& what) {
        if (r.violations++ == 0) r.first = "iteration " + std::to_string(m + 1) + ": " + what;
    };
    if (state.steps.size() != config.m_stop) fail(state.steps.size(), "run stopped early");
    for (std::size_t m = 0; m < state.steps.size(); ++m) {
        const Coefficients before = state.coefficients_at(m);
        const Coefficients after = state.coefficients_at(m + 1);
        const BoostStep& step = state.steps[m];
        std::size_t changed = 0;
        for (std::size_t j = 0; j < J; ++j) {
            for (std::size_t t = 0; t < before.terms[j].size(); ++t) changed += before.terms[j][t] != after.terms[j][t];
        }
        if (changed != 1) fail(m, std::to_string(changed) + " coefficients changed");
        if (step.delta != config.step_length * step.rho) fail(m, "update is not step_length * rho");
        if (after.terms[step.predictor][step.term] != before.terms[step.predictor][step.term] + step.delta) {
            fail(m, "coefficient did not move by the recorded update");
        }

        // Linear predictors, gradients and candidate slopes by direct evaluation.
        std::vector<std::vector<double>> eta(n, std::vector<double>(J, 0.0));
        for (std::size_t j = 0; j < J; ++j) {
            const auto& p = spec.predictors[j];
            for (std::size_t t = 0; t < p.term_count(); ++t) {
                const double a = before.terms[j][t];
                const std::ptrdiff_t col = bound.term_column(j, t);
                for (std::size_t i = 0; i < n; ++i) eta[i][j] += a * (col < 0 ? 1.0 : design.x(i, col));
            }
        }
        std::vector<std::vector<double>> grad(n);
        for (std::size_t i = 0; i < n; ++i) {
            grad[i] = as_eta_gradient(loss_gradients(config.loss, oracle::from_etas(eta[i], K), y[i]), K);
            if (K == 1) grad[i][0] = 0.0;
        }
        std::size_t best_j = J, best_t = 0;
        double best_rho = 0.0, best_loss = INFINITY;
        for (std::size_t j = 0; j < J; ++j) {
            const auto& p = spec.predictors[j];
            std::size_t t_star = p.term_count();
            double rho_star = 0.0;
            for (std::size_t t = 0; t < p.term_count(); ++t) {
                const std::ptrdiff_t col = bound.term_column(j, t);
                if (col < 0 && !config.boost_intercepts) continue;
                double rho = 0.0;
                for (std::size_t i = 0; i < n; ++i) rho -= (col < 0 ? 1.0 : design.x(i, col)) * grad[i][j];
                rho /= static_cast<double>(n);
                if (t_star == p.term_count() || std::abs(rho) > std::abs(rho_star)) {
                    t_star = t;
                    rho_star = rho;
                }
            }
            if (t_star == p.term_count()) continue;
            const std::ptrdiff_t col = bound.term_column(j, t_star);
            double loss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> e = eta[i];
                e[j] += config.step_length * rho_star * (col < 0 ? 1.0 : design.x(i, col));
                const MixtureParams p_i = oracle::from_etas(e, K);
                loss += config.loss == Loss::LogS ? logs_mixture(p_i, y[i]) : crps_mixture(p_i, y[i]);
            }
            if (loss < best_loss) {
                best_loss = loss;
                best_j = j;
                best_t = t_star;
                best_rho = rho_star;
            }
        }
        if (best_j != step.predictor || best_t != step.term) {
            fail(m, "selected " + state.spec.predictors[step.predictor].label() + "/" +
                        state.spec.predictors[step.predictor].term_name(step.term) + ", recomputed argmin is " +
                        state.spec.predictors[best_j].label() + "/" + state.spec.predictors[best_j].term_name(best_t));
        }
        if (std::abs(best_rho - step.rho) > 1e-10 * std::max(1.0, std::abs(best_rho))) fail(m, "rho differs");
        if (std::abs(best_loss - state.train_loss[m + 1]) > 1e-9 * std::max(1.0, std::abs(best_loss))) {
            fail(m, "recorded training loss differs from the recomputed potential loss");
        }
        if (state.train_loss[m + 1] > state.train_loss[m] + 1e-12) fail(m, "training loss increased");
    }
    return r;
}

Outcome boosting_mechanics() {
    constexpr std::size_t kIterations = 500, kRows = 400;
    const CovariateCatalog catalog = CovariateCatalog::standard();
    const ModelSpec spec = make_mixsamos_gb(catalog);
    const auto ids = catalog.all();
    std::mt19937_64 gen(77);
    std::normal_distribution<double> nd(0.0, 1.0);
    Design raw;
    raw.columns = ids;
    raw.x.resize(kRows, static_cast<Eigen::Index>(ids.size()));
    Eigen::VectorXd y(kRows);
    for (std::size_t i = 0; i < kRows; ++i) {
        for (std::size_t c = 0; c < ids.size(); ++c) raw.x(i, c) = nd(gen);
        const bool second = nd(gen) > 0.0;
        y[i] = second ? 1.0 + 0.8 * raw.x(i, 1) + 0.3 * nd(gen) : -1.0 + 0.9 * raw.x(i, 0) + 0.5 * nd(gen);
    }
    const StandardizedData data = standardize_columns(raw, y);
    std::string detail;
    std::size_t violations = 0;
    for (bool intercepts : {false, true}) {
        for (Loss loss : {Loss::LogS, Loss::CRPS}) {
            BoostConfig config;
            config.m_stop = kIterations;
            config.loss = loss;
            config.boost_intercepts = intercepts;
            const MechanicsReport r = check_mechanics(spec, data.design, data.y, config);
            violations += r.violations;
            detail += std::string(detail.empty() ? "" : "; ") + to_string(loss) +
                      (intercepts ? "/boosted" : "/pinned") + " " + std::to_string(r.iterations) + " iterations";
            if (r.violations > 0) detail += " (" + r.first + ")";
        }
    }
    return {violations == 0, detail + ", " + std::to_string(violations) + " violations"};
}

// 6. Selection of the active covariates after CV stopping.
Outcome variable_selection() {
    constexpr std::size_t kSeeds = 50;
    constexpr double kRequired = 0.9;
    const CovariateCatalog catalog = CovariateCatalog::standard();
    std::size_t good = 0;
    for (std::size_t s = 1; s <= kSeeds; ++s) {
        SimulationOptions opts;
        opts.scenario = "sparse-signal";
        opts.seed = s;
        opts.stations = 1;
        opts.years = 4;  // three training years, the last year is held out
        const Simulation sim = simulate(opts);
        RunConfig config;
        config.seed = s;
        config.model = "mixsamos-gb";
        config.step_length = 0.1;
        config.m_stop = 300;
        const TrainResult tr = train_station(sim.data[0], split_days(sim.data[0], config), config, catalog);
        std::map<std::string, double> size;
        for (const auto& id : catalog.all()) size[id] = 0.0;
        const auto& model = tr.model;
        for (std::size_t j = 0; j < model.spec.predictors.size(); ++j) {
            const auto& p = model.spec.predictors[j];
            for (std::size_t t = 0; t < p.term_count(); ++t) {
                if (p.term_name(t) == kInterceptName) continue;
                size[p.term_name(t)] = std::max(size[p.term_name(t)], std::abs(model.coefficients.terms[j][t]));
            }
        }
        double weakest_active = INFINITY, strongest_inactive = 0.0;
        for (const auto& [id, v] : size) {
            const bool active =
                std::find(sim.active_covariates.begin(), sim.active_covariates.end(), id) != sim.active_covariates.end();
            if (active) weakest_active = std::min(weakest_active, v);
            else strongest_inactive = std::max(strongest_inactive, v);
        }
        if (weakest_active > strongest_inactive) ++good;
    }
    const double rate = static_cast<double>(good) / kSeeds;
    return {rate >= kRequired, fmt("active covariates ranked first in %.0f/%.0f seeds", double(good), double(kSeeds))};
}

// 7. Mixture versus single normal on bimodal ensembles.
Outcome calibration_pipeline() {
    constexpr std::size_t kSeeds = 20;
    constexpr double kRequired = 0.9;
    const CovariateCatalog catalog = CovariateCatalog::standard();
    std::size_t good = 0;
    double mix_crps_sum = 0.0, single_crps_sum = 0.0, mix_ri_sum = 0.0, single_ri_sum = 0.0;
    for (std::size_t s = 1; s <= kSeeds; ++s) {
        SimulationOptions opts;
        opts.scenario = "bimodal";
        opts.seed = s;
        opts.stations = 10;
        opts.years = 3;  // two training years and one test year
        const Simulation sim = simulate(opts);
        double crps[2] = {0.0, 0.0};
        double ri[2] = {0.0, 0.0};
        const char* models[2] = {"mixsamos-gb", "samos-gb"};
        for (int mi = 0; mi < 2; ++mi) {
            std::vector<double> pit;
            std::size_t cases = 0;
            for (const auto& st : sim.data) {
                RunConfig config;
                config.seed = s;
                config.model = models[mi];
                config.step_length = 0.1;
                config.m_stop = 500;
                config.cv_folds = 5;
                const StationSplit split = split_days(st, config);
                const TrainResult tr = train_station(st, split, config, catalog);
                const StationForecasts f = predict_station(tr.model, st, split.test, catalog);
                for (double v : case_scores(f.predictions, f.observations).crps) crps[mi] += v;
                cases += f.predictions.size();
                const auto p = pit_values(f.predictions, f.observations);
                pit.insert(pit.end(), p.begin(), p.end());
            }
            crps[mi] /= static_cast<double>(cases);
            ri[mi] = pit_histogram(pit, 20).reliability_index();
        }
        mix_crps_sum += crps[0];
        single_crps_sum += crps[1];
        mix_ri_sum += ri[0];
        single_ri_sum += ri[1];
        if (crps[0] < crps[1] && ri[0] < ri[1]) ++good;
    }
    const double rate = static_cast<double>(good) / kSeeds;
    return {rate >= kRequired,
            fmt("mixture better on both in %.0f/20 seeds; mean CRPS %.3f vs %.3f, ", double(good),
                mix_crps_sum / kSeeds, single_crps_sum / kSeeds) +
                fmt("mean PIT RI %.3f vs %.3f", mix_ri_sum / kSeeds, single_ri_sum / kSeeds)};
}

// 8. Interval coverage of a well-specified model over 10^5 pooled cases.
Outcome coverage() {
    constexpr double kNominal = 100.0 * 50.0 / 52.0;
    constexpr double kTol = 1.5;
    constexpr std::size_t kMinCases = 100000;
    SimulationOptions opts;
    opts.scenario = "seasonal-basic";
    opts.seed = 8;
    opts.stations = 10;
    opts.years = 32;
    const Simulation sim = simulate(opts);
    RunConfig config;
    config.model = "samos";
    config.train_start = Date{2015, 1, 1};
    config.train_end = Date{2018, 12, 31};
    config.test_start = Date{2019, 1, 1};
    config.test_end = Date{2046, 12, 31};
    const CovariateCatalog catalog = CovariateCatalog::standard();
    std::vector<MixtureParams> predictions;
    std::vector<double> observations;
    for (const auto& st : sim.data) {
        const StationSplit split = split_days(st, config);
        const TrainResult tr = train_station(st, split, config, catalog);
        const StationForecasts f = predict_station(tr.model, st, split.test, catalog);
        predictions.insert(predictions.end(), f.predictions.begin(), f.predictions.end());
        observations.insert(observations.end(), f.observations.begin(), f.observations.end());
    }
    const CoverageWidth cw = interval_coverage_width(predictions, observations, 50.0 / 52.0);
    const bool pass = predictions.size() >= kMinCases && std::abs(cw.coverage_percent - kNominal) <= kTol;
    return {pass, fmt("coverage %.3f%% vs nominal %.3f%% over %.0f cases (mean width %.3f)", cw.coverage_percent,
                      kNominal, double(predictions.size()), cw.mean_width)};
}

// 9. Two identical end-to-end runs give byte-identical artifacts.
std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        files[fs::relative(entry.path(), root).string()] =
            std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    return files;
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / ("mixboost-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(root);
    std::vector<std::map<std::string, std::string>> trees;
    for (int run = 0; run < 2; ++run) {
        const fs::path dir = root / ("run" + std::to_string(run));
        fs::create_directories(dir / "out");
        SimulationOptions opts;
        opts.scenario = "bimodal";
        opts.seed = 99;
        opts.stations = 3;
        opts.years = 3;
        opts.missing_fraction = 0.01;
        const Simulation sim = simulate(opts);
        {
            std::ofstream f(dir / "forecasts.csv", std::ios::binary), o(dir / "observations.csv", std::ios::binary),
                j(dir / "scenario.json", std::ios::binary);
            export_forecasts(f, sim.data);
            export_observations(o, sim.data);
            j << simulation_metadata_json(opts, sim);
        }
        RunConfig config;
        config.seed = 5;
        config.model = "mixsamos-gb";
        config.m_stop = 150;
        config.cv_folds = 5;
        config.n_boot = 200;
        config.importance = true;
        config.forecasts = dir / "forecasts.csv";
        config.observations = dir / "observations.csv";
        const auto data = ingest(config.forecasts.string(), config.observations.string());
        // Different worker counts must not change any artifact.
        run_pipeline(config, data, dir / "out", run == 0 ? 1 : 3);
        trees.push_back(read_tree(dir));
    }
    fs::remove_all(root);
    std::size_t differing = 0;
    for (const auto& [name, content] : trees[0]) {
        const auto it = trees[1].find(name);
        if (it == trees[1].end() || it->second != content) ++differing;
    }
    const bool pass = trees[0].size() == trees[1].size() && differing == 0 && trees[0].size() > 8;
    return {pass, fmt("%.0f artifacts compared, %.0f differ", double(trees[0].size()), double(differing))};
}

// 10. Seasonal climatology recovered from the generator.
Outcome climatology_recovery() {
    constexpr double kCoefTol = 0.05, kMomentTol = 0.05;
    SimulationOptions opts;
    opts.scenario = "seasonal-basic";
    opts.seed = 10;
    opts.stations = 1;
    opts.years = 10;
    const Simulation sim = simulate(opts);
    std::vector<double> values;
    std::vector<int> doys;
    for (const auto& day : sim.data[0].days) {
        values.push_back(day.observation);
        doys.push_back(day.date.doy());
    }
    const ClimatologyFit fit = fit_climatology(values, doys);
    const ClimatologyFit& truth = sim.truth[0].response;
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        worst = std::max(worst, std::abs(fit.loc_coeffs[i] - truth.loc_coeffs[i]));
        worst = std::max(worst, std::abs(fit.scale_coeffs[i] - truth.scale_coeffs[i]));
    }
    const AnomalySeries z = standardize(values, doys, fit);
    double mean = 0.0;
    for (double v : z.values) mean += v;
    mean /= static_cast<double>(z.values.size());
    double var = 0.0;
    for (double v : z.values) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(z.values.size() - 1));
    const bool pass = worst <= kCoefTol && std::abs(mean) <= kMomentTol && std::abs(sd - 1.0) <= kMomentTol;
    return {pass, fmt("max coefficient error %.4f; anomaly mean %.4f, sd %.4f over %.0f days", worst, mean, sd,
                      double(values.size()))};
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::warn);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient correctness", gradient_correctness},
        {"CRPS closed form", crps_closed_form},
        {"softmax gauge", softmax_gauge},
        {"parameter recovery", parameter_recovery},
        {"boosting mechanics", boosting_mechanics},
        {"variable selection", variable_selection},
        {"calibration pipeline", calibration_pipeline},
        {"coverage", coverage},
        {"determinism", determinism},
        {"climatology recovery", climatology_recovery},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int number = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(number)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %2d %-22s %s  %s [%.1f s]\n", number, criteria[i].first.c_str(),
                    o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
