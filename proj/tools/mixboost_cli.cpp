// Command-line front end: simulate data, fit climatologies and models,
// predict, verify, and export importance and coefficient paths.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "mixboost/error.hpp"
#include "mixboost/pipeline.hpp"
#include "mixboost/rng.hpp"
#include "mixboost/simulate.hpp"

namespace fs = std::filesystem;
using namespace mixboost;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    unsigned jobs = 1;
    std::string out_dir = "out";
    bool verbose = false;
};

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << content;
}

RunConfig load_config(const Globals& g) {
    if (g.config_path.empty()) throw DataError("this command needs --config");
    RunConfig c = RunConfig::load(g.config_path);
    if (g.seed) c.seed = *g.seed;
    return c;
}

std::vector<StationDataset> load_data(const RunConfig& c, bool with_observations = true) {
    IngestStats stats;
    auto data = ingest(c.forecasts.string(),
                       with_observations ? std::optional<std::string>(c.observations.string()) : std::nullopt, &stats);
    spdlog::info("read {} forecast rows, {} observation rows, {} stations", stats.forecast_rows,
                 stats.observation_rows, data.size());
    if (stats.dropped_missing_observation > 0) {
        spdlog::info("dropped {} days without a usable observation", stats.dropped_missing_observation);
    }
    return select_stations(std::move(data), c);
}

int report(const std::vector<StationOutcome>& outcomes) {
    std::size_t failed = 0;
    for (const auto& o : outcomes) failed += o.ok ? 0 : 1;
    if (failed > 0) spdlog::error("{} of {} stations failed", failed, outcomes.size());
    return exit_code(outcomes);
}

FinalizedModel load_model(const fs::path& dir, const std::string& station) {
    const fs::path path = dir / "models" / (station + ".model");
    std::ifstream in(path);
    if (!in) throw DataError("no model file '" + path.string() + "'; run train first");
    return read_finalized_model(in);
}

std::string suggested_model(const std::string& scenario) {
    if (scenario == "bimodal" || scenario == "sparse-signal") return "mixsamos-gb";
    return "samos";
}

int cmd_simulate(const Globals& g, const SimulationOptions& opts_in, const std::string& start) {
    SimulationOptions opts = opts_in;
    if (g.seed) opts.seed = *g.seed;
    if (!start.empty()) opts.start = Date::parse(start);
    const Simulation sim = simulate(opts);
    const fs::path out(g.out_dir);
    std::ostringstream f, o;
    export_forecasts(f, sim.data);
    export_observations(o, sim.data);
    write_file(out / "forecasts.csv", f.str());
    write_file(out / "observations.csv", o.str());
    write_file(out / "scenario.json", simulation_metadata_json(opts, sim));
    RunConfig c;
    c.seed = opts.seed;
    c.forecasts = "forecasts.csv";
    c.observations = "observations.csv";
    c.model = suggested_model(opts.scenario);
    write_file(out / "config.ini", c.to_ini());
    spdlog::info("wrote {} stations of scenario {} to {}", sim.data.size(), opts.scenario, out.string());
    return 0;
}

int cmd_climatology(const Globals& g) {
    const RunConfig c = load_config(g);
    const auto data = load_data(c);
    const CovariateCatalog catalog = CovariateCatalog::standard();
    // Climatologies of every available summary, independent of the model.
    ModelSpec all = make_samos_gb(catalog);
    all.anomaly_scale = true;
    std::vector<StationClimatology> fits(data.size());
    const auto outcomes = for_each_station(data, g.jobs, [&](const StationDataset& st, StationOutcome&) {
        const auto idx = static_cast<std::size_t>(&st - data.data());
        fits[idx] = fit_station_climatology(st, split_days(st, c).train, all, catalog);
    });
    std::vector<ClimatologyFit> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!outcomes[i].ok) continue;
        rows.push_back(fits[i].response);
        for (const auto& cov : fits[i].covariates) rows.push_back(cov.climatology);
    }
    std::ostringstream out;
    write_climatology_csv(out, rows);
    write_file(fs::path(g.out_dir) / "climatology.csv", out.str());
    return report(outcomes);
}

int cmd_train(const Globals& g) {
    const RunConfig c = load_config(g);
    const auto data = load_data(c);
    const CovariateCatalog catalog = CovariateCatalog::standard();
    const fs::path out(g.out_dir);
    auto outcomes = for_each_station(data, g.jobs, [&](const StationDataset& st, StationOutcome& o) {
        o.train = train_station(st, split_days(st, c), c, catalog);
    });
    bool boosted = false;
    for (const auto& o : outcomes) {
        if (!o.ok) continue;
        std::ostringstream mf;
        write_finalized_model(mf, o.train->model);
        write_file(out / "models" / (o.station_id + ".model"), mf.str());
        if (o.train->boost) {
            boosted = true;
            std::ostringstream paths;
            write_coefficient_paths(paths, *o.train->boost, o.train->cv->m_opt);
            write_file(out / "paths" / (o.station_id + ".csv"), paths.str());
        }
    }
    if (boosted) {
        std::ostringstream m;
        write_mopt_csv(m, outcomes);
        write_file(out / "mopt.csv", m.str());
    }
    return report(outcomes);
}

int cmd_predict(const Globals& g) {
    const RunConfig c = load_config(g);
    const auto data = load_data(c, false);
    const CovariateCatalog catalog = CovariateCatalog::standard();
    std::vector<StationForecasts> forecasts(data.size());
    const auto outcomes = for_each_station(data, g.jobs, [&](const StationDataset& st, StationOutcome&) {
        const FinalizedModel model = load_model(g.out_dir, st.station_id);
        const auto idx = static_cast<std::size_t>(&st - data.data());
        forecasts[idx] = predict_station(model, st, split_days(st, c).test, catalog);
        for (const auto& e : forecasts[idx].row_errors) spdlog::warn("{}", e);
    });
    std::vector<StationForecasts> ok;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (outcomes[i].ok) ok.push_back(std::move(forecasts[i]));
    }
    std::ostringstream out;
    write_predictions_csv(out, ok);
    write_file(fs::path(g.out_dir) / "predictions.csv", out.str());
    return report(outcomes);
}

std::map<std::string, std::vector<PredictionRecord>> read_predictions_by_station(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open predictions '" + path.string() + "'");
    std::map<std::string, std::vector<PredictionRecord>> out;
    for (auto& r : read_predictions_csv(in)) out[r.station_id].push_back(std::move(r));
    return out;
}

// Rebuilds forecasts for one station from a predictions file and the dataset.
StationForecasts forecasts_from_records(const StationDataset& st, const std::vector<PredictionRecord>& records) {
    StationForecasts f;
    f.station_id = st.station_id;
    const std::size_t members = st.members("t2m");
    std::vector<const DayRecord*> days;
    for (const auto& r : records) {
        const auto it = std::lower_bound(st.days.begin(), st.days.end(), r.date,
                                         [](const DayRecord& d, const Date& date) { return d.date < date; });
        if (it == st.days.end() || it->date != r.date) continue;
        f.K = r.params.size();
        f.dates.push_back(r.date);
        f.observations.push_back(it->observation);
        f.predictions.push_back(r.params);
        days.push_back(&*it);
    }
    f.ensemble.resize(static_cast<Eigen::Index>(days.size()), static_cast<Eigen::Index>(members + 1));
    for (std::size_t i = 0; i < days.size(); ++i) {
        const auto& t2m = days[i]->forecasts.at("t2m");
        for (std::size_t m = 0; m < members; ++m) f.ensemble(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = t2m.perturbed[m];
        f.ensemble(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(members)) = t2m.ctrl;
    }
    return f;
}

int cmd_evaluate(const Globals& g, const std::string& reference_path) {
    const RunConfig c = load_config(g);
    const auto data = load_data(c);
    const fs::path out(g.out_dir);
    const auto preds = read_predictions_by_station(out / "predictions.csv");
    std::map<std::string, std::vector<PredictionRecord>> reference;
    if (!reference_path.empty()) reference = read_predictions_by_station(reference_path);

    std::vector<StationEvaluation> evals(data.size());
    std::vector<std::optional<DmResult>> ref_dm(data.size());
    const auto outcomes = for_each_station(data, g.jobs, [&](const StationDataset& st, StationOutcome&) {
        const auto idx = static_cast<std::size_t>(&st - data.data());
        const auto it = preds.find(st.station_id);
        if (it == preds.end()) throw DataError("no predictions for station " + st.station_id);
        const StationForecasts f = forecasts_from_records(st, it->second);
        evals[idx] = evaluate_station(f, c, c.model);
        if (!reference_path.empty()) {
            const auto rit = reference.find(st.station_id);
            if (rit == reference.end()) throw DataError("no reference predictions for station " + st.station_id);
            const StationForecasts r = forecasts_from_records(st, rit->second);
            if (r.dates != f.dates) throw DataError("reference predictions cover different days for " + st.station_id);
            std::vector<double> ref_crps;
            for (std::size_t i = 0; i < r.predictions.size(); ++i) {
                if (std::isfinite(r.observations[i])) ref_crps.push_back(crps_mixture(r.predictions[i], r.observations[i]));
            }
            ref_dm[idx] = dm_test(evals[idx].model_crps, ref_crps);
        }
    });
    std::vector<ScoreReport> reports;
    std::vector<Significance> sig;
    HistogramDiag pit, rank;
    pit.counts.assign(c.pit_bins, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!outcomes[i].ok) continue;
        const auto& ev = evals[i];
        reports.push_back(ev.model);
        const HistogramDiag h = pit_histogram(ev.pit, c.pit_bins);
        for (std::size_t b = 0; b < h.counts.size(); ++b) pit.counts[b] += h.counts[b];
        if (rank.counts.empty()) rank.counts.assign(ev.rank.counts.size(), 0);
        if (rank.counts.size() == ev.rank.counts.size()) {
            for (std::size_t b = 0; b < ev.rank.counts.size(); ++b) rank.counts[b] += ev.rank.counts[b];
        }
        const auto& dm = reference_path.empty() ? ev.dm : ref_dm[i];
        if (dm) sig.push_back({data[i].station_id, dm->p_two_sided, false});
    }
    std::vector<double> p;
    for (const auto& s : sig) p.push_back(s.p_value);
    const auto rejected = benjamini_hochberg(p);
    for (std::size_t i = 0; i < sig.size(); ++i) sig[i].rejected = rejected[i];
    std::ostringstream scores, pit_out, rank_out, sig_out;
    write_scores_csv(scores, reports);
    std::ostringstream raw;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!outcomes[i].ok) continue;
        const auto& r = evals[i].raw_ensemble;
        raw << "raw-ensemble," << r.station << ",crps," << format_double(r.crps) << ","
            << (std::isnan(r.crps_se) ? std::string("NA") : format_double(r.crps_se)) << "\n";
    }
    write_file(out / "scores.csv", scores.str() + raw.str());
    if (pit.total() > 0) {
        write_histogram_csv(pit_out, pit);
        write_file(out / "pit_histogram.csv", pit_out.str());
    }
    if (rank.total() > 0) {
        write_histogram_csv(rank_out, rank);
        write_file(out / "rank_histogram.csv", rank_out.str());
    }
    write_significance_csv(sig_out, sig);
    write_file(out / "significance.csv", sig_out.str());
    return report(outcomes);
}

int cmd_importance(const Globals& g) {
    const RunConfig c = load_config(g);
    const auto data = load_data(c);
    const CovariateCatalog catalog = CovariateCatalog::standard();
    std::vector<std::vector<Importance>> per_station(data.size());
    const auto outcomes = for_each_station(data, g.jobs, [&](const StationDataset& st, StationOutcome&) {
        const auto idx = static_cast<std::size_t>(&st - data.data());
        const FinalizedModel model = load_model(g.out_dir, st.station_id);
        std::vector<std::size_t> days;
        for (std::size_t i : split_days(st, c).test) {
            if (std::isfinite(st.days[i].observation)) days.push_back(i);
        }
        const RawRows rows = summary_rows(st, days, catalog);
        std::vector<double> obs;
        for (std::size_t i : days) obs.push_back(st.days[i].observation);
        const std::uint64_t seed = station_seed(c, st.station_id);
        for (const auto& id : model.spec.covariates()) {
            per_station[idx].push_back(permutation_importance(model, rows, obs, id, derive_seed(seed, id),
                                                              c.importance_repeats, c.bootstrap(seed)));
        }
    });
    std::ostringstream out;
    out << "station_id,covariate,importance,se\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!outcomes[i].ok) continue;
        for (const auto& imp : per_station[i]) {
            out << data[i].station_id << "," << imp.covariate << "," << format_double(imp.importance) << ","
                << (std::isnan(imp.se) ? std::string("NA") : format_double(imp.se)) << "\n";
        }
    }
    write_file(fs::path(g.out_dir) / "importance_by_station.csv", out.str());
    // Pooled over stations.
    std::vector<Importance> pooled;
    std::vector<std::vector<double>> values;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!outcomes[i].ok) continue;
        for (std::size_t k = 0; k < per_station[i].size(); ++k) {
            if (pooled.size() <= k) {
                pooled.push_back({per_station[i][k].covariate, 0.0, 0.0});
                values.emplace_back();
            }
            values[k].push_back(per_station[i][k].importance);
        }
    }
    for (std::size_t k = 0; k < pooled.size(); ++k) {
        const auto& v = values[k];
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        pooled[k].importance = mean;
        pooled[k].se = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))
                                    : per_station.front().at(k).se;
    }
    std::ostringstream pooled_out;
    write_importance_csv(pooled_out, pooled);
    write_file(fs::path(g.out_dir) / "importance.csv", pooled_out.str());
    return report(outcomes);
}

int cmd_paths(const Globals& g, std::size_t iterations) {
    const RunConfig c = load_config(g);
    const auto data = load_data(c);
    const CovariateCatalog catalog = CovariateCatalog::standard();
    const ModelSpec spec = c.model_spec(catalog);
    if (spec.estimator != Estimator::Boosting) throw DataError("paths needs a boosted model (samos-gb or mixsamos-gb)");
    std::vector<std::string> csv(data.size());
    const auto outcomes = for_each_station(data, g.jobs, [&](const StationDataset& st, StationOutcome&) {
        const auto idx = static_cast<std::size_t>(&st - data.data());
        const StationSplit split = split_days(st, c);
        const StationClimatology clim = fit_station_climatology(st, split.train, spec, catalog);
        const FinalizedModel base = finalize_bfgs(spec, Coefficients::zeros(spec), clim.covariates, clim.response);
        const RawRows raw = summary_rows(st, split.train, catalog);
        std::vector<std::string> errors;
        const Design full = anomaly_design(base, raw, &errors);
        std::vector<std::size_t> keep;
        std::vector<double> z;
        for (std::size_t r = 0; r < split.train.size(); ++r) {
            const DayRecord& day = st.days[split.train[r]];
            if (!errors[r].empty() || !std::isfinite(day.observation)) continue;
            keep.push_back(r);
            z.push_back(standardize_value(day.observation, day.date.doy(), clim.response));
        }
        const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
        const StandardizedData sd = standardize_columns(full.select_rows(keep), y);
        BoostConfig bc = c.boost_config(spec, station_seed(c, st.station_id));
        if (iterations > 0) bc.m_stop = iterations;
        const BoostState state = boost_fit(spec, sd.design, sd.y, bc);
        std::ostringstream out;
        write_coefficient_paths(out, state, bc.m_stop);
        csv[idx] = out.str();
    });
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (outcomes[i].ok) write_file(fs::path(g.out_dir) / "paths" / (data[i].station_id + ".csv"), csv[i]);
    }
    return report(outcomes);
}

int cmd_run(const Globals& g) {
    const RunConfig c = load_config(g);
    const auto data = load_data(c);
    fs::create_directories(g.out_dir);
    const auto outcomes = run_pipeline(c, data, g.out_dir, g.jobs);
    return report(outcomes);
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("mixboost");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);

    CLI::App app{"Gradient-boosted normal mixture regression for ensemble postprocessing"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "Override the configured random seed");
    app.add_option("--config", g.config_path, "Run configuration (key = value with [sections])");
    app.add_option("--jobs", g.jobs, "Worker threads for stations (0 = all cores)");
    app.add_option("--out-dir", g.out_dir, "Directory for outputs (and models)");
    app.add_flag("-v,--verbose", g.verbose, "Debug logging");

    SimulationOptions sim;
    std::string sim_start;
    auto* simulate_cmd = app.add_subcommand("simulate", "Write a synthetic scenario and a suggested config");
    simulate_cmd->add_option("--scenario", sim.scenario, "Scenario name")
        ->check(CLI::IsMember(scenario_names()));
    simulate_cmd->add_option("--stations", sim.stations, "Number of stations");
    simulate_cmd->add_option("--years", sim.years, "Years of daily data");
    simulate_cmd->add_option("--members", sim.members, "Perturbed members per variable");
    simulate_cmd->add_option("--missing-fraction", sim.missing_fraction, "Fraction of missing observations");
    simulate_cmd->add_option("--start", sim_start, "First date (YYYY-MM-DD)");

    auto* clim_cmd = app.add_subcommand("climatology", "Fit seasonal climatologies on the training period");
    auto* train_cmd = app.add_subcommand("train", "Fit the configured model per station");
    auto* predict_cmd = app.add_subcommand("predict", "Predict the test period with trained models");
    std::string reference;
    auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions against observations");
    eval_cmd->add_option("--reference", reference, "Second predictions file for Diebold-Mariano tests");
    auto* imp_cmd = app.add_subcommand("importance", "Permutation importance of each covariate");
    std::size_t path_iterations = 0;
    auto* paths_cmd = app.add_subcommand("paths", "Export boosting coefficient paths");
    paths_cmd->add_option("--iterations", path_iterations, "Iterations to run (default m_stop)");
    auto* run_cmd = app.add_subcommand("run", "Train, predict and evaluate in one go");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    if (seed_opt->count() > 0) g.seed = seed;
    if (g.verbose) spdlog::set_level(spdlog::level::debug);

    try {
        if (*simulate_cmd) return cmd_simulate(g, sim, sim_start);
        if (*clim_cmd) return cmd_climatology(g);
        if (*train_cmd) return cmd_train(g);
        if (*predict_cmd) return cmd_predict(g);
        if (*eval_cmd) return cmd_evaluate(g, reference);
        if (*imp_cmd) return cmd_importance(g);
        if (*paths_cmd) return cmd_paths(g, path_iterations);
        if (*run_cmd) return cmd_run(g);
    } catch (const DataError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const DomainError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 3;
    }
    return 1;
}
