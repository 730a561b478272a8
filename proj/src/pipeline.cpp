#include "mixboost/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "mixboost/error.hpp"
#include "mixboost/estimate.hpp"
#include "mixboost/rng.hpp"

namespace mixboost {

namespace pt = boost::property_tree;

namespace {

bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw DataError("config: '" + key + "' must be a boolean, got '" + s + "'");
}

template <typename T>
T get_number(const pt::ptree& tree, const std::string& key, T fallback) {
    const auto v = tree.get_optional<std::string>(key);
    if (!v) return fallback;
    std::istringstream in(*v);
    T out{};
    in >> out;
    if (!in || !in.eof()) throw DataError("config: '" + key + "' is not a valid number: '" + *v + "'");
    return out;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::optional<Date> get_date(const pt::ptree& tree, const std::string& key) {
    const auto v = tree.get_optional<std::string>(key);
    if (!v || v->empty()) return std::nullopt;
    return Date::parse(*v);
}

std::pair<std::string, Summary> split_covariate_id(const std::string& id) {
    const auto pos = id.rfind('_');
    if (pos == std::string::npos) throw DataError("covariate id '" + id + "' lacks a summary suffix");
    return {id.substr(0, pos), parse_summary(id.substr(pos + 1))};
}

std::string join_values(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ";";
        out += format_double(v[i]);
    }
    return out;
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw DataError("predictions: bad number '" + item + "'");
        }
    }
    return out;
}

}  // namespace

RunConfig RunConfig::parse(std::istream& in, const std::filesystem::path& base_dir) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw DataError(std::string("config: ") + e.what());
    }
    static const std::vector<std::pair<std::string, std::vector<std::string>>> known = {
        {"run", {"seed"}},
        {"data", {"forecasts", "observations", "stations"}},
        {"model", {"name", "loss"}},
        {"boost", {"step_length", "m_stop", "cv_folds", "intercepts"}},
        {"split", {"train_start", "train_end", "test_start", "test_end"}},
        {"verify", {"level", "pit_bins", "block_length", "n_boot", "importance", "importance_repeats"}},
    };
    for (const auto& [section, body] : tree) {
        const auto it = std::find_if(known.begin(), known.end(), [&](const auto& k) { return k.first == section; });
        if (it == known.end()) throw DataError("config: unknown section [" + section + "]");
        for (const auto& [key, value] : body) {
            if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
                throw DataError("config: unknown key '" + key + "' in [" + section + "]");
            }
        }
    }
    RunConfig c;
    c.seed = get_number<std::uint64_t>(tree, "run.seed", c.seed);
    const auto resolve = [&](const std::string& key, const std::filesystem::path& fallback) {
        const std::filesystem::path p = tree.get<std::string>(key, fallback.string());
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    };
    c.forecasts = resolve("data.forecasts", c.forecasts);
    c.observations = resolve("data.observations", c.observations);
    c.stations = split_list(tree.get<std::string>("data.stations", ""));
    c.model = tree.get<std::string>("model.name", c.model);
    c.loss = parse_loss(tree.get<std::string>("model.loss", to_string(c.loss)));
    c.step_length = get_number<double>(tree, "boost.step_length", c.step_length);
    if (tree.get_optional<std::string>("boost.m_stop")) c.m_stop = get_number<std::size_t>(tree, "boost.m_stop", 0);
    c.cv_folds = get_number<std::size_t>(tree, "boost.cv_folds", c.cv_folds);
    const std::string intercepts = tree.get<std::string>("boost.intercepts", c.boost_intercepts ? "boosted" : "pinned");
    if (intercepts != "pinned" && intercepts != "boosted") {
        throw DataError("config: boost.intercepts must be 'pinned' or 'boosted'");
    }
    c.boost_intercepts = intercepts == "boosted";
    c.train_start = get_date(tree, "split.train_start");
    c.train_end = get_date(tree, "split.train_end");
    c.test_start = get_date(tree, "split.test_start");
    c.test_end = get_date(tree, "split.test_end");
    c.level = get_number<double>(tree, "verify.level", c.level);
    c.pit_bins = get_number<std::size_t>(tree, "verify.pit_bins", c.pit_bins);
    c.block_length = get_number<double>(tree, "verify.block_length", c.block_length);
    c.n_boot = get_number<std::size_t>(tree, "verify.n_boot", c.n_boot);
    c.importance = parse_bool(tree.get<std::string>("verify.importance", "false"), "verify.importance");
    c.importance_repeats = get_number<std::size_t>(tree, "verify.importance_repeats", c.importance_repeats);
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path.string() + "'");
    return parse(in, path.parent_path());
}

void RunConfig::validate() const {
    (void)model_spec(CovariateCatalog::standard());
    if (!(step_length > 0.0 && step_length <= 1.0)) throw DataError("config: boost.step_length must lie in (0, 1]");
    if (m_stop && *m_stop < 1) throw DataError("config: boost.m_stop must be at least 1");
    if (cv_folds < 2) throw DataError("config: boost.cv_folds must be at least 2");
    if (!(level > 0.0 && level < 1.0)) throw DataError("config: verify.level must lie in (0, 1)");
    if (pit_bins < 1) throw DataError("config: verify.pit_bins must be at least 1");
    if (!(block_length >= 1.0)) throw DataError("config: verify.block_length must be at least 1");
    if (n_boot < 2) throw DataError("config: verify.n_boot must be at least 2");
    if (importance_repeats < 1) throw DataError("config: verify.importance_repeats must be at least 1");
    const bool any = train_start || train_end || test_start || test_end;
    const bool all = train_start && train_end && test_start && test_end;
    if (any && !all) throw DataError("config: give all four split dates or none");
    if (all) {
        if (*train_end < *train_start || *test_end < *test_start) throw DataError("config: empty split range");
        if (!(*train_end < *test_start)) throw DataError("config: the training period must end before the test period");
    }
}

std::string RunConfig::to_ini() const {
    std::ostringstream out;
    out << "[run]\nseed = " << seed << "\n\n";
    out << "[data]\nforecasts = " << forecasts.string() << "\nobservations = " << observations.string() << "\n";
    if (!stations.empty()) {
        out << "stations = ";
        for (std::size_t i = 0; i < stations.size(); ++i) out << (i ? "," : "") << stations[i];
        out << "\n";
    }
    out << "\n[model]\nname = " << model << "\nloss = " << to_string(loss) << "\n\n";
    out << "[boost]\nstep_length = " << format_shortest(step_length) << "\n";
    if (m_stop) out << "m_stop = " << *m_stop << "\n";
    out << "cv_folds = " << cv_folds << "\nintercepts = " << (boost_intercepts ? "boosted" : "pinned") << "\n\n";
    if (train_start) {
        out << "[split]\ntrain_start = " << train_start->str() << "\ntrain_end = " << train_end->str()
            << "\ntest_start = " << test_start->str() << "\ntest_end = " << test_end->str() << "\n\n";
    }
    out << "[verify]\nlevel = " << format_shortest(level) << "\npit_bins = " << pit_bins
        << "\nblock_length = " << format_shortest(block_length) << "\nn_boot = " << n_boot
        << "\nimportance = " << (importance ? "true" : "false") << "\nimportance_repeats = " << importance_repeats
        << "\n";
    return out.str();
}

ModelSpec RunConfig::model_spec(const CovariateCatalog& catalog) const {
    try {
        return make_model(model, catalog, loss);
    } catch (const DomainError& e) {
        throw DataError(std::string("config: ") + e.what());
    }
}

BoostConfig RunConfig::boost_config(const ModelSpec& spec, std::uint64_t station_seed_value) const {
    BoostConfig b = default_boost_config(spec);
    b.step_length = step_length;
    if (m_stop) b.m_stop = *m_stop;
    b.cv_folds = cv_folds;
    b.seed = derive_seed(station_seed_value, "cv");
    b.loss = loss;
    b.boost_intercepts = boost_intercepts;
    return b;
}

BootstrapOptions RunConfig::bootstrap(std::uint64_t station_seed_value) const {
    return {block_length, n_boot, derive_seed(station_seed_value, "bootstrap")};
}

std::uint64_t station_seed(const RunConfig& config, const std::string& station_id) {
    return derive_seed(config.seed, station_id);
}

StationSplit split_days(const StationDataset& station, const RunConfig& config) {
    StationSplit split;
    if (station.days.empty()) throw DataError("station " + station.station_id + " has no days");
    Date train_start, train_end, test_start, test_end;
    if (config.train_start) {
        train_start = *config.train_start;
        train_end = *config.train_end;
        test_start = *config.test_start;
        test_end = *config.test_end;
    } else {
        const Date last = station.days.back().date;
        test_start = last.plus_days(-364);
        test_end = last;
        train_start = station.days.front().date;
        train_end = test_start.plus_days(-1);
    }
    for (std::size_t i = 0; i < station.days.size(); ++i) {
        const Date& d = station.days[i].date;
        if (train_start <= d && d <= train_end) split.train.push_back(i);
        if (test_start <= d && d <= test_end) split.test.push_back(i);
    }
    if (split.train.empty()) throw DataError("station " + station.station_id + " has no training days");
    return split;
}

StationClimatology fit_station_climatology(const StationDataset& station, const std::vector<std::size_t>& train,
                                           const ModelSpec& spec, const CovariateCatalog& catalog) {
    StationClimatology out;
    const std::string& sid = station.station_id;
    const RawRows raw = summary_rows(station, train, catalog);
    for (const auto& id : spec.covariates()) {
        const auto [variable, summary] = split_covariate_id(id);
        CovariateSource src;
        src.id = id;
        src.variable = variable;
        src.summary = summary;
        src.transform = transform_for(variable, summary == Summary::Sd);
        const auto it = std::find(raw.columns.begin(), raw.columns.end(), id);
        if (it == raw.columns.end()) throw DataError("station " + sid + " has no covariate '" + id + "'");
        const Eigen::Index col = std::distance(raw.columns.begin(), it);
        if (spec.anomaly_scale) {
            std::vector<double> values;
            std::vector<int> doys;
            for (Eigen::Index i = 0; i < raw.x.rows(); ++i) {
                const double x = raw.x(i, col);
                if (std::isnan(x)) continue;
                values.push_back(apply_transform(src.transform, x, id));
                doys.push_back(raw.doys[static_cast<std::size_t>(i)]);
            }
            src.climatology = fit_climatology(values, doys, sid, id);
        } else {
            src.climatology = ClimatologyFit::identity(sid, id);
        }
        out.covariates.push_back(std::move(src));
    }
    if (spec.anomaly_scale) {
        std::vector<double> y;
        std::vector<int> doys;
        for (std::size_t i : train) {
            y.push_back(station.days[i].observation);
            doys.push_back(station.days[i].date.doy());
        }
        out.response = fit_climatology(y, doys, sid, "response");
    } else {
        out.response = ClimatologyFit::identity(sid, "response");
    }
    return out;
}

TrainResult train_station(const StationDataset& station, const StationSplit& split, const RunConfig& config,
                          const CovariateCatalog& catalog) {
    const ModelSpec spec = config.model_spec(catalog);
    const std::string& sid = station.station_id;
    StationClimatology clim = fit_station_climatology(station, split.train, spec, catalog);

    const FinalizedModel base =
        finalize_bfgs(spec, Coefficients::zeros(spec), clim.covariates, clim.response, sid);
    const RawRows raw = summary_rows(station, split.train, catalog);
    std::vector<std::string> errors;
    const Design full = anomaly_design(base, raw, &errors);
    std::vector<std::size_t> keep;
    std::vector<double> z;
    TrainResult result;
    for (std::size_t r = 0; r < split.train.size(); ++r) {
        const DayRecord& day = station.days[split.train[r]];
        if (!errors[r].empty() || !std::isfinite(day.observation)) {
            ++result.dropped_rows;
            continue;
        }
        keep.push_back(r);
        z.push_back(standardize_value(day.observation, day.date.doy(), clim.response));
    }
    if (result.dropped_rows > 0) {
        spdlog::info("station {}: dropped {} incomplete training days", sid, result.dropped_rows);
    }
    const Design design = full.select_rows(keep);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
    result.training_rows = keep.size();

    if (spec.estimator == Estimator::Bfgs) {
        const FittedCoefficients fit = fit_bfgs(spec, design, y);
        spdlog::debug("station {}: BFGS stopped after {} iterations ({})", sid, fit.iterations, to_string(fit.stop));
        result.model = finalize_bfgs(spec, fit.coefficients, std::move(clim.covariates), clim.response, sid);
    } else {
        const StandardizedData data = standardize_columns(design, y);
        const BoostConfig bc = config.boost_config(spec, station_seed(config, sid));
        CvResult cv = cross_validate_mstop(spec, data.design, data.y, bc);
        BoostState state = boost_fit(spec, data.design, data.y, bc);
        spdlog::debug("station {}: m_opt = {}", sid, cv.m_opt);
        result.model = finalize_model(state, cv.m_opt, data.stats, std::move(clim.covariates), clim.response, sid);
        result.cv = std::move(cv);
        result.boost = std::move(state);
    }
    return result;
}

StationForecasts predict_station(const FinalizedModel& model, const StationDataset& station,
                                 const std::vector<std::size_t>& days, const CovariateCatalog& catalog) {
    StationForecasts out;
    out.station_id = station.station_id;
    out.K = model.spec.K;
    const RawRows raw = summary_rows(station, days, catalog);
    const std::vector<RowPrediction> pred = predict(model, raw);
    const std::size_t members = station.members("t2m");
    std::vector<std::size_t> ok;
    for (std::size_t r = 0; r < days.size(); ++r) {
        const DayRecord& day = station.days[days[r]];
        if (!pred[r].params) {
            out.row_errors.push_back("station " + station.station_id + ", " + day.date.str() + ": " + pred[r].error);
            continue;
        }
        ok.push_back(r);
        out.dates.push_back(day.date);
        out.observations.push_back(day.observation);
        out.predictions.push_back(*pred[r].params);
    }
    out.ensemble.resize(static_cast<Eigen::Index>(ok.size()), static_cast<Eigen::Index>(members + 1));
    for (std::size_t i = 0; i < ok.size(); ++i) {
        const auto& t2m = station.days[days[ok[i]]].forecasts.at("t2m");
        const auto row = static_cast<Eigen::Index>(i);
        for (std::size_t m = 0; m < members; ++m) out.ensemble(row, static_cast<Eigen::Index>(m)) = t2m.perturbed[m];
        out.ensemble(row, static_cast<Eigen::Index>(members)) = t2m.ctrl;
    }
    return out;
}

StationEvaluation evaluate_station(const StationForecasts& f, const RunConfig& config, const std::string& model_name) {
    std::vector<MixtureParams> preds;
    std::vector<double> obs;
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < f.observations.size(); ++i) {
        if (!std::isfinite(f.observations[i])) continue;
        preds.push_back(f.predictions[i]);
        obs.push_back(f.observations[i]);
        rows.push_back(static_cast<Eigen::Index>(i));
    }
    if (obs.empty()) throw DataError("station " + f.station_id + " has no verifiable test days");
    const std::uint64_t seed = station_seed(config, f.station_id);
    StationEvaluation ev;
    ev.model = score_report(model_name, f.station_id, preds, obs, config.level, config.pit_bins, config.bootstrap(seed));
    ev.model_crps = case_scores(preds, obs).crps;
    ev.pit = pit_values(preds, obs);

    Eigen::MatrixXd ens(static_cast<Eigen::Index>(rows.size()), f.ensemble.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) ens.row(static_cast<Eigen::Index>(i)) = f.ensemble.row(rows[i]);
    ev.raw_crps.resize(obs.size());
    std::vector<double> member(static_cast<std::size_t>(ens.cols()));
    for (std::size_t i = 0; i < obs.size(); ++i) {
        for (Eigen::Index m = 0; m < ens.cols(); ++m) member[static_cast<std::size_t>(m)] = ens(static_cast<Eigen::Index>(i), m);
        ev.raw_crps[i] = crps_ensemble(member, obs[i]);
    }
    ev.raw_ensemble.model = "raw-ensemble";
    ev.raw_ensemble.station = f.station_id;
    ev.raw_ensemble.cases = obs.size();
    ev.raw_ensemble.crps = std::accumulate(ev.raw_crps.begin(), ev.raw_crps.end(), 0.0) / static_cast<double>(obs.size());
    const BootstrapOptions bo = config.bootstrap(seed);
    ev.raw_ensemble.crps_se = static_cast<double>(obs.size()) >= 2.0 * bo.block_length_mean ? bootstrap_se(ev.raw_crps, bo)
                                                                                             : std::nan("");
    ev.rank = rank_histogram(ens, obs, derive_seed(seed, "rank"));
    if (obs.size() >= 30) ev.dm = dm_test(ev.model_crps, ev.raw_crps);
    return ev;
}

std::vector<StationOutcome> for_each_station(const std::vector<StationDataset>& data, unsigned jobs,
                                             const std::function<void(const StationDataset&, StationOutcome&)>& work) {
    std::vector<StationOutcome> outcomes(data.size());
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, data.size())));
    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= data.size()) return;
            StationOutcome& o = outcomes[i];
            o.station_id = data[i].station_id;
            try {
                work(data[i], o);
                o.ok = true;
            } catch (const DataError& e) {
                o.failure_code = 2;
                o.error = e.what();
            } catch (const DomainError& e) {
                o.failure_code = 2;
                o.error = e.what();
            } catch (const std::exception& e) {
                o.failure_code = 3;
                o.error = e.what();
            }
            if (!o.ok) spdlog::error("station {} failed: {}", o.station_id, o.error);
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return outcomes;
}

std::vector<StationDataset> select_stations(std::vector<StationDataset> data, const RunConfig& config) {
    if (config.stations.empty()) return data;
    std::vector<StationDataset> out;
    for (const auto& id : config.stations) {
        const auto it = std::find_if(data.begin(), data.end(), [&](const StationDataset& s) { return s.station_id == id; });
        if (it == data.end()) throw DataError("config lists unknown station '" + id + "'");
        out.push_back(std::move(*it));
    }
    return out;
}

void write_predictions_csv(std::ostream& out, const std::vector<StationForecasts>& forecasts) {
    out << "station_id,date,K,weights,locations,scales,observation\n";
    for (const auto& f : forecasts) {
        for (std::size_t i = 0; i < f.predictions.size(); ++i) {
            const auto& p = f.predictions[i];
            out << f.station_id << "," << f.dates[i].str() << "," << p.size() << "," << join_values(p.weights) << ","
                << join_values(p.locations) << "," << join_values(p.scales) << ","
                << (std::isfinite(f.observations[i]) ? format_double(f.observations[i]) : std::string("NA")) << "\n";
        }
    }
}

std::vector<PredictionRecord> read_predictions_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("predictions file is empty");
    std::vector<PredictionRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (f.size() != 7) throw DataError("predictions line " + std::to_string(line_no) + ": expected 7 fields");
        PredictionRecord r;
        r.station_id = f[0];
        r.date = Date::parse(f[1]);
        r.params.weights = parse_values(f[3]);
        r.params.locations = parse_values(f[4]);
        r.params.scales = parse_values(f[5]);
        if (r.params.size() != std::stoul(f[2])) {
            throw DataError("predictions line " + std::to_string(line_no) + ": K does not match the lists");
        }
        r.params.validate();
        out.push_back(std::move(r));
    }
    return out;
}

void write_mopt_csv(std::ostream& out, const std::vector<StationOutcome>& outcomes) {
    out << "station_id,m_opt,m_stop,halted_at\n";
    for (const auto& o : outcomes) {
        if (!o.ok || !o.train || !o.train->cv) continue;
        const auto& b = *o.train->boost;
        out << o.station_id << "," << o.train->cv->m_opt << "," << b.config.m_stop << ","
            << (b.halted_at ? std::to_string(*b.halted_at) : std::string("NA")) << "\n";
    }
}

int exit_code(const std::vector<StationOutcome>& outcomes) {
    for (const auto& o : outcomes) {
        if (!o.ok) return o.failure_code == 0 ? 3 : o.failure_code;
    }
    return 0;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << content;
}

}  // namespace

std::vector<StationOutcome> run_pipeline(const RunConfig& config, const std::vector<StationDataset>& data,
                                         const std::filesystem::path& out_dir, unsigned jobs) {
    const CovariateCatalog catalog = CovariateCatalog::standard();
    auto outcomes = for_each_station(data, jobs, [&](const StationDataset& station, StationOutcome& o) {
        const StationSplit split = split_days(station, config);
        if (split.test.empty()) throw DataError("station " + station.station_id + " has no test days");
        o.train = train_station(station, split, config, catalog);
        o.forecasts = predict_station(o.train->model, station, split.test, catalog);
        for (const auto& e : o.forecasts->row_errors) spdlog::warn("{}", e);
        o.evaluation = evaluate_station(*o.forecasts, config, config.model);
        if (config.importance) {
            std::vector<std::size_t> days;
            for (std::size_t i : split.test) {
                if (std::isfinite(station.days[i].observation)) days.push_back(i);
            }
            RawRows rows = summary_rows(station, days, catalog);
            std::vector<double> obs;
            for (std::size_t i : days) obs.push_back(station.days[i].observation);
            const std::uint64_t seed = station_seed(config, station.station_id);
            for (const auto& id : o.train->model.spec.covariates()) {
                o.importance.push_back(permutation_importance(o.train->model, rows, obs, id, derive_seed(seed, id),
                                                              config.importance_repeats, config.bootstrap(seed)));
            }
        }
    });

    std::filesystem::create_directories(out_dir / "models");
    std::ostringstream clim, preds, scores, sig, failures;
    std::vector<StationForecasts> forecasts;
    std::vector<ScoreReport> reports;
    std::vector<Significance> significance;
    HistogramDiag pit_pooled, rank_pooled;
    pit_pooled.counts.assign(config.pit_bins, 0);
    std::vector<ClimatologyFit> fits;
    bool any_boost = false;
    for (const auto& o : outcomes) {
        if (!o.ok) continue;
        const FinalizedModel& model = o.train->model;
        fits.push_back(model.response_climatology);
        for (const auto& c : model.covariates) fits.push_back(c.climatology);
        std::ostringstream mf;
        write_finalized_model(mf, model);
        write_file(out_dir / "models" / (o.station_id + ".model"), mf.str());
        forecasts.push_back(*o.forecasts);
        reports.push_back(o.evaluation->model);
        reports.push_back(o.evaluation->raw_ensemble);
        const HistogramDiag pit = pit_histogram(o.evaluation->pit, config.pit_bins);
        for (std::size_t b = 0; b < pit.counts.size(); ++b) pit_pooled.counts[b] += pit.counts[b];
        const auto& rank = o.evaluation->rank;
        if (rank_pooled.counts.empty()) rank_pooled.counts.assign(rank.counts.size(), 0);
        if (rank_pooled.counts.size() == rank.counts.size()) {
            for (std::size_t b = 0; b < rank.counts.size(); ++b) rank_pooled.counts[b] += rank.counts[b];
        }
        if (o.evaluation->dm) significance.push_back({o.station_id, o.evaluation->dm->p_two_sided, false});
        if (o.train->boost) {
            any_boost = true;
            std::filesystem::create_directories(out_dir / "paths");
            std::ostringstream paths;
            write_coefficient_paths(paths, *o.train->boost, o.train->cv->m_opt);
            write_file(out_dir / "paths" / (o.station_id + ".csv"), paths.str());
        }
    }
    write_climatology_csv(clim, fits);
    write_file(out_dir / "climatology.csv", clim.str());
    write_predictions_csv(preds, forecasts);
    write_file(out_dir / "predictions.csv", preds.str());
    write_scores_csv(scores, reports);
    {
        // Rows of the raw ensemble carry CRPS only.
        std::istringstream in(scores.str());
        std::ostringstream filtered;
        std::string line;
        while (std::getline(in, line)) {
            if (line.rfind("raw-ensemble,", 0) == 0 && line.find(",crps,") == std::string::npos) continue;
            filtered << line << "\n";
        }
        write_file(out_dir / "scores.csv", filtered.str());
    }
    if (pit_pooled.total() > 0) {
        std::ostringstream h;
        write_histogram_csv(h, pit_pooled);
        write_file(out_dir / "pit_histogram.csv", h.str());
    }
    if (rank_pooled.total() > 0) {
        std::ostringstream h;
        write_histogram_csv(h, rank_pooled);
        write_file(out_dir / "rank_histogram.csv", h.str());
    }
    {
        std::vector<double> p;
        for (const auto& s : significance) p.push_back(s.p_value);
        const std::vector<bool> rejected = benjamini_hochberg(p);
        for (std::size_t i = 0; i < significance.size(); ++i) significance[i].rejected = rejected[i];
        write_significance_csv(sig, significance);
        write_file(out_dir / "significance.csv", sig.str());
    }
    if (any_boost) {
        std::ostringstream m;
        write_mopt_csv(m, outcomes);
        write_file(out_dir / "mopt.csv", m.str());
    }
    if (config.importance) {
        std::vector<Importance> pooled;
        std::vector<std::vector<double>> values;
        for (const auto& o : outcomes) {
            if (!o.ok) continue;
            for (std::size_t i = 0; i < o.importance.size(); ++i) {
                if (pooled.size() <= i) {
                    pooled.push_back({o.importance[i].covariate, 0.0, 0.0});
                    values.emplace_back();
                }
                values[i].push_back(o.importance[i].importance);
            }
        }
        for (std::size_t i = 0; i < pooled.size(); ++i) {
            const auto& v = values[i];
            const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            pooled[i].importance = mean;
            pooled[i].se = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))
                                        : std::nan("");
        }
        std::ostringstream imp;
        write_importance_csv(imp, pooled);
        write_file(out_dir / "importance.csv", imp.str());
    }
    failures << "station_id,code,error\n";
    for (const auto& o : outcomes) {
        if (o.ok) continue;
        std::string msg = o.error;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        failures << o.station_id << "," << o.failure_code << "," << msg << "\n";
    }
    write_file(out_dir / "failures.csv", failures.str());
    return outcomes;
}

}  // namespace mixboost
