#include "mixboost/models.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "mixboost/error.hpp"
#include "mixboost/estimate.hpp"

namespace mixboost {

const char* to_string(Summary summary) {
    switch (summary) {
        case Summary::Mean: return "MEAN";
        case Summary::Ctrl: return "CTRL";
        case Summary::Sd: return "SD";
    }
    return "?";
}

Summary parse_summary(std::string_view text) {
    if (text == "MEAN") return Summary::Mean;
    if (text == "CTRL") return Summary::Ctrl;
    if (text == "SD") return Summary::Sd;
    throw DataError("unknown ensemble summary '" + std::string(text) + "'");
}

CovariateCatalog CovariateCatalog::standard() {
    return {{"t2m", "pr", "u10m", "v10m", "sh", "tcc", "ws10m", "wg10m"}};
}

std::string CovariateCatalog::id(const std::string& variable, Summary summary) {
    return variable + "_" + to_string(summary);
}

bool CovariateCatalog::has(const std::string& variable) const {
    return std::find(variables.begin(), variables.end(), variable) != variables.end();
}

std::vector<std::string> CovariateCatalog::perturbed_group() const {
    std::vector<std::string> out;
    for (const auto& v : variables) {
        out.push_back(id(v, Summary::Mean));
        out.push_back(id(v, Summary::Sd));
    }
    return out;
}

std::vector<std::string> CovariateCatalog::control_group() const {
    std::vector<std::string> out;
    for (const auto& v : variables) out.push_back(id(v, Summary::Ctrl));
    return out;
}

std::vector<std::string> CovariateCatalog::all() const {
    std::vector<std::string> out;
    for (const auto& v : variables) {
        out.push_back(id(v, Summary::Mean));
        out.push_back(id(v, Summary::Ctrl));
        out.push_back(id(v, Summary::Sd));
    }
    return out;
}

void CovariateCatalog::validate() const {
    if (variables.empty()) throw DomainError("covariate catalog has no variables");
    for (std::size_t i = 0; i < variables.size(); ++i) {
        for (std::size_t j = i + 1; j < variables.size(); ++j) {
            if (variables[i] == variables[j]) throw DomainError("duplicate variable '" + variables[i] + "' in catalog");
        }
    }
}

namespace {

void require_t2m(const CovariateCatalog& catalog, const std::string& model) {
    catalog.validate();
    if (!catalog.has("t2m")) throw DomainError(model + " requires t2m covariates");
}

std::string mean_id() { return CovariateCatalog::id("t2m", Summary::Mean); }
std::string ctrl_id() { return CovariateCatalog::id("t2m", Summary::Ctrl); }
std::string sd_id() { return CovariateCatalog::id("t2m", Summary::Sd); }

}  // namespace

ModelSpec make_samos(const CovariateCatalog& catalog, Loss loss) {
    require_t2m(catalog, "SAMOS");
    ModelSpec spec;
    spec.name = "samos";
    spec.K = 1;
    spec.loss = loss;
    spec.predictors = {
        {Target::Weight, 0, {}, false},
        {Target::Location, 0, {mean_id(), ctrl_id()}, true},
        {Target::Scale, 0, {sd_id()}, true},
    };
    spec.validate();
    return spec;
}

ModelSpec make_samos_gb(const CovariateCatalog& catalog, Loss loss) {
    catalog.validate();
    ModelSpec spec;
    spec.name = "samos-gb";
    spec.K = 1;
    spec.loss = loss;
    spec.estimator = Estimator::Boosting;
    const auto all = catalog.all();
    spec.predictors = {
        {Target::Weight, 0, {}, false},
        {Target::Location, 0, all, true},
        {Target::Scale, 0, all, true},
    };
    spec.validate();
    return spec;
}

ModelSpec make_mixsamos(const CovariateCatalog& catalog, Loss loss) {
    require_t2m(catalog, "MIXSAMOS");
    ModelSpec spec;
    spec.name = "mixsamos";
    spec.K = 2;
    spec.loss = loss;
    spec.predictors = {
        {Target::Weight, 0, {mean_id()}, true},
        {Target::Weight, 1, {ctrl_id()}, true},
        {Target::Location, 0, {mean_id()}, true},
        {Target::Scale, 0, {sd_id()}, true},
        {Target::Location, 1, {ctrl_id()}, true},
        {Target::Scale, 1, {}, true},
    };
    spec.group_map = {catalog.perturbed_group(), catalog.control_group()};
    spec.validate();
    return spec;
}

ModelSpec make_mixsamos_gb(const CovariateCatalog& catalog, Loss loss) {
    catalog.validate();
    ModelSpec spec;
    spec.name = "mixsamos-gb";
    spec.K = 2;
    spec.loss = loss;
    spec.estimator = Estimator::Boosting;
    const auto g1 = catalog.perturbed_group();
    const auto g2 = catalog.control_group();
    spec.predictors = {
        {Target::Weight, 0, g1, true},   {Target::Weight, 1, g2, true},
        {Target::Location, 0, g1, true}, {Target::Scale, 0, g1, true},
        {Target::Location, 1, g2, true}, {Target::Scale, 1, g2, true},
    };
    spec.group_map = {g1, g2};
    spec.validate();
    return spec;
}

ModelSpec make_mixmos(const CovariateCatalog& catalog, Loss loss) {
    ModelSpec spec = make_mixsamos(catalog, loss);
    spec.name = "mixmos";
    spec.anomaly_scale = false;
    return spec;
}

ModelSpec make_model(const std::string& name, const CovariateCatalog& catalog, Loss loss) {
    if (name == "samos") return make_samos(catalog, loss);
    if (name == "samos-gb") return make_samos_gb(catalog, loss);
    if (name == "mixsamos") return make_mixsamos(catalog, loss);
    if (name == "mixsamos-gb") return make_mixsamos_gb(catalog, loss);
    if (name == "mixmos") return make_mixmos(catalog, loss);
    throw DomainError("unknown model '" + name + "'");
}

BoostConfig default_boost_config(const ModelSpec& spec) {
    BoostConfig config;
    config.m_stop = spec.K == 1 ? 2000 : 6000;
    config.loss = spec.loss;
    return config;
}

std::vector<std::string> FinalizedModel::columns() const {
    std::vector<std::string> out;
    out.reserve(covariates.size());
    for (const auto& c : covariates) out.push_back(c.id);
    return out;
}

namespace {

void check_covariates(const ModelSpec& spec, const std::vector<CovariateSource>& covariates) {
    for (const auto& id : spec.covariates()) {
        const bool found = std::any_of(covariates.begin(), covariates.end(),
                                       [&](const CovariateSource& c) { return c.id == id; });
        if (!found) throw DataError("no covariate source for '" + id + "'");
    }
}

}  // namespace

FinalizedModel finalize_model(const BoostState& state, std::size_t m, const ColumnStats& stats,
                              std::vector<CovariateSource> covariates, ClimatologyFit response,
                              std::string station_id) {
    FinalizedModel model;
    model.spec = state.spec;
    model.coefficients = state.coefficients_at(m);
    model.iteration = std::min(m, state.iterations());
    model.covariates = std::move(covariates);
    model.column_stats = stats;
    model.response_climatology = std::move(response);
    model.station_id = std::move(station_id);
    if (stats.columns != model.columns()) throw DataError("column statistics do not match the covariate sources");
    check_covariates(model.spec, model.covariates);
    return model;
}

FinalizedModel finalize_bfgs(const ModelSpec& spec, const Coefficients& coeffs,
                             std::vector<CovariateSource> covariates, ClimatologyFit response,
                             std::string station_id) {
    FinalizedModel model;
    model.spec = spec;
    model.coefficients = coeffs;
    model.covariates = std::move(covariates);
    model.response_climatology = std::move(response);
    model.station_id = std::move(station_id);
    check_covariates(model.spec, model.covariates);
    return model;
}

Design anomaly_design(const FinalizedModel& model, const RawRows& rows, std::vector<std::string>* errors) {
    const Eigen::Index n = rows.x.rows();
    if (rows.doys.size() != static_cast<std::size_t>(n)) throw DataError("raw rows and doys differ in length");
    Design out;
    out.columns = model.columns();
    out.x.resize(n, static_cast<Eigen::Index>(out.columns.size()));
    if (errors) errors->assign(static_cast<std::size_t>(n), "");
    for (std::size_t c = 0; c < model.covariates.size(); ++c) {
        const auto& src = model.covariates[c];
        const auto it = std::find(rows.columns.begin(), rows.columns.end(), src.id);
        if (it == rows.columns.end()) throw DataError("input has no column for covariate '" + src.id + "'");
        const Eigen::Index rc = std::distance(rows.columns.begin(), it);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double raw = rows.x(i, rc);
            double value = std::numeric_limits<double>::quiet_NaN();
            std::string problem;
            if (std::isnan(raw)) {
                problem = "missing value for covariate '" + src.id + "'";
            } else {
                try {
                    value = standardize_value(apply_transform(src.transform, raw, src.id),
                                              rows.doys[static_cast<std::size_t>(i)], src.climatology);
                } catch (const DomainError& e) {
                    problem = e.what();
                }
            }
            out.x(i, static_cast<Eigen::Index>(c)) = value;
            if (errors && !problem.empty() && (*errors)[static_cast<std::size_t>(i)].empty()) {
                (*errors)[static_cast<std::size_t>(i)] = problem;
            }
        }
    }
    if (model.column_stats) out.x = model.column_stats->apply(out.x);
    return out;
}

std::vector<MixtureParams> predict_anomaly(const FinalizedModel& model, const Design& anomalies) {
    const BoundModel bound(model.spec, anomalies.columns);
    const RowMatrix eta = bound.linear_predictors(model.coefficients, anomalies.x);
    std::vector<MixtureParams> out(static_cast<std::size_t>(anomalies.x.rows()));
    for (Eigen::Index i = 0; i < anomalies.x.rows(); ++i) {
        bound.params_from_etas(eta.row(i).data(), out[static_cast<std::size_t>(i)]);
    }
    return out;
}

std::vector<RowPrediction> predict(const FinalizedModel& model, const RawRows& rows) {
    std::vector<std::string> errors;
    const Design design = anomaly_design(model, rows, &errors);
    const std::vector<MixtureParams> z = predict_anomaly(model, design);
    std::vector<RowPrediction> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (!errors[i].empty()) {
            out[i].error = "row " + std::to_string(i) + ": " + errors[i];
            continue;
        }
        out[i].params = destandardize_mixture(z[i], model.response_climatology, rows.doys[i]);
    }
    return out;
}

namespace {

void write_fit(std::ostream& out, const ClimatologyFit& fit) {
    for (double v : fit.loc_coeffs) out << " " << format_double(v);
    for (double v : fit.scale_coeffs) out << " " << format_double(v);
}

void read_fit(std::istream& in, ClimatologyFit& fit) {
    for (double& v : fit.loc_coeffs) in >> v;
    for (double& v : fit.scale_coeffs) in >> v;
}

std::istringstream keyed_line(std::istream& in, const std::string& key) {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string word;
        fields >> word;
        if (word != key) throw DataError("model file: expected '" + key + "', got '" + word + "'");
        return fields;
    }
    throw DataError("model file: unexpected end of input while looking for '" + key + "'");
}

}  // namespace

void write_finalized_model(std::ostream& out, const FinalizedModel& model) {
    write_model_file(out, model.spec, model.coefficients);
    out << "station " << (model.station_id.empty() ? "-" : model.station_id) << "\n";
    out << "iteration " << model.iteration << "\n";
    out << "response " << (model.response_climatology.variable_id.empty() ? "-" : model.response_climatology.variable_id);
    write_fit(out, model.response_climatology);
    out << "\n";
    out << "covariates " << model.covariates.size() << "\n";
    for (const auto& c : model.covariates) {
        out << "covariate " << c.id << " " << c.variable << " " << to_string(c.summary) << " " << c.transform.name();
        write_fit(out, c.climatology);
        out << "\n";
    }
    if (model.column_stats) {
        out << "column_stats " << model.column_stats->columns.size() << "\n";
        for (std::size_t c = 0; c < model.column_stats->columns.size(); ++c) {
            out << "stat " << model.column_stats->columns[c] << " " << format_double(model.column_stats->means[c])
                << " " << format_double(model.column_stats->sds[c]) << "\n";
        }
    } else {
        out << "column_stats none\n";
    }
    out << "end-finalized\n";
}

FinalizedModel read_finalized_model(std::istream& in) {
    ModelFileContents base = read_model_file(in);
    FinalizedModel model;
    model.spec = std::move(base.spec);
    model.coefficients = std::move(base.coefficients);
    std::string word;
    keyed_line(in, "station") >> model.station_id;
    if (model.station_id == "-") model.station_id.clear();
    keyed_line(in, "iteration") >> model.iteration;
    {
        auto f = keyed_line(in, "response");
        f >> word;
        model.response_climatology.variable_id = word == "-" ? "" : word;
        model.response_climatology.station_id = model.station_id;
        read_fit(f, model.response_climatology);
        if (!f) throw DataError("model file: bad response climatology");
    }
    std::size_t n = 0;
    keyed_line(in, "covariates") >> n;
    for (std::size_t i = 0; i < n; ++i) {
        auto f = keyed_line(in, "covariate");
        CovariateSource c;
        std::string summary, transform;
        f >> c.id >> c.variable >> summary >> transform;
        c.summary = parse_summary(summary);
        c.transform = Transform::parse(transform);
        c.climatology.variable_id = c.id;
        c.climatology.station_id = model.station_id;
        read_fit(f, c.climatology);
        if (!f) throw DataError("model file: bad covariate line for '" + c.id + "'");
        model.covariates.push_back(std::move(c));
    }
    {
        auto f = keyed_line(in, "column_stats");
        f >> word;
        if (word != "none") {
            const std::size_t m = std::stoul(word);
            ColumnStats stats;
            for (std::size_t i = 0; i < m; ++i) {
                auto s = keyed_line(in, "stat");
                std::string id;
                double mean = 0.0, sd = 0.0;
                s >> id >> mean >> sd;
                if (!s) throw DataError("model file: bad column statistic");
                stats.columns.push_back(id);
                stats.means.push_back(mean);
                stats.sds.push_back(sd);
            }
            model.column_stats = std::move(stats);
        }
    }
    keyed_line(in, "end-finalized");
    check_covariates(model.spec, model.covariates);
    return model;
}

}  // namespace mixboost
