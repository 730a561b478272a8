#include "mixboost/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "mixboost/error.hpp"

namespace mixboost {

const char* to_string(StopReason reason) {
    switch (reason) {
        case StopReason::RelativeTolerance: return "relative_tolerance";
        case StopReason::MaxIterations: return "max_iterations";
        case StopReason::ZeroGradient: return "zero_gradient";
    }
    return "?";
}

LossAndGradient total_loss_and_gradient(const BoundModel& model, const Coefficients& coeffs,
                                        const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const auto& spec = model.spec();
    const Eigen::Index n = x.rows();
    const Eigen::Index J = static_cast<Eigen::Index>(spec.predictors.size());
    const RowMatrix eta = model.linear_predictors(coeffs, x);
    RowMatrix d_eta(n, J);
    MixtureParams params;
    PredictorGradients scratch;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        loss += model.row_loss_gradient(eta.row(i).data(), y[i], params, scratch, d_eta.row(i).data(), i);
    }

    LossAndGradient out;
    out.loss = loss;
    out.gradient.resize(static_cast<Eigen::Index>(spec.coefficient_count()));
    Eigen::Index pos = 0;
    for (Eigen::Index j = 0; j < J; ++j) {
        const auto& p = spec.predictors[static_cast<std::size_t>(j)];
        for (std::size_t t = 0; t < p.term_count(); ++t) {
            const std::ptrdiff_t col = model.term_column(static_cast<std::size_t>(j), t);
            out.gradient[pos++] = col < 0 ? d_eta.col(j).sum() : x.col(col).dot(d_eta.col(j));
        }
    }
    return out;
}

LossAndGradient total_loss_and_gradient(const ModelSpec& spec, const Coefficients& coeffs,
                                        const Design& design, const Eigen::VectorXd& y) {
    if (design.x.rows() != y.size()) throw DomainError("design and responses differ in length");
    const BoundModel model(spec, design.columns);
    return total_loss_and_gradient(model, coeffs, design.x, y);
}

double total_loss(const BoundModel& model, const Coefficients& coeffs, const Eigen::MatrixXd& x,
                  const Eigen::VectorXd& y) {
    const RowMatrix eta = model.linear_predictors(coeffs, x);
    MixtureParams params;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) loss += model.row_loss(eta.row(i).data(), y[i], params, i);
    return loss;
}

namespace {

double evaluate(const Objective& objective, const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    try {
        const double f = objective(x, g);
        return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
    } catch (const ScoreOverflow&) {
        return std::numeric_limits<double>::infinity();
    }
}

}  // namespace

BfgsResult minimize_bfgs(const Objective& objective, Eigen::VectorXd x0, const BfgsOptions& opts) {
    const Eigen::Index n = x0.size();
    BfgsResult res;
    res.x = std::move(x0);
    res.gradient.resize(n);
    res.value = objective(res.x, res.gradient);
    if (!std::isfinite(res.value) || !res.gradient.allFinite()) {
        throw ConvergenceError("non-finite loss at the starting point", 0, std::numeric_limits<double>::quiet_NaN());
    }

    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool h_is_identity = true;
    bool first_update = true;
    Eigen::VectorXd x_new(n), g_new(n);

    std::size_t iter = 0;
    while (iter < opts.max_iterations) {
        if (res.gradient.squaredNorm() == 0.0) {
            res.stop = StopReason::ZeroGradient;
            res.iterations = iter;
            return res;
        }
        Eigen::VectorXd direction = -h * res.gradient;
        double slope = res.gradient.dot(direction);
        if (!(slope < 0.0)) {
            h.setIdentity();
            h_is_identity = true;
            direction = -res.gradient;
            slope = -res.gradient.squaredNorm();
        }
        // Unit step, except before any curvature information exists.
        double alpha = h_is_identity && first_update
                           ? std::min(1.0, 1.0 / res.gradient.lpNorm<Eigen::Infinity>())
                           : 1.0;
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (std::size_t b = 0; b < opts.max_backtracks; ++b) {
            x_new = res.x + alpha * direction;
            f_new = evaluate(objective, x_new, g_new);
            if (f_new <= res.value + opts.armijo * alpha * slope && g_new.allFinite()) {
                accepted = true;
                break;
            }
            alpha *= opts.shrink;
        }
        if (!accepted) {
            if (!h_is_identity) {
                h.setIdentity();
                h_is_identity = true;
                continue;
            }
            const double gnorm = res.gradient.norm();
            if (gnorm <= 1e-6 * (1.0 + std::abs(res.value))) {
                // No representable decrease left along the steepest descent direction.
                res.stop = StopReason::RelativeTolerance;
                res.iterations = iter;
                return res;
            }
            throw ConvergenceError("BFGS line search failed to find a decrease", iter, gnorm);
        }
        ++iter;

        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd yv = g_new - res.gradient;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            if (first_update) {
                h *= sy / yv.squaredNorm();
                first_update = false;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd hy = h * yv;
            const double yhy = yv.dot(hy);
            h += (rho * rho * yhy + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
            h_is_identity = false;
        }

        const double f_old = res.value;
        res.x = x_new;
        res.value = f_new;
        res.gradient = g_new;
        if (std::abs(f_old - f_new) <= opts.relative_tolerance * (std::abs(f_old) + opts.relative_tolerance)) {
            res.stop = StopReason::RelativeTolerance;
            res.iterations = iter;
            return res;
        }
    }
    res.stop = StopReason::MaxIterations;
    res.iterations = iter;
    return res;
}

FittedCoefficients fit_bfgs(const ModelSpec& spec, const Design& design, const Eigen::VectorXd& y,
                            const BfgsOptions& opts) {
    const Coefficients zeros = Coefficients::zeros(spec);
    FittedCoefficients best = fit_bfgs(spec, design, y, zeros, opts);
    if (spec.K < 2 || spec.K > 4 || !opts.mixture_starts) return best;

    // From zero every component starts identical, and the fit can settle with
    // the components swapped. Also start with the location intercepts spread
    // over quantiles of y, in every order.
    std::vector<double> sorted(y.data(), y.data() + y.size());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> q(spec.K);
    for (std::size_t k = 0; k < spec.K; ++k) {
        const auto pos = static_cast<std::size_t>((static_cast<double>(k) + 0.5) / static_cast<double>(spec.K) *
                                                  static_cast<double>(sorted.size() - 1));
        q[k] = sorted[pos];
    }
    std::vector<std::size_t> order(spec.K);
    for (std::size_t k = 0; k < spec.K; ++k) order[k] = k;
    do {
        Coefficients start = zeros;
        bool any = false;
        for (std::size_t k = 0; k < spec.K; ++k) {
            const std::size_t j = spec.location_index(k);
            if (!spec.predictors[j].has_intercept) continue;
            start.terms[j][0] = q[order[k]];
            any = true;
        }
        if (!any) break;
        try {
            FittedCoefficients fit = fit_bfgs(spec, design, y, start, opts);
            if (fit.loss < best.loss) {
                fit.initial_loss = best.initial_loss;
                best = std::move(fit);
            }
        } catch (const ScoreOverflow&) {
        } catch (const ConvergenceError&) {
        }
    } while (std::next_permutation(order.begin(), order.end()));
    return best;
}

FittedCoefficients fit_bfgs(const ModelSpec& spec, const Design& design, const Eigen::VectorXd& y,
                            const Coefficients& start_coeffs, const BfgsOptions& opts) {
    if (design.x.rows() != y.size()) throw DomainError("design and responses differ in length");
    const std::size_t n_coef = spec.coefficient_count();
    if (design.rows() < n_coef + 5) {
        throw DomainError("fit_bfgs: need at least " + std::to_string(n_coef + 5) + " rows, got " +
                          std::to_string(design.rows()));
    }
    if (!y.allFinite()) throw DomainError("fit_bfgs: non-finite response");
    const BoundModel model(spec, design.columns);

    Objective objective = [&](const Eigen::VectorXd& flat, Eigen::VectorXd& grad) {
        auto lg = total_loss_and_gradient(model, Coefficients::unflatten(spec, flat), design.x, y);
        grad = std::move(lg.gradient);
        return lg.loss;
    };

    const Eigen::VectorXd start = start_coeffs.flatten();
    if (static_cast<std::size_t>(start.size()) != n_coef) throw DomainError("fit_bfgs: start does not match the spec");
    FittedCoefficients fit;
    fit.initial_loss = total_loss(model, start_coeffs, design.x, y);
    const BfgsResult res = minimize_bfgs(objective, start, opts);
    fit.coefficients = Coefficients::unflatten(spec, res.x);
    fit.iterations = res.iterations;
    fit.gradient_norm = res.gradient.norm();
    fit.loss = res.value;
    fit.stop = res.stop;
    return fit;
}

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

void write_model_file(std::ostream& out, const ModelSpec& spec, const Coefficients& coeffs) {
    spec.validate();
    out << "mixboost-model 1\n";
    out << "name " << spec.name << "\n";
    out << "spec_hash " << spec.hash() << "\n";
    out << "K " << spec.K << "\n";
    out << "loss " << to_string(spec.loss) << "\n";
    out << "estimator " << to_string(spec.estimator) << "\n";
    out << "scale " << (spec.anomaly_scale ? "anomaly" : "raw") << "\n";
    out << "links softmax identity log\n";
    out << "groups " << spec.group_map.size() << "\n";
    for (std::size_t k = 0; k < spec.group_map.size(); ++k) {
        out << "group " << (k + 1);
        for (const auto& id : spec.group_map[k]) out << " " << id;
        out << "\n";
    }
    for (std::size_t j = 0; j < spec.predictors.size(); ++j) {
        const auto& p = spec.predictors[j];
        out << "predictor " << p.label() << " " << to_string(p.target) << " " << (p.component + 1) << " "
            << (p.has_intercept ? 1 : 0) << " " << p.covariate_ids.size() << "\n";
        for (std::size_t t = 0; t < p.term_count(); ++t) {
            out << "coef " << p.term_name(t) << " " << format_double(coeffs.terms.at(j).at(t)) << "\n";
        }
    }
    out << "end\n";
}

namespace {

std::string next_line(std::istream& in, std::size_t& line_no) {
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        return line;
    }
    throw DataError("model file: unexpected end of input after line " + std::to_string(line_no));
}

std::istringstream expect(std::istream& in, std::size_t& line_no, const std::string& key) {
    const std::string line = next_line(in, line_no);
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    if (word != key) {
        throw DataError("model file line " + std::to_string(line_no) + ": expected '" + key + "', got '" + word + "'");
    }
    return fields;
}

Target parse_target(const std::string& s) {
    if (s == "weight") return Target::Weight;
    if (s == "location") return Target::Location;
    if (s == "scale") return Target::Scale;
    throw DataError("model file: unknown predictor target '" + s + "'");
}

}  // namespace

ModelFileContents read_model_file(std::istream& in) {
    std::size_t line_no = 0;
    ModelFileContents result;
    ModelSpec& spec = result.spec;
    {
        auto f = expect(in, line_no, "mixboost-model");
        int version = 0;
        f >> version;
        if (version != 1) throw DataError("model file: unsupported version " + std::to_string(version));
    }
    expect(in, line_no, "name") >> spec.name;
    std::string stored_hash;
    expect(in, line_no, "spec_hash") >> stored_hash;
    expect(in, line_no, "K") >> spec.K;
    std::string word;
    expect(in, line_no, "loss") >> word;
    spec.loss = parse_loss(word);
    expect(in, line_no, "estimator") >> word;
    spec.estimator = word == "boosting" ? Estimator::Boosting : Estimator::Bfgs;
    expect(in, line_no, "scale") >> word;
    spec.anomaly_scale = word == "anomaly";
    expect(in, line_no, "links");
    std::size_t n_groups = 0;
    expect(in, line_no, "groups") >> n_groups;
    for (std::size_t k = 0; k < n_groups; ++k) {
        auto f = expect(in, line_no, "group");
        std::size_t idx = 0;
        f >> idx;
        std::vector<std::string> ids;
        while (f >> word) ids.push_back(word);
        spec.group_map.push_back(std::move(ids));
    }
    for (std::size_t j = 0; j < 3 * spec.K; ++j) {
        auto f = expect(in, line_no, "predictor");
        LinearPredictorSpec p;
        std::string label, target;
        std::size_t component = 0, n_cov = 0;
        int intercept = 0;
        f >> label >> target >> component >> intercept >> n_cov;
        if (!f || component == 0) throw DataError("model file line " + std::to_string(line_no) + ": bad predictor header");
        p.target = parse_target(target);
        p.component = component - 1;
        p.has_intercept = intercept != 0;
        std::vector<double> values;
        const std::size_t n_terms = n_cov + (p.has_intercept ? 1 : 0);
        for (std::size_t t = 0; t < n_terms; ++t) {
            auto c = expect(in, line_no, "coef");
            std::string name;
            double value = 0.0;
            c >> name >> value;
            if (!c) throw DataError("model file line " + std::to_string(line_no) + ": bad coefficient");
            if (p.has_intercept && t == 0) {
                if (name != kInterceptName) throw DataError("model file line " + std::to_string(line_no) + ": intercept must come first");
            } else {
                p.covariate_ids.push_back(name);
            }
            values.push_back(value);
        }
        spec.predictors.push_back(std::move(p));
        result.coefficients.terms.push_back(std::move(values));
    }
    expect(in, line_no, "end");
    try {
        spec.validate();
    } catch (const DomainError& e) {
        throw DataError(std::string("model file: ") + e.what());
    }
    if (spec.hash() != stored_hash) throw DataError("model file: spec hash mismatch (file is corrupt or edited)");
    return result;
}

}  // namespace mixboost
