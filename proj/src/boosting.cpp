#include "mixboost/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>

#include "mixboost/error.hpp"
#include "mixboost/estimate.hpp"
#include "mixboost/rng.hpp"

namespace mixboost {

Eigen::MatrixXd ColumnStats::apply(const Eigen::MatrixXd& x) const {
    if (static_cast<std::size_t>(x.cols()) != means.size()) {
        throw DomainError("column statistics do not match the design width");
    }
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const auto k = static_cast<std::size_t>(c);
        out.col(c) = (x.col(c).array() - means[k]) / sds[k];
    }
    return out;
}

Design ColumnStats::apply(const Design& design) const {
    if (design.columns != columns) throw DomainError("column statistics were computed for different columns");
    return Design{design.columns, apply(design.x)};
}

ColumnStats column_stats(const Design& design) {
    const Eigen::Index n = design.x.rows();
    if (n < 2) throw DomainError("column standardization needs at least 2 rows");
    ColumnStats stats;
    stats.columns = design.columns;
    for (Eigen::Index c = 0; c < design.x.cols(); ++c) {
        const auto col = design.x.col(c);
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum() / static_cast<double>(n - 1);
        const double sd = std::sqrt(var);
        if (!(sd > 0.0) || !std::isfinite(sd)) {
            throw DomainError("covariate '" + design.columns[static_cast<std::size_t>(c)] +
                              "' has zero variance and cannot be standardized");
        }
        stats.means.push_back(mean);
        stats.sds.push_back(sd);
    }
    return stats;
}

StandardizedData standardize_columns(const Design& design, const Eigen::VectorXd& y) {
    if (design.x.rows() != y.size()) throw DomainError("design and responses differ in length");
    StandardizedData out;
    out.stats = column_stats(design);
    out.design = out.stats.apply(design);
    out.y = y;
    return out;
}

void BoostConfig::validate() const {
    if (!(step_length > 0.0 && step_length <= 1.0)) throw DomainError("step length must lie in (0, 1]");
    if (m_stop < 1) throw DomainError("m_stop must be at least 1");
    if (cv_folds < 2) throw DomainError("cv_folds must be at least 2");
}

Coefficients BoostState::coefficients_at(std::size_t m) const {
    Coefficients c = Coefficients::zeros(spec);
    const std::size_t upto = std::min(m, steps.size());
    for (std::size_t i = 0; i < upto; ++i) c.terms[steps[i].predictor][steps[i].term] += steps[i].delta;
    return c;
}

namespace {

struct Candidate {
    std::size_t term;
    std::ptrdiff_t column;  // -1 for the intercept
};

double column_value(const Eigen::MatrixXd& x, Eigen::Index row, std::ptrdiff_t column) {
    return column < 0 ? 1.0 : x(row, column);
}

// Total loss with predictor j shifted by delta * x[:, column].
double shifted_loss(const BoundModel& model, const RowMatrix& eta, const Eigen::MatrixXd& x,
                    const Eigen::VectorXd& y, std::size_t j, std::ptrdiff_t column, double delta,
                    MixtureParams& params, std::vector<double>& buf) {
    const Eigen::Index n = eta.rows();
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::copy(eta.row(i).data(), eta.row(i).data() + eta.cols(), buf.begin());
        buf[j] += delta * column_value(x, i, column);
        loss += model.row_loss(buf.data(), y[i], params, i);
    }
    return loss;
}

// LogS of every row kept in pieces (log normalizer of the weights, per
// component log densities), so that shifting one linear predictor only
// recomputes the terms that predictor touches.
class LogsRows {
public:
    LogsRows(std::size_t K, const RowMatrix& eta, const Eigen::VectorXd& y)
        : K_(K), eta_(eta), y_(y), n_(eta.rows()) {
        const auto cells = static_cast<std::size_t>(n_) * K_;
        log_norm_.assign(static_cast<std::size_t>(n_), 0.0);
        log_sigma_.assign(cells, 0.0);
        inv_sigma_.assign(cells, 1.0);
        log_dens_.assign(cells, 0.0);
        for (std::size_t j = 0; j < 3 * K_; ++j) refresh(j);
    }

    /// Recomputes the cached terms after column j of eta changed.
    void refresh(std::size_t j) {
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double* e = eta_.row(i).data();
            const auto row = static_cast<std::size_t>(i) * K_;
            if (j < K_) {
                log_norm_[static_cast<std::size_t>(i)] = log_sum_exp(e, K_);
                continue;
            }
            const std::size_t k = (j - K_) / 2;
            if ((j - K_) % 2 == 1) {
                log_sigma_[row + k] = std::clamp(e[K_ + 2 * k + 1], -kScaleEtaClamp, kScaleEtaClamp);
                inv_sigma_[row + k] = std::exp(-log_sigma_[row + k]);
            }
            const double z = (y_[i] - e[K_ + 2 * k]) * inv_sigma_[row + k];
            log_dens_[row + k] = -0.5 * z * z - log_sigma_[row + k];
        }
    }

    /// Total LogS with predictor j shifted by delta * x[:, column]; +inf when
    /// some row has zero density.
    double shifted_total(std::size_t j, const Eigen::MatrixXd& x, std::ptrdiff_t column, double delta) const {
        double terms[kMaxK];
        double etas[kMaxK];
        double total = 0.0;
        const bool weight = j < K_;
        const std::size_t k = weight ? j : (j - K_) / 2;
        const bool scale = !weight && (j - K_) % 2 == 1;
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double* e = eta_.row(i).data();
            const auto row = static_cast<std::size_t>(i) * K_;
            const double shift = delta * column_value(x, i, column);
            double log_norm = log_norm_[static_cast<std::size_t>(i)];
            if (weight) {
                std::copy(e, e + K_, etas);
                etas[k] += shift;
                log_norm = log_sum_exp(etas, K_);
            }
            for (std::size_t c = 0; c < K_; ++c) {
                terms[c] = (weight ? etas[c] : e[c]) - log_norm + log_dens_[row + c];
            }
            if (!weight) {
                double ls = log_sigma_[row + k];
                double inv = inv_sigma_[row + k];
                double mu = e[K_ + 2 * k];
                if (scale) {
                    ls = std::clamp(e[K_ + 2 * k + 1] + shift, -kScaleEtaClamp, kScaleEtaClamp);
                    inv = std::exp(-ls);
                } else {
                    mu += shift;
                }
                const double z = (y_[i] - mu) * inv;
                terms[k] = e[k] - log_norm - 0.5 * z * z - ls;
            }
            total -= log_sum_exp(terms, K_);
        }
        total += static_cast<double>(n_) * kHalfLog2Pi;
        return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
    }

    /// LogS of row i and its derivatives with respect to the row's linear
    /// predictors (same formulas as logs_gradients_into).
    double row_gradient(Eigen::Index i, double* grad) const {
        double terms[kMaxK];
        const double* e = eta_.row(i).data();
        const auto row = static_cast<std::size_t>(i) * K_;
        const double log_norm = log_norm_[static_cast<std::size_t>(i)];
        for (std::size_t c = 0; c < K_; ++c) terms[c] = e[c] - log_norm + log_dens_[row + c];
        const double log_total = log_sum_exp(terms, K_);
        if (!std::isfinite(log_total)) {
            throw ScoreOverflow("mixture density is zero at row " + std::to_string(i), i);
        }
        for (std::size_t c = 0; c < K_; ++c) {
            const double pi = std::exp(terms[c] - log_total);
            const double inv = inv_sigma_[row + c];
            const double z = (y_[i] - e[K_ + 2 * c]) * inv;
            grad[c] = K_ == 1 ? 0.0 : std::exp(e[c] - log_norm) - pi;
            grad[K_ + 2 * c] = -pi * z * inv;
            grad[K_ + 2 * c + 1] = std::abs(e[K_ + 2 * c + 1]) > kScaleEtaClamp ? 0.0 : pi * (1.0 - z * z);
        }
        return kHalfLog2Pi - log_total;
    }

    [[nodiscard]] double total() const {
        double terms[kMaxK];
        double total = 0.0;
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double* e = eta_.row(i).data();
            const auto row = static_cast<std::size_t>(i) * K_;
            for (std::size_t c = 0; c < K_; ++c) {
                terms[c] = e[c] - log_norm_[static_cast<std::size_t>(i)] + log_dens_[row + c];
            }
            total -= log_sum_exp(terms, K_);
        }
        total += static_cast<double>(n_) * kHalfLog2Pi;
        return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
    }

    static constexpr std::size_t kMaxK = 16;

private:
    static constexpr double kHalfLog2Pi = 0.91893853320467274178;

    static double log_sum_exp(const double* v, std::size_t k) {
        double top = v[0];
        for (std::size_t c = 1; c < k; ++c) top = std::max(top, v[c]);
        if (!std::isfinite(top)) return top;
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(v[c] - top);
        return top + std::log(sum);
    }

    std::size_t K_;
    const RowMatrix& eta_;
    const Eigen::VectorXd& y_;
    Eigen::Index n_;
    std::vector<double> log_norm_, log_sigma_, inv_sigma_, log_dens_;
};

void apply_update(RowMatrix& eta, const Eigen::MatrixXd& x, std::size_t j, std::ptrdiff_t column, double delta) {
    const auto jj = static_cast<Eigen::Index>(j);
    for (Eigen::Index i = 0; i < eta.rows(); ++i) eta(i, jj) += delta * column_value(x, i, column);
}

double loss_at(const BoundModel& model, const RowMatrix& eta, const Eigen::VectorXd& y, MixtureParams& params) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < eta.rows(); ++i) loss += model.row_loss(eta.row(i).data(), y[i], params, i);
    return loss;
}

}  // namespace

BoostState boost_fit(const ModelSpec& spec_in, const Design& design, const Eigen::VectorXd& y,
                     const BoostConfig& config, ValidationSet validation) {
    config.validate();
    if (design.x.rows() != y.size()) throw DomainError("design and responses differ in length");
    if (!y.allFinite()) throw DomainError("boost_fit: non-finite response");
    BoostState state;
    state.spec = spec_in;
    state.spec.loss = config.loss;
    state.spec.estimator = Estimator::Boosting;
    state.config = config;
    const BoundModel model(state.spec, design.columns);
    const ModelSpec& spec = state.spec;

    const Eigen::Index n = design.x.rows();
    const std::size_t J = spec.predictors.size();
    std::vector<std::vector<Candidate>> candidates(J);
    for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t t = 0; t < spec.predictors[j].term_count(); ++t) {
            const std::ptrdiff_t col = model.term_column(j, t);
            if (col < 0 && !config.boost_intercepts) continue;
            candidates[j].push_back({t, col});
        }
    }

    const bool track_validation = validation.x != nullptr && validation.y != nullptr;
    if (track_validation) {
        if (validation.x->rows() != validation.y->size() || validation.x->cols() != design.x.cols()) {
            throw DomainError("validation data does not match the training design");
        }
    }

    RowMatrix eta = RowMatrix::Zero(n, static_cast<Eigen::Index>(J));
    RowMatrix eta_val;
    if (track_validation) eta_val = RowMatrix::Zero(validation.x->rows(), static_cast<Eigen::Index>(J));
    // Column-major so that the per-covariate regressions read contiguous memory.
    Eigen::MatrixXd d_eta(n, static_cast<Eigen::Index>(J));
    std::vector<double> d_row(J);
    MixtureParams params;
    PredictorGradients scratch;
    std::vector<double> buf(J);

    std::optional<LogsRows> fast, fast_val;
    if (spec.loss == Loss::LogS && spec.K <= LogsRows::kMaxK) {
        fast.emplace(spec.K, eta, y);
        if (track_validation) fast_val.emplace(spec.K, eta_val, *validation.y);
    }

    state.train_loss.reserve(config.m_stop + 1);
    state.steps.reserve(config.m_stop);
    if (track_validation) {
        state.validation_loss.reserve(config.m_stop + 1);
        state.validation_loss.push_back(loss_at(model, eta_val, *validation.y, params));
    }

    for (std::size_t m = 0; m < config.m_stop; ++m) {
        // Step 1: gradients of the loss at the current linear predictors.
        double loss = 0.0;
        try {
            for (Eigen::Index i = 0; i < n; ++i) {
                loss += fast ? fast->row_gradient(i, d_row.data())
                             : model.row_loss_gradient(eta.row(i).data(), y[i], params, scratch, d_row.data(), i);
                for (std::size_t j = 0; j < J; ++j) d_eta(i, static_cast<Eigen::Index>(j)) = d_row[j];
            }
        } catch (const ScoreOverflow& e) {
            throw ConvergenceError("boosting iteration " + std::to_string(m) + ": " + e.what(), m,
                                   std::numeric_limits<double>::quiet_NaN());
        }
        if (!std::isfinite(loss)) {
            throw ConvergenceError("boosting iteration " + std::to_string(m) + ": non-finite training loss", m,
                                   std::numeric_limits<double>::quiet_NaN());
        }
        if (m == 0) state.train_loss.push_back(loss);

        // Steps 2-5: best covariate per predictor, then best predictor.
        std::size_t best_j = J;
        std::size_t best_c = 0;
        double best_rho = 0.0;
        double best_loss = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < J; ++j) {
            if (candidates[j].empty()) continue;
            const auto g = d_eta.col(static_cast<Eigen::Index>(j));
            std::size_t c_star = 0;
            double rho_star = 0.0;
            double abs_star = -1.0;
            for (std::size_t c = 0; c < candidates[j].size(); ++c) {
                const std::ptrdiff_t col = candidates[j][c].column;
                const double cov = col < 0 ? g.sum() : design.x.col(col).dot(g);
                const double rho = -cov / static_cast<double>(n);
                if (std::abs(rho) > abs_star) {
                    abs_star = std::abs(rho);
                    rho_star = rho;
                    c_star = c;
                }
            }
            double potential;
            try {
                potential = fast ? fast->shifted_total(j, design.x, candidates[j][c_star].column,
                                                       config.step_length * rho_star)
                                 : shifted_loss(model, eta, design.x, y, j, candidates[j][c_star].column,
                                         config.step_length * rho_star, params, buf);
            } catch (const ScoreOverflow&) {
                potential = std::numeric_limits<double>::infinity();
            }
            if (potential < best_loss) {
                best_loss = potential;
                best_j = j;
                best_c = c_star;
                best_rho = rho_star;
            }
        }
        if (best_j == J || !(best_loss < loss)) {
            state.halted_at = m;
            break;
        }

        // Step 6: update one coefficient.
        const Candidate& cand = candidates[best_j][best_c];
        const double delta = config.step_length * best_rho;
        apply_update(eta, design.x, best_j, cand.column, delta);
        if (fast) fast->refresh(best_j);
        state.steps.push_back({best_j, cand.term, best_rho, delta});
        state.train_loss.push_back(best_loss);
        if (track_validation) {
            apply_update(eta_val, *validation.x, best_j, cand.column, delta);
            if (fast_val) fast_val->refresh(best_j);
            double vloss;
            try {
                vloss = fast_val ? fast_val->total() : loss_at(model, eta_val, *validation.y, params);
            } catch (const ScoreOverflow&) {
                vloss = std::numeric_limits<double>::infinity();
            }
            state.validation_loss.push_back(vloss);
        }
    }
    if (track_validation) {
        while (state.validation_loss.size() < config.m_stop + 1) {
            state.validation_loss.push_back(state.validation_loss.back());
        }
    }
    return state;
}

std::vector<std::size_t> assign_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<std::size_t> fold(n);
    for (std::size_t p = 0; p < n; ++p) fold[order[p]] = p % folds;
    return fold;
}

CvResult cross_validate_mstop(const ModelSpec& spec, const Design& design, const Eigen::VectorXd& y,
                              const BoostConfig& config) {
    config.validate();
    const std::size_t n = design.rows();
    if (n < config.cv_folds * 10) {
        throw DomainError("cross-validation needs at least " + std::to_string(config.cv_folds * 10) +
                          " rows for " + std::to_string(config.cv_folds) + " folds, got " + std::to_string(n));
    }
    const std::vector<std::size_t> fold = assign_folds(n, config.cv_folds, config.seed);
    CvResult result;
    result.validation_loss.assign(config.m_stop + 1, 0.0);
    for (std::size_t f = 0; f < config.cv_folds; ++f) {
        std::vector<std::size_t> train_rows, val_rows;
        for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? val_rows : train_rows).push_back(i);
        const Design train = design.select_rows(train_rows);
        const Design val = design.select_rows(val_rows);
        Eigen::VectorXd y_train(static_cast<Eigen::Index>(train_rows.size()));
        Eigen::VectorXd y_val(static_cast<Eigen::Index>(val_rows.size()));
        for (std::size_t i = 0; i < train_rows.size(); ++i) y_train[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(train_rows[i])];
        for (std::size_t i = 0; i < val_rows.size(); ++i) y_val[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(val_rows[i])];
        const BoostState state = boost_fit(spec, train, y_train, config, {&val.x, &y_val});
        for (std::size_t m = 0; m <= config.m_stop; ++m) result.validation_loss[m] += state.validation_loss[m];
    }
    result.m_opt = 1;
    for (std::size_t m = 2; m <= config.m_stop; ++m) {
        if (result.validation_loss[m] < result.validation_loss[result.m_opt]) result.m_opt = m;
    }
    return result;
}

void write_coefficient_paths(std::ostream& out, const BoostState& state, std::size_t m) {
    const std::size_t upto = std::min(m, state.steps.size());
    std::set<std::pair<std::size_t, std::size_t>> active;
    for (std::size_t i = 0; i < upto; ++i) active.insert({state.steps[i].predictor, state.steps[i].term});
    out << "iteration,predictor_id,covariate_id,coefficient\n";
    Coefficients c = Coefficients::zeros(state.spec);
    for (std::size_t it = 0; it <= upto; ++it) {
        if (it > 0) c.terms[state.steps[it - 1].predictor][state.steps[it - 1].term] += state.steps[it - 1].delta;
        for (const auto& [j, t] : active) {
            const auto& p = state.spec.predictors[j];
            out << it << "," << p.label() << "," << p.term_name(t) << "," << format_double(c.terms[j][t]) << "\n";
        }
    }
}

}  // namespace mixboost
