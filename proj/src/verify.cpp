#include "mixboost/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mixboost/error.hpp"
#include "mixboost/estimate.hpp"
#include "mixboost/rng.hpp"

namespace mixboost {

namespace {

void require_aligned(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw DomainError(std::string(what) + ": " + std::to_string(a) + " predictions but " + std::to_string(b) +
                          " observations");
    }
}

double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> pit_values(std::span<const MixtureParams> predictions, std::span<const double> observations) {
    require_aligned(predictions.size(), observations.size(), "pit_values");
    std::vector<double> out(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) out[i] = mixture_cdf(predictions[i], observations[i]);
    return out;
}

std::size_t HistogramDiag::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

double HistogramDiag::reliability_index() const {
    return mixboost::reliability_index(counts);
}

double reliability_index(std::span<const std::size_t> counts) {
    if (counts.empty()) throw DomainError("reliability index of a histogram without bins");
    const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
    if (total == 0.0) throw DomainError("reliability index of an empty histogram");
    const double expected = 1.0 / static_cast<double>(counts.size());
    double ri = 0.0;
    for (std::size_t c : counts) ri += std::abs(static_cast<double>(c) / total - expected);
    return ri;
}

HistogramDiag pit_histogram(std::span<const double> pit, std::size_t bins) {
    if (bins == 0) throw DomainError("histogram needs at least one bin");
    HistogramDiag h;
    h.counts.assign(bins, 0);
    for (double u : pit) {
        if (!(u >= 0.0 && u <= 1.0)) throw DomainError("PIT value outside [0, 1]");
        const auto b = std::min(bins - 1, static_cast<std::size_t>(u * static_cast<double>(bins)));
        ++h.counts[b];
    }
    return h;
}

HistogramDiag rank_histogram(const Eigen::MatrixXd& ensemble, std::span<const double> observations,
                             std::uint64_t seed) {
    require_aligned(static_cast<std::size_t>(ensemble.rows()), observations.size(), "rank_histogram");
    const auto m = static_cast<std::size_t>(ensemble.cols());
    if (m < 1) throw DomainError("rank histogram needs at least one member");
    HistogramDiag h;
    h.counts.assign(m + 1, 0);
    Rng rng(seed);
    for (Eigen::Index i = 0; i < ensemble.rows(); ++i) {
        const double y = observations[static_cast<std::size_t>(i)];
        std::size_t below = 0, equal = 0;
        for (Eigen::Index j = 0; j < ensemble.cols(); ++j) {
            const double x = ensemble(i, j);
            if (x < y) ++below;
            else if (x == y) ++equal;
        }
        const std::size_t rank = below + (equal > 0 ? rng.index(equal + 1) : 0);
        ++h.counts[rank];
    }
    return h;
}

CoverageWidth interval_coverage_width(std::span<const MixtureParams> predictions,
                                      std::span<const double> observations, double level) {
    require_aligned(predictions.size(), observations.size(), "interval_coverage_width");
    if (!(level > 0.0 && level < 1.0)) throw DomainError("interval level must lie in (0, 1)");
    if (predictions.empty()) throw DomainError("interval_coverage_width: no cases");
    const double alpha = 1.0 - level;
    std::size_t inside = 0;
    double width = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double lo = mixture_quantile(predictions[i], alpha / 2.0);
        const double hi = mixture_quantile(predictions[i], 1.0 - alpha / 2.0);
        if (observations[i] >= lo && observations[i] <= hi) ++inside;
        width += hi - lo;
    }
    const double n = static_cast<double>(predictions.size());
    return {100.0 * static_cast<double>(inside) / n, width / n};
}

PointScores point_scores(std::span<const MixtureParams> predictions, std::span<const double> observations) {
    require_aligned(predictions.size(), observations.size(), "point_scores");
    if (predictions.empty()) throw DomainError("point_scores: no cases");
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        abs_sum += std::abs(mixture_quantile(predictions[i], 0.5) - observations[i]);
        const double e = predictions[i].mean() - observations[i];
        sq_sum += e * e;
    }
    const double n = static_cast<double>(predictions.size());
    return {abs_sum / n, std::sqrt(sq_sum / n)};
}

double skill_score(double mean_score, double mean_score_ref) {
    if (mean_score_ref == 0.0) throw DomainError("skill score with a zero reference score");
    return 1.0 - mean_score / mean_score_ref;
}

double crps_ensemble(std::span<const double> members, double y) {
    if (members.empty()) throw DomainError("crps_ensemble: no members");
    std::vector<double> x(members.begin(), members.end());
    std::sort(x.begin(), x.end());
    const double m = static_cast<double>(x.size());
    double abs_obs = 0.0, spread = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        abs_obs += std::abs(x[i] - y);
        spread += (2.0 * static_cast<double>(i) - m + 1.0) * x[i];
    }
    // sum_ij |x_i - x_j| = 2 * sum_i (2i - m + 1) x_(i)
    return abs_obs / m - spread / (m * m);
}

DmResult dm_test(std::span<const double> loss_a, std::span<const double> loss_b) {
    if (loss_a.size() != loss_b.size()) throw DomainError("dm_test: series differ in length");
    const std::size_t n = loss_a.size();
    if (n < 30) throw DomainError("dm_test: need at least 30 paired cases, got " + std::to_string(n));
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = loss_a[i] - loss_b[i];
    const double mean = mean_of(d);
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    DmResult r;
    if (!(var > 0.0)) {
        r.indistinguishable = true;
        return r;
    }
    r.statistic = std::sqrt(static_cast<double>(n)) * mean / std::sqrt(var);
    r.p_two_sided = std::min(1.0, 2.0 * std_normal_cdf(-std::abs(r.statistic)));
    r.p_greater = std_normal_cdf(-r.statistic);
    return r;
}

std::vector<bool> benjamini_hochberg(std::span<const double> p_values, double alpha) {
    const std::size_t n = p_values.size();
    std::vector<bool> rejected(n, false);
    if (n == 0) return rejected;
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) throw DomainError("p-value outside [0, 1]");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
    std::size_t cutoff = 0;  // number of rejections
    for (std::size_t i = 0; i < n; ++i) {
        if (p_values[order[i]] <= static_cast<double>(i + 1) * alpha / static_cast<double>(n)) cutoff = i + 1;
    }
    for (std::size_t i = 0; i < cutoff; ++i) rejected[order[i]] = true;
    return rejected;
}

double bootstrap_se(std::span<const double> series, const BootstrapOptions& opts) {
    const std::size_t n = series.size();
    if (!(opts.block_length_mean >= 1.0)) throw DomainError("bootstrap block length must be at least 1");
    if (static_cast<double>(n) < 2.0 * opts.block_length_mean) {
        throw DomainError("bootstrap_se: series of length " + std::to_string(n) +
                          " is shorter than twice the mean block length");
    }
    if (opts.n_boot < 2) throw DomainError("bootstrap_se: need at least 2 replicates");
    Rng rng(opts.seed);
    const double restart = 1.0 / opts.block_length_mean;
    std::vector<double> means(opts.n_boot);
    for (std::size_t b = 0; b < opts.n_boot; ++b) {
        std::size_t pos = rng.index(n);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i > 0) pos = rng.bernoulli(restart) ? rng.index(n) : (pos + 1) % n;
            sum += series[pos];
        }
        means[b] = sum / static_cast<double>(n);
    }
    const double grand = mean_of(means);
    double var = 0.0;
    for (double m : means) var += (m - grand) * (m - grand);
    return std::sqrt(var / static_cast<double>(opts.n_boot - 1));
}

namespace {

std::vector<MixtureParams> predict_all(const FinalizedModel& model, const RawRows& rows) {
    std::vector<RowPrediction> pred = predict(model, rows);
    std::vector<MixtureParams> out;
    out.reserve(pred.size());
    for (auto& p : pred) {
        if (!p.params) throw DataError("permutation importance: " + p.error);
        out.push_back(std::move(*p.params));
    }
    return out;
}

}  // namespace

Importance permutation_importance(const FinalizedModel& model, const RawRows& rows,
                                  std::span<const double> observations, const std::string& covariate_id,
                                  std::uint64_t seed, std::size_t repeats, const BootstrapOptions& bootstrap) {
    const auto it = std::find(rows.columns.begin(), rows.columns.end(), covariate_id);
    if (it == rows.columns.end()) throw DomainError("permutation importance: unknown covariate '" + covariate_id + "'");
    if (repeats < 1) throw DomainError("permutation importance: repeats must be at least 1");
    const Eigen::Index col = std::distance(rows.columns.begin(), it);
    const std::size_t n = observations.size();
    require_aligned(static_cast<std::size_t>(rows.x.rows()), n, "permutation_importance");

    const std::vector<MixtureParams> base = predict_all(model, rows);
    std::vector<double> base_crps(n);
    for (std::size_t i = 0; i < n; ++i) base_crps[i] = crps_mixture(base[i], observations[i]);

    std::vector<double> diff(n, 0.0);
    Rng rng(seed);
    RawRows permuted = rows;
    for (std::size_t r = 0; r < repeats; ++r) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t i = 0; i < n; ++i) {
            permuted.x(static_cast<Eigen::Index>(i), col) = rows.x(static_cast<Eigen::Index>(order[i]), col);
        }
        const std::vector<MixtureParams> pred = predict_all(model, permuted);
        for (std::size_t i = 0; i < n; ++i) diff[i] += crps_mixture(pred[i], observations[i]) - base_crps[i];
    }
    for (double& d : diff) d /= static_cast<double>(repeats);
    Importance out;
    out.covariate = covariate_id;
    out.importance = mean_of(diff);
    out.se = static_cast<double>(n) >= 2.0 * bootstrap.block_length_mean ? bootstrap_se(diff, bootstrap)
                                                                          : std::nan("");
    return out;
}

CaseScores case_scores(std::span<const MixtureParams> predictions, std::span<const double> observations) {
    require_aligned(predictions.size(), observations.size(), "case_scores");
    CaseScores s;
    s.crps.resize(predictions.size());
    s.logs.resize(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        s.crps[i] = crps_mixture(predictions[i], observations[i]);
        s.logs[i] = logs_mixture(predictions[i], observations[i]);
    }
    return s;
}

ScoreReport score_report(const std::string& model, const std::string& station,
                         std::span<const MixtureParams> predictions, std::span<const double> observations,
                         double level, std::size_t pit_bins, const BootstrapOptions& bootstrap) {
    require_aligned(predictions.size(), observations.size(), "score_report");
    const std::size_t n = predictions.size();
    if (n == 0) throw DomainError("score_report: no cases");
    ScoreReport r;
    r.model = model;
    r.station = station;
    r.cases = n;
    const CaseScores cs = case_scores(predictions, observations);
    std::vector<double> abs_err(n), sq_err(n), covered(n), width(n);
    const double alpha = 1.0 - level;
    for (std::size_t i = 0; i < n; ++i) {
        abs_err[i] = std::abs(mixture_quantile(predictions[i], 0.5) - observations[i]);
        const double e = predictions[i].mean() - observations[i];
        sq_err[i] = e * e;
        const double lo = mixture_quantile(predictions[i], alpha / 2.0);
        const double hi = mixture_quantile(predictions[i], 1.0 - alpha / 2.0);
        covered[i] = (observations[i] >= lo && observations[i] <= hi) ? 100.0 : 0.0;
        width[i] = hi - lo;
    }
    r.crps = mean_of(cs.crps);
    r.logs = mean_of(cs.logs);
    r.mae = mean_of(abs_err);
    r.rmse = std::sqrt(mean_of(sq_err));
    r.coverage = mean_of(covered);
    r.width = mean_of(width);
    r.pit_ri = pit_histogram(pit_values(predictions, observations), pit_bins).reliability_index();
    if (static_cast<double>(n) >= 2.0 * bootstrap.block_length_mean) {
        r.crps_se = bootstrap_se(cs.crps, bootstrap);
        r.logs_se = bootstrap_se(cs.logs, bootstrap);
        r.mae_se = bootstrap_se(abs_err, bootstrap);
        // Delta method for the square root of the mean squared error.
        r.rmse_se = r.rmse > 0.0 ? bootstrap_se(sq_err, bootstrap) / (2.0 * r.rmse) : 0.0;
        r.coverage_se = bootstrap_se(covered, bootstrap);
        r.width_se = bootstrap_se(width, bootstrap);
    } else {
        r.crps_se = r.logs_se = r.mae_se = r.rmse_se = r.coverage_se = r.width_se = std::nan("");
    }
    return r;
}

void write_scores_csv(std::ostream& out, std::span<const ScoreReport> reports) {
    out << "model,station,metric,value,se\n";
    for (const auto& r : reports) {
        const auto row = [&](const char* metric, double value, double se) {
            out << r.model << "," << r.station << "," << metric << "," << format_double(value) << ","
                << (std::isnan(se) ? std::string("NA") : format_double(se)) << "\n";
        };
        row("crps", r.crps, r.crps_se);
        row("logs", r.logs, r.logs_se);
        row("mae", r.mae, r.mae_se);
        row("rmse", r.rmse, r.rmse_se);
        row("coverage", r.coverage, r.coverage_se);
        row("width", r.width, r.width_se);
        row("pit_ri", r.pit_ri, std::nan(""));
        row("cases", static_cast<double>(r.cases), std::nan(""));
    }
}

void write_histogram_csv(std::ostream& out, const HistogramDiag& hist) {
    out << "bin,count\n";
    for (std::size_t b = 0; b < hist.counts.size(); ++b) out << (b + 1) << "," << hist.counts[b] << "\n";
}

void write_importance_csv(std::ostream& out, std::span<const Importance> rows) {
    out << "covariate,importance,se\n";
    for (const auto& r : rows) {
        out << r.covariate << "," << format_double(r.importance) << ","
            << (std::isnan(r.se) ? std::string("NA") : format_double(r.se)) << "\n";
    }
}

void write_significance_csv(std::ostream& out, std::span<const Significance> rows) {
    out << "station,p_value,rejected\n";
    for (const auto& r : rows) {
        out << r.station << "," << format_double(r.p_value) << "," << (r.rejected ? "true" : "false") << "\n";
    }
}

}  // namespace mixboost
