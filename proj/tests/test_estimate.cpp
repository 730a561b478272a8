#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "mixboost/error.hpp"
#include "mixboost/estimate.hpp"
#include "mixboost/models.hpp"
#include "oracles.hpp"

using namespace mixboost;

namespace {

const CovariateCatalog kT2m{{"t2m"}};

struct Sample {
    Design design;
    Eigen::VectorXd y;
};

Design t2m_design(std::mt19937_64& gen, Eigen::Index n) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Design d;
    d.columns = {"t2m_MEAN", "t2m_CTRL", "t2m_SD"};
    d.x.resize(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mean = n01(gen);
        d.x(i, 0) = mean;
        d.x(i, 1) = 0.6 * mean + 0.8 * n01(gen);
        d.x(i, 2) = n01(gen);
    }
    return d;
}

// y ~ N(0.3 + 0.8 MEAN + 0.1 CTRL, exp(-0.4 + 0.3 SD)^2)
Sample samos_sample(std::uint64_t seed, Eigen::Index n) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    Sample s{t2m_design(gen, n), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& x = s.design.x;
        s.y[i] = 0.3 + 0.8 * x(i, 0) + 0.1 * x(i, 1) + std::exp(-0.4 + 0.3 * x(i, 2)) * n01(gen);
    }
    return s;
}

// Intercept-only two-component model without groups.
ModelSpec two_component_intercepts() {
    ModelSpec spec;
    spec.name = "two";
    spec.K = 2;
    spec.predictors = {{Target::Weight, 0, {}, true},   {Target::Weight, 1, {}, true},
                       {Target::Location, 0, {}, true}, {Target::Scale, 0, {}, true},
                       {Target::Location, 1, {}, true}, {Target::Scale, 1, {}, true}};
    return spec;
}

}  // namespace

TEST_CASE("zero coefficients give the fixed standard mixture") {
    const Sample s = samos_sample(1, 50);
    const ModelSpec spec = make_mixsamos(kT2m);
    const auto lg = total_loss_and_gradient(spec, Coefficients::zeros(spec), s.design, s.y);
    double ref = 0.0;
    const MixtureParams fixed({0.5, 0.5}, {0, 0}, {1, 1});
    for (Eigen::Index i = 0; i < s.y.size(); ++i) ref += logs_mixture(fixed, s.y[i]);
    CHECK(lg.loss == doctest::Approx(ref).epsilon(1e-13));
}

TEST_CASE("total gradient matches finite differences over coefficients") {
    const Sample s = samos_sample(2, 60);
    for (Loss loss : {Loss::LogS, Loss::CRPS}) {
        const ModelSpec spec = make_mixsamos(kT2m, loss);
        std::mt19937_64 gen(3);
        std::normal_distribution<double> small(0.0, 0.3);
        Eigen::VectorXd a = Coefficients::zeros(spec).flatten();
        for (Eigen::Index j = 0; j < a.size(); ++j) a[j] = small(gen);
        const auto lg = total_loss_and_gradient(spec, Coefficients::unflatten(spec, a), s.design, s.y);
        for (Eigen::Index j = 0; j < a.size(); ++j) {
            Eigen::VectorXd up = a, down = a;
            up[j] += 1e-6;
            down[j] -= 1e-6;
            const double fd = (total_loss_and_gradient(spec, Coefficients::unflatten(spec, up), s.design, s.y).loss -
                               total_loss_and_gradient(spec, Coefficients::unflatten(spec, down), s.design, s.y).loss) /
                              2e-6;
            CHECK(oracle::close(lg.gradient[j], fd, 1e-6, 1e-6));
        }
    }
}

TEST_CASE("duplicating rows doubles loss and gradient") {
    const Sample s = samos_sample(4, 40);
    Design twice = s.design;
    twice.x.resize(80, 3);
    twice.x << s.design.x, s.design.x;
    Eigen::VectorXd y2(80);
    y2 << s.y, s.y;
    const ModelSpec spec = make_mixsamos(kT2m, Loss::CRPS);
    Coefficients c = Coefficients::zeros(spec);
    c.terms[2] = {0.1, 0.5};
    c.terms[3] = {-0.2, 0.1};
    const auto one = total_loss_and_gradient(spec, c, s.design, s.y);
    const auto two = total_loss_and_gradient(spec, c, twice, y2);
    CHECK(two.loss == doctest::Approx(2.0 * one.loss).epsilon(1e-13));
    CHECK((two.gradient - 2.0 * one.gradient).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lost density names the row") {
    const Sample s = samos_sample(5, 30);
    Eigen::VectorXd y = s.y;
    y[17] = 1e200;
    const ModelSpec spec = make_samos(kT2m);
    try {
        total_loss_and_gradient(spec, Coefficients::zeros(spec), s.design, y);
        FAIL("expected a score overflow");
    } catch (const ScoreOverflow& e) {
        CHECK(e.row() == 17);
    }
}

TEST_CASE("bfgs minimizes a quadratic and the Rosenbrock function") {
    const Objective quad = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g = 2.0 * (x - Eigen::Vector2d(1.0, -2.0));
        return (x - Eigen::Vector2d(1.0, -2.0)).squaredNorm();
    };
    const auto q = minimize_bfgs(quad, Eigen::Vector2d(5, 5));
    CHECK((q.x - Eigen::Vector2d(1, -2)).norm() < 1e-6);
    const Objective rosen = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g.resize(2);
        g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
        g[1] = 200.0 * (x[1] - x[0] * x[0]);
        return (1.0 - x[0]) * (1.0 - x[0]) + 100.0 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]);
    };
    BfgsOptions opts;
    opts.relative_tolerance = 1e-14;
    const auto r = minimize_bfgs(rosen, Eigen::Vector2d(-1.2, 1.0), opts);
    CHECK((r.x - Eigen::Vector2d(1, 1)).norm() < 1e-4);
    BfgsOptions two;
    two.max_iterations = 2;
    CHECK(minimize_bfgs(rosen, Eigen::Vector2d(-1.2, 1.0), two).stop == StopReason::MaxIterations);
}

TEST_CASE("samos recovery") {
    const Sample s = samos_sample(6, 5000);
    const ModelSpec spec = make_samos(kT2m);
    CHECK(spec.coefficient_count() == 5);
    const auto fit = fit_bfgs(spec, s.design, s.y);
    CHECK(fit.stop == StopReason::RelativeTolerance);
    CHECK(fit.loss <= fit.initial_loss);
    const auto& t = fit.coefficients.terms;
    CHECK(std::abs(t[1][0] - 0.3) < 0.05);
    CHECK(std::abs(t[1][1] - 0.8) < 0.05);
    CHECK(std::abs(t[1][2] - 0.1) < 0.05);
    CHECK(std::abs(t[2][0] + 0.4) < 0.05);
    CHECK(std::abs(t[2][1] - 0.3) < 0.05);
    const auto again = fit_bfgs(spec, s.design, s.y);
    CHECK(again.coefficients == fit.coefficients);
}

TEST_CASE("near deterministic regression") {
    std::mt19937_64 gen(8);
    std::normal_distribution<double> n01(0.0, 1.0);
    Sample s{t2m_design(gen, 500), Eigen::VectorXd(500)};
    for (Eigen::Index i = 0; i < 500; ++i) s.y[i] = s.design.x(i, 0) + 0.01 * n01(gen);
    const auto fit = fit_bfgs(make_samos(kT2m), s.design, s.y);
    const auto& loc = fit.coefficients.terms[1];
    CHECK(std::abs(loc[1] - 1.0) < 1e-2);
    CHECK(std::abs(loc[0]) < 1e-2);
    CHECK(std::abs(loc[2]) < 1e-2);
    CHECK(std::exp(fit.coefficients.terms[2][0]) == doctest::Approx(0.01).epsilon(0.1));
}

TEST_CASE("single component degenerates to the normal likelihood") {
    const Sample s = samos_sample(9, 300);
    ModelSpec spec;
    spec.name = "flat";
    spec.K = 1;
    spec.predictors = {{Target::Weight, 0, {}, false}, {Target::Location, 0, {}, true}, {Target::Scale, 0, {}, true}};
    const auto fit = fit_bfgs(spec, s.design, s.y);
    const double n = static_cast<double>(s.y.size());
    const double mean = s.y.mean();
    const double var = (s.y.array() - mean).square().sum() / n;
    const double ml = 0.5 * n * std::log(2.0 * M_PI * var) + 0.5 * n;
    CHECK(std::abs(fit.loss - ml) < 1e-8 * std::abs(ml));
}

TEST_CASE("label swapped fits give the same predictive distribution") {
    std::mt19937_64 gen(10);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::bernoulli_distribution coin(0.3);
    const Eigen::Index n = 3000;
    Sample s{t2m_design(gen, n), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) s.y[i] = coin(gen) ? -2.0 + 0.5 * n01(gen) : 1.5 + 0.8 * n01(gen);
    const ModelSpec spec = two_component_intercepts();
    Coefficients a = Coefficients::zeros(spec), b = Coefficients::zeros(spec);
    a.terms[2] = {-1.0};
    a.terms[4] = {1.0};
    b.terms[2] = {1.0};
    b.terms[4] = {-1.0};
    const auto fa = fit_bfgs(spec, s.design, s.y, a);
    const auto fb = fit_bfgs(spec, s.design, s.y, b);
    CHECK(fa.coefficients.terms[2][0] * fb.coefficients.terms[2][0] < 0.0);
    const BoundModel model(spec, s.design.columns);
    MixtureParams pa, pb;
    const auto ea = model.linear_predictors(fa.coefficients, s.design.x.topRows(1));
    const auto eb = model.linear_predictors(fb.coefficients, s.design.x.topRows(1));
    model.params_from_etas(ea.data(), pa);
    model.params_from_etas(eb.data(), pb);
    for (double y : {-3.0, -1.0, 0.0, 1.0, 2.5}) CHECK(std::abs(crps_mixture(pa, y) - crps_mixture(pb, y)) < 1e-6);
}

TEST_CASE("fit preconditions") {
    const Sample s = samos_sample(11, 9);
    CHECK_THROWS_AS(fit_bfgs(make_samos(kT2m), s.design, s.y), DomainError);
}

TEST_CASE("model file round trip") {
    const ModelSpec spec = make_mixsamos(kT2m, Loss::CRPS);
    Coefficients c = Coefficients::zeros(spec);
    c.terms[0] = {0.1, -1.0 / 3.0};
    c.terms[2] = {M_PI, 1e-300};
    c.terms[5] = {-0.75};
    std::stringstream buf;
    write_model_file(buf, spec, c);
    const auto back = read_model_file(buf);
    CHECK(back.spec.hash() == spec.hash());
    CHECK(back.coefficients == c);
    CHECK(back.spec.loss == Loss::CRPS);

    std::string text;
    {
        std::ostringstream out;
        write_model_file(out, spec, c);
        text = out.str();
    }
    const auto pos = text.find("t2m_CTRL");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 8, "t2m_XTRL");
    std::istringstream edited(text);
    CHECK_THROWS_AS(read_model_file(edited), DataError);
    std::istringstream empty("");
    CHECK_THROWS_AS(read_model_file(empty), DataError);
}

TEST_CASE("format_double keeps 17 digits") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::stod(format_double(v)) == v);
}
