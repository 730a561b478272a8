#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "mixboost/climatology.hpp"
#include "mixboost/error.hpp"

using namespace mixboost;

namespace {

struct SeasonalSample {
    std::vector<double> values;
    std::vector<int> doys;
};

// N = 3650 draws from N(5 + 2 sin, exp(0.1)^2) with doys cycling over the year.
SeasonalSample seasonal_sample(std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    SeasonalSample s;
    for (int i = 0; i < 3650; ++i) {
        const int doy = 1 + i % 365;
        s.doys.push_back(doy);
        s.values.push_back(5.0 + 2.0 * std::sin(seasonal_angle(doy)) + std::exp(0.1) * n01(gen));
    }
    return s;
}

}  // namespace

TEST_CASE("transform examples") {
    CHECK(apply_transform({TransformKind::Identity}, 5.0) == 5.0);
    CHECK(apply_transform({TransformKind::Log}, 1.0) == 0.0);
    CHECK(apply_transform({TransformKind::Logit}, 0.5) == 0.0);
    CHECK(apply_transform({TransformKind::HalfLogit}, 1.0) == 0.0);
    CHECK(std::isfinite(apply_transform({TransformKind::Logit}, 0.0)));
    CHECK(std::isfinite(apply_transform({TransformKind::Logit}, 1.0)));
    CHECK(std::isfinite(apply_transform({TransformKind::Log}, 0.0)));
}

TEST_CASE("transform domain errors name the variable") {
    try {
        apply_transform({TransformKind::Log}, -2.0, "sh");
        FAIL("expected a domain error");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("'sh'") != std::string::npos);
        CHECK(std::string(e.what()).find("-2") != std::string::npos);
    }
    CHECK_THROWS_AS(apply_transform({TransformKind::Logit}, 1.5), DomainError);
    CHECK_THROWS_AS(apply_transform({TransformKind::HalfLogit}, 2.5), DomainError);
}

TEST_CASE("transform round trip") {
    for (double x : {0.01, 0.3, 0.5, 0.77, 0.99}) {
        CHECK(std::abs(invert_transform({TransformKind::Logit}, apply_transform({TransformKind::Logit}, x)) - x) <= 1e-12);
        CHECK(std::abs(invert_transform({TransformKind::HalfLogit}, apply_transform({TransformKind::HalfLogit}, 2 * x)) -
                       2 * x) <= 1e-12);
    }
    for (double x : {1e-3, 0.4, 7.0, 1013.25}) {
        CHECK(std::abs(invert_transform({TransformKind::Log}, apply_transform({TransformKind::Log}, x)) - x) <= 1e-12);
    }
    for (auto kind : {TransformKind::Identity, TransformKind::Log, TransformKind::Logit, TransformKind::HalfLogit}) {
        CHECK(Transform::parse(Transform{kind}.name()) == Transform{kind});
    }
}

TEST_CASE("transforms per variable") {
    CHECK(transform_for("t2m", false).kind == TransformKind::Identity);
    CHECK(transform_for("t2m", true).kind == TransformKind::Log);
    CHECK(transform_for("sh", false).kind == TransformKind::Log);
    CHECK(transform_for("tcc", false).kind == TransformKind::Logit);
    CHECK(transform_for("tcc", true).kind == TransformKind::HalfLogit);
    CHECK(transform_for("unknown", true).kind == TransformKind::Identity);
}

TEST_CASE("day of year") {
    CHECK(day_of_year(2019, 1, 1) == 1);
    CHECK(day_of_year(2019, 12, 31) == 365);
    CHECK(day_of_year(2020, 2, 29) == 60);
    CHECK(day_of_year(2020, 12, 31) == 366);
    CHECK(is_leap_year(2000));
    CHECK_FALSE(is_leap_year(1900));
    CHECK_THROWS_AS(day_of_year(2019, 2, 29), DomainError);
    CHECK(seasonal_angle(365) == doctest::Approx(2.0 * M_PI * 365.0 / 365.25));
}

TEST_CASE("constant series gives a flat climatology") {
    std::vector<double> v(400, 3.5);
    std::vector<int> d(400);
    std::mt19937_64 gen(3);
    std::normal_distribution<double> tiny(0.0, 1e-3);
    for (std::size_t i = 0; i < v.size(); ++i) {
        d[i] = 1 + static_cast<int>(i * 365 / v.size());
        v[i] += tiny(gen);  // an exactly constant series has no finite ML scale
    }
    const auto fit = fit_climatology(v, d);
    CHECK(std::abs(fit.loc_coeffs[0] - 3.5) < 1e-4);
    CHECK(std::abs(fit.loc_coeffs[1]) < 1e-4);
    CHECK(std::abs(fit.loc_coeffs[2]) < 1e-4);
    CHECK(std::abs(fit.scale_coeffs[1]) < 0.2);
    CHECK(std::abs(fit.scale_coeffs[2]) < 0.2);
}

TEST_CASE("seasonal climatology recovery and anomaly moments") {
    const auto s = seasonal_sample(2024);
    const auto fit = fit_climatology(s.values, s.doys, "ST01", "t2m");
    CHECK(fit.station_id == "ST01");
    CHECK(std::abs(fit.loc_coeffs[0] - 5.0) < 0.05);
    CHECK(std::abs(fit.loc_coeffs[1] - 2.0) < 0.05);
    CHECK(std::abs(fit.loc_coeffs[2]) < 0.05);
    CHECK(std::abs(fit.scale_coeffs[0] - 0.1) < 0.05);

    const auto z = standardize(s.values, s.doys, fit);
    double mean = 0.0;
    for (double v : z.values) mean += v;
    mean /= static_cast<double>(z.values.size());
    double var = 0.0;
    for (double v : z.values) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(z.values.size() - 1));
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(sd - 1.0) < 0.05);
    for (int doy = 1; doy <= 366; ++doy) CHECK(fit.sd(doy) > 0.0);
}

TEST_CASE("missing values are dropped before fitting") {
    auto s = seasonal_sample(5);
    s.values.resize(500);
    s.doys.resize(500);
    std::vector<double> dense, holey = s.values;
    std::vector<int> dense_doys;
    for (std::size_t i = 0; i < holey.size(); ++i) {
        if (i % 7 == 3) {
            holey[i] = std::nan("");
        } else {
            dense.push_back(s.values[i]);
            dense_doys.push_back(s.doys[i]);
        }
    }
    CHECK(fit_climatology(holey, s.doys) == fit_climatology(dense, dense_doys));
}

TEST_CASE("climatology preconditions") {
    std::vector<double> few(9, 1.0);
    std::vector<int> few_doys{1, 2, 3, 4, 5, 6, 7, 8, 9};
    CHECK_THROWS_AS(fit_climatology(few, few_doys), DomainError);
    std::vector<double> one_day{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<int> same(10, 42);
    CHECK_THROWS_AS(fit_climatology(one_day, same), DomainError);
}

TEST_CASE("standardize examples") {
    ClimatologyFit fit;
    fit.loc_coeffs = {10.0, 1.0, -2.0};
    fit.scale_coeffs = {std::log(4.0), 0.1, 0.0};
    const int doy = 123;
    CHECK(standardize_value(fit.mean(doy), doy, fit) == 0.0);
    CHECK(standardize_value(fit.mean(doy) + fit.sd(doy), doy, fit) == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<double> bad{std::nan("")};
    const std::vector<int> d{1};
    CHECK_THROWS_AS(standardize(bad, d, fit), DomainError);
}

TEST_CASE("destandardize examples") {
    ClimatologyFit fit;
    fit.loc_coeffs = {10.0, 0.0, 0.0};
    fit.scale_coeffs = {std::log(4.0), 0.0, 0.0};
    const auto a = destandardize_mixture(MixtureParams::single(0.0, 1.0), fit, 50);
    CHECK(a.locations[0] == 10.0);
    CHECK(a.scales[0] == doctest::Approx(4.0).epsilon(1e-15));
    const auto b = destandardize_mixture(MixtureParams::single(0.5, 1.0), fit, 50);
    CHECK(b.locations[0] == doctest::Approx(12.0).epsilon(1e-15));
    CHECK(b.scales[0] == doctest::Approx(4.0).epsilon(1e-15));
    const auto c = destandardize_mixture(MixtureParams({0.8, 0.2}, {0, 1}, {1, 2}), fit, 50);
    CHECK(c.weights == std::vector<double>{0.8, 0.2});
}

TEST_CASE("crps is equivariant through destandardization") {
    ClimatologyFit fit;
    fit.loc_coeffs = {12.0, 3.0, -1.0};
    fit.scale_coeffs = {0.7, 0.2, -0.1};
    const MixtureParams z({0.35, 0.65}, {-0.8, 0.9}, {0.6, 1.3});
    for (int doy : {1, 90, 200, 366}) {
        for (double y : {-5.0, 8.0, 13.0, 20.0}) {
            const double lhs = crps_mixture(destandardize_mixture(z, fit, doy), y);
            const double rhs = fit.sd(doy) * crps_mixture(z, standardize_value(y, doy, fit));
            CHECK(std::abs(lhs - rhs) < 1e-10);
        }
    }
}

TEST_CASE("identity climatology and round trip") {
    const auto id = ClimatologyFit::identity("ST02", "pr");
    CHECK(id.mean(77) == 0.0);
    CHECK(id.sd(77) == 1.0);
    ClimatologyFit fit;
    fit.loc_coeffs = {1.0, 2.0, 3.0};
    fit.scale_coeffs = {0.5, -0.25, 0.125};
    const auto back = destandardize_mixture(MixtureParams::single(0, 1), fit, 33);
    CHECK(back.locations[0] == fit.mean(33));
    CHECK(back.scales[0] == fit.sd(33));
}

TEST_CASE("climatology csv round trip") {
    ClimatologyFit a;
    a.station_id = "ST01";
    a.variable_id = "t2m";
    a.loc_coeffs = {1.0 / 3.0, -2.5e-7, 1e10};
    a.scale_coeffs = {0.1, M_PI, -M_E};
    ClimatologyFit b = ClimatologyFit::identity("ST02", "response");
    std::vector<ClimatologyFit> fits{a, b};
    std::stringstream buf;
    write_climatology_csv(buf, fits);
    CHECK(read_climatology_csv(buf) == fits);
    std::istringstream empty("");
    CHECK_THROWS_AS(read_climatology_csv(empty), DataError);
    std::istringstream short_line("station_id,variable,loc0,loc1,loc2,scale0,scale1,scale2\nST01,t2m,1,2\n");
    CHECK_THROWS_AS(read_climatology_csv(short_line), DataError);
}
