#pragma once

// Seeded synthetic stations with 50 + 1 member forecasts of eight variables
// and a temperature-like response, for four scenarios.

#include <cstdint>
#include <string>
#include <vector>

#include "mixboost/dataset.hpp"

namespace mixboost {

struct SimulationOptions {
    std::string scenario = "seasonal-basic";
    std::uint64_t seed = 1;
    std::size_t stations = 10;
    int years = 5;
    Date start{2015, 1, 1};
    std::size_t members = 50;
    /// Fraction of observations replaced by NA.
    double missing_fraction = 0.0;
};

/// seasonal-basic, underdispersed, bimodal, sparse-signal.
const std::vector<std::string>& scenario_names();

struct StationTruth {
    std::string station_id;
    ClimatologyFit response;
};

struct Simulation {
    std::vector<StationDataset> data;
    std::vector<StationTruth> truth;
    /// Anomaly covariates that enter the generating model.
    std::vector<std::string> active_covariates;
    std::string description;
};

Simulation simulate(const SimulationOptions& opts);

/// JSON document with the options, generator parameters and ground truth.
std::string simulation_metadata_json(const SimulationOptions& opts, const Simulation& sim);

/// Station ids are "ST01", "ST02", ...
std::string station_name(std::size_t index);

}  // namespace mixboost
