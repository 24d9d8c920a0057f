#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "oraclesim/plan.hpp"

namespace oraclesim {

struct RunConfig {
    std::int64_t trials = 0;
    std::uint64_t base_seed = 0;
    int workers = 1;
};

struct RunStats {
    std::int64_t trials = 0;
    std::int64_t successes = 0;
    double p_hat = 0.0;
    double ci_low = 0.0;  // Wilson 95%
    double ci_high = 0.0;
    std::uint64_t base_seed = 0;

    nlohmann::json to_json() const;
};

// Wilson score interval for `successes` out of `trials` at 95% coverage.
std::pair<double, double> wilson_interval(std::int64_t successes, std::int64_t trials);

/**
 * Monte Carlo estimate of a family's final-call success rate. Trial t is a
 * pure function of (base_seed, t): randomized families rebuild their wiring
 * from the trial's own stream, then the execution draws one Bernoulli per
 * node. Results are therefore bit-identical for any worker count.
 */
RunStats run_trials(const PlanFamily& family, const TransferFunction& tf,
                    const RunConfig& cfg);

/**
 * One random-sampling run of length n at fanin k; returns the running
 * correct fraction X_1..X_n.
 */
std::vector<double> random_sampling_trajectory(const TransferFunction& tf, int k,
                                               std::int64_t n, std::uint64_t seed);

// Long single chain of the sliding-window family; returns the fraction of
// correct outputs over `steps` calls.
double sliding_window_long_run(const TransferFunction& tf, int k, std::int64_t steps,
                               std::uint64_t seed);

struct GapPoint {
    double n = 0.0;    // oracle-call budget
    double gap = 0.0;  // x_star minus achieved success
};

struct ExponentFit {
    double slope = 0.0;      // of log(1/gap) against log(n)
    double intercept = 0.0;
    double r2 = 0.0;
    int points_used = 0;

    nlohmann::json to_json() const;
};

/**
 * Least-squares power-law fit on log-log axes. Points with gap <= 0 are
 * dropped; at least 3 must survive, and an all-equal x or y column is a
 * degenerate-fit error.
 */
ExponentFit fit_exponent(const std::vector<GapPoint>& points);

// Turns Monte Carlo rows into fit points, dropping rows whose gap to
// x_star is inside 3 standard errors (pure noise contributes no slope).
std::vector<GapPoint> gap_points(const std::vector<std::pair<double, RunStats>>& rows,
                                 double x_star);

struct SweepSpec {
    std::vector<nlohmann::json> models;    // model configs, oracle-models format
    std::vector<nlohmann::json> families;  // family configs, plan-engine format
    RunConfig cfg;
};

struct SweepRow {
    nlohmann::json model;
    nlohmann::json family;
    bool ok = false;
    std::string error;
    RunStats stats;

    nlohmann::json to_json() const;
};

/**
 * Cross product of models x families, one run_trials per cell. Each row
 * runs on its own derived seed and carries its full parameter provenance;
 * a failing row records its error without aborting the rest.
 */
std::vector<SweepRow> sweep(const SweepSpec& spec);

}  // namespace oraclesim
