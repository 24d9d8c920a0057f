#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "oraclesim/oracle.hpp"

namespace oraclesim {

// Solution structure of x = f_k - (1-x)^k (f_k - g_k) on [0, 1].
enum class FixedPointCase {
    K0,            // constant map, the only fixed point is g_k
    K1,            // affine map with a single fixed point g/(1 - f + g)
    K1Degenerate,  // (g, f) = (0, 1): the identity map, every x is fixed
    Unique,        // k >= 2, g > 0
    ZeroOnly,      // k >= 2, g = 0, k f <= 1
    TwoRoots,      // k >= 2, g = 0, k f > 1: 0 plus one positive root
};

const char* to_string(FixedPointCase c);

struct FixedPointReport {
    int k = 0;
    double f_k = 0.0;
    double g_k = 0.0;
    std::vector<double> roots;  // ascending
    double selected = 0.0;      // largest root
    FixedPointCase fp_case = FixedPointCase::K0;

    nlohmann::json to_json() const;
};

/**
 * Classifies and solves the self-consistency equation for the success rate
 * of an infinitely iterated fanin-k combiner with transfer values f_k
 * (some context solution correct) and g_k (none correct). Roots found
 * numerically are bisected to full double precision after a 1024-cell
 * bracketing scan.
 */
FixedPointReport solve_fixed_point(double f_k, double g_k, int k);

struct OptimalSuccess {
    double x_star = 0.0;
    int argmax_k = 0;

    nlohmann::json to_json() const;
};

/**
 * Best limiting success probability over fanins 0..k_max: the supremum of
 * the selected fixed points. Ties break to the smallest fanin, and fanins
 * with f(k) already below the running best are skipped (the fixed point
 * never exceeds f(k)). The degenerate k = 1 identity map is ignored: every
 * point is "fixed" there but iteration from the base rate cannot move, so
 * it offers nothing beyond the k = 0 candidate.
 *
 * Decaying-family models only.
 */
OptimalSuccess optimal_success(const TransferFunction& tf, int k_max = 64);

/**
 * Depth-limited optimum: a_0 = base rate, a_i = max over k in 1..k_max of
 * f(k) - (1 - a_{i-1})^k (f(k) - g(k)). Returns a_0..a_levels. No plan of
 * depth <= L can beat a_L.
 */
std::vector<double> fixed_depth_optimum(const TransferFunction& tf, int levels,
                                        int k_max = 64);

// The fanins attaining each a_i above (ties to the smallest k); entry i is
// the fanin used in the step from a_i to a_{i+1}.
std::vector<int> fixed_depth_argmax(const TransferFunction& tf, int levels,
                                    int k_max = 64);

// Level values a_0..a_L of the branching recursion for one explicit fanin
// sequence (k_1 applied first).
std::vector<double> branching_success(const TransferFunction& tf,
                                      const std::vector<int>& fanins);

enum class AlgorithmKind { Branching, Genetic, RandomSampling };

const char* to_string(AlgorithmKind a);
AlgorithmKind algorithm_from_string(const std::string& name);

/**
 * Asymptotic convergence-rate report for the uniform model (parameters
 * p < q, cap k). derivative is the slope of the fanin-k update map at the
 * fixed point, k (q - x*) / (1 - x*), and must land in (0, 1). The gap to
 * x* after n oracle calls shrinks like n^(-exponent):
 *
 *   branching         exponent = -log(derivative) / log(k)
 *   genetic           exponent = 1/2
 *   random sampling   exponent = min(1/2, 1 - derivative)
 */
struct ConvergenceReport {
    double p = 0.0, q = 0.0;
    int k = 0;
    AlgorithmKind algorithm = AlgorithmKind::Branching;
    double x_star = 0.0;
    double derivative = 0.0;
    double exponent = 0.0;

    nlohmann::json to_json() const;
};

ConvergenceReport convergence_report(double p, double q, int k, AlgorithmKind algorithm);

/**
 * Stationary behaviour of the sliding-window chain over states 0..k, where
 * the state tracks how many of the k most recent solutions are wrong since
 * the last correct one (k meaning "none of the last k correct"). pi is the
 * closed form, pi_power the power-iteration check (run to sup-norm 1e-12),
 * and success = pi[0], the long-run output accuracy.
 */
struct StationaryReport {
    double p = 0.0, q = 0.0;
    int k = 0;
    std::vector<double> pi;
    std::vector<double> pi_power;
    double success = 0.0;
    int iterations = 0;

    nlohmann::json to_json() const;
};

StationaryReport sliding_window_stationary(double p, double q, int k);

/**
 * Closed-form best context size for an exponential-decay oracle when each
 * context solution is independently correct with probability x:
 * max(1, floor(1 + log((1-q)/(1-(1-x)q)) / log(1-x))).
 */
int optimal_context_size_exp(double x, double q);

// Supremum success probability achievable under exponential decay.
double exp_decay_max_success(double p, double q);

// Per-level population sizes s_i = ceil(-2 ln(eps/L) / (p_{i-1} eps^2))
// keeping every level of a genetic plan within a (1 +- eps) corridor of its
// branching value with probability >= 1 - eps.
std::vector<std::int64_t> genetic_population_sizes(int levels, double eps,
                                                   const std::vector<double>& level_probs);

// Chernoff bound P(X <= (1-eps) mu) <= exp(-eps^2 mu / 2).
double chernoff_lower_tail(double mu, double eps);

struct PolySeries {
    std::vector<double> values;  // p_0..p_n
    double limit = 0.0;          // c^(1/(1-q))

    nlohmann::json to_json() const;
};

/**
 * The recursion p_0 = p, p_i = c p_{i-1}^q, cross-checked against its
 * closed form p_n = p^(q^n) c^((1-q^n)/(1-q)) to 1e-12 relative at every
 * index.
 */
PolySeries poly_decay_series(double p, double q, double c, int n);

// Smallest n at which the series above (with c = 1 - 2/e) reaches
// (1 - eps) of its limit, found by exact scan.
int poly_decay_steps(double p, double q, double eps);

}  // namespace oraclesim
