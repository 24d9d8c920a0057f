#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "oraclesim/rng.hpp"

namespace oraclesim {

// Composition of the solutions shown to one oracle call: how many of them
// are correct and how many are not. Multiplicities count.
struct ContextCounts {
    int correct = 0;
    int incorrect = 0;

    int size() const { return correct + incorrect; }
};

struct MonotonicityReport {
    bool weak = false;
    bool strong = false;
    // Lexicographically smallest (correct, incorrect) cell at which the
    // failed inequality was observed; empty when strong holds.
    std::optional<std::pair<int, int>> first_violation;
};

// One measured table entry of an empirical model: accuracy observed when
// `correct` right and `incorrect` wrong solutions were in context, with the
// sample count behind the estimate.
struct EmpiricalCell {
    int correct = 0;
    int incorrect = 0;
    double prob = 0.0;
    std::int64_t n = 0;
};

/**
 * Probabilistic solution oracle: maps the composition of the context shown
 * to a call onto a success probability.
 *
 * Five variants share this type. Four of them are "decaying" models, fully
 * described by two sequences over the context size: f(s) applies when at
 * least one context solution is correct, g(s) when none is (the empty
 * context uses g(0), the base rate). The fifth, Empirical, is a raw
 * (correct, incorrect) -> probability table fitted from transcripts.
 *
 *   uniform(p, q, k)   f(s) = q for s <= k, p beyond; g = p
 *   exp_decay(p, q)    f(s) = q^(s-1); g(0) = p, g(s>0) = 0
 *   poly_decay(p, q)   f(s) = s^(-q); g(0) = p, g(s>0) = 0
 *   decaying(f, g)     explicit tables, last entry extends to any size
 *
 * Probabilities within 1e-12 of [0, 1] are clamped onto the boundary;
 * anything farther out is rejected as a domain error.
 */
class TransferFunction {
  public:
    enum class Kind { Uniform, Decaying, ExpDecay, PolyDecay, Empirical };

    static TransferFunction uniform(double p, double q, int k);
    static TransferFunction decaying(std::vector<double> f, std::vector<double> g);
    static TransferFunction exp_decay(double p, double q);
    static TransferFunction poly_decay(double p, double q);
    static TransferFunction empirical(std::vector<EmpiricalCell> cells, double fallback);

    Kind kind() const { return kind_; }
    bool is_decaying_family() const { return kind_ != Kind::Empirical; }

    /** Success probability of one call given its context composition. */
    double success_prob(ContextCounts c) const;

    bool sample(ContextCounts c, Rng& rng) const { return rng.next_bernoulli(success_prob(c)); }

    // Decaying-family accessors; domain error on Empirical. f_at(0) is a
    // sentinel (f is never consulted for an all-wrong or empty context).
    double f_at(int size) const;
    double g_at(int size) const;

    double base_rate() const { return success_prob({0, 0}); }

    /**
     * Scans all cells with correct + incorrect < horizon and checks
     *   weak:    F(a+1, b) >= F(a, b+1)
     *   strong:  weak and F(a, b+1) >= F(a, b)
     * with 1e-12 slack on every comparison.
     */
    MonotonicityReport check_monotonicity(int horizon) const;

    // Same model with every probability multiplied by `factor`. Closed-form
    // kinds are materialized as explicit tables up to `horizon`.
    TransferFunction scaled(double factor, int horizon = 64) const;

    /**
     * Explicit-table view of the model up to `horizon`. For Empirical this
     * is a projection onto the decaying family: f(s) is the n-weighted mean
     * of the cells with a >= 1 and a + b = s, g(s) is the (0, s) cell, the
     * fallback fills the holes, and f is raised to max(f, g) cell-wise so
     * the result is a valid decaying model.
     */
    TransferFunction to_decaying(int horizon) const;

    nlohmann::json to_json() const;
    static TransferFunction from_json(const nlohmann::json& j);
    static TransferFunction load(const std::string& path);

    // Parameter accessors (meaning depends on kind).
    double p() const { return p_; }
    double q() const { return q_; }
    int cap() const { return cap_; }
    double fallback() const { return fallback_; }
    const std::map<std::pair<int, int>, EmpiricalCell>& cells() const { return cells_; }

  private:
    TransferFunction() = default;

    Kind kind_ = Kind::Uniform;
    double p_ = 0.0;
    double q_ = 0.0;
    int cap_ = 0;
    std::vector<double> f_table_;
    std::vector<double> g_table_;
    std::map<std::pair<int, int>, EmpiricalCell> cells_;
    double fallback_ = 0.0;
};

// Clamp-or-reject rule used everywhere a probability is computed or parsed:
// values within 1e-12 of [0, 1] snap to the boundary, larger excursions are
// domain errors.
double clamp_probability(double x, const char* what);

}  // namespace oraclesim
