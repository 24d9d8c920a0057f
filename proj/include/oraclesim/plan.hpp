#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "oraclesim/oracle.hpp"
#include "oraclesim/rng.hpp"

namespace oraclesim {

/**
 * A reasoning plan: `n` oracle calls where call k sees a multiset of earlier
 * calls' solutions (1-based indices strictly below k) and call n produces
 * the output. Contexts are stored flat (CSR) so plans with millions of
 * nodes stay cheap to rebuild and walk.
 */
struct Plan {
    std::int64_t n = 0;
    std::vector<std::uint32_t> ctx_offsets;  // size n + 1
    std::vector<std::uint32_t> ctx_data;     // each node's indices, sorted

    std::span<const std::uint32_t> context(std::int64_t node) const {
        return {ctx_data.data() + ctx_offsets[node - 1],
                ctx_data.data() + ctx_offsets[node]};
    }
};

// Builds a plan from per-node context lists, validating that node k only
// references indices in [1, k-1]. Contexts are sorted on the way in.
Plan make_plan(std::vector<std::vector<std::uint32_t>> contexts);

enum class FamilyKind { Branching, Genetic, RandomSampling, SlidingWindow };

/**
 * Declarative description of a plan family. Which fields apply depends on
 * the kind:
 *   Branching       levels, fanins (k_1..k_L; level-i nodes fan in k_i)
 *   Genetic         levels, sizes (s_1..s_L), fanins (k_1..k_L)
 *   RandomSampling  n, k
 *   SlidingWindow   n, k
 */
struct PlanFamily {
    FamilyKind kind = FamilyKind::Branching;
    int levels = 0;
    std::vector<int> fanins;
    std::vector<std::int64_t> sizes;
    std::int64_t n = 0;
    int k = 0;

    // Genetic and random-sampling plans draw their wiring at build time.
    bool randomized() const {
        return kind == FamilyKind::Genetic || kind == FamilyKind::RandomSampling;
    }

    nlohmann::json to_json() const;
    static PlanFamily from_json(const nlohmann::json& j);

    static PlanFamily branching(int levels, std::vector<int> fanins);
    static PlanFamily genetic(int levels, std::vector<std::int64_t> sizes,
                              std::vector<int> fanins);
    static PlanFamily random_sampling(std::int64_t n, int k);
    static PlanFamily sliding_window(std::int64_t n, int k);
};

/**
 * Complete k_L-ary recursion tree of depth `levels`: level-0 leaves call
 * the oracle on an empty context, each level-i node on its k_i children,
 * and the root (node n) is the output.
 */
Plan build_branching(int levels, const std::vector<int>& fanins);

// Population pipeline: s_1 empty-context nodes at level 0, then s_{i+1}
// nodes at level i each sampling k_i parents uniformly with replacement
// from level i-1, and one final node sampling k_L from level L-1.
Plan build_genetic(int levels, const std::vector<std::int64_t>& sizes,
                   const std::vector<int>& fanins, Rng& rng);
void build_genetic_into(Plan& out, int levels, const std::vector<std::int64_t>& sizes,
                        const std::vector<int>& fanins, Rng& rng);

// Chain where node j samples k context entries i.i.d. uniform from all
// predecessors 1..j-1.
Plan build_random_sampling(std::int64_t n, int k, Rng& rng);
void build_random_sampling_into(Plan& out, std::int64_t n, int k, Rng& rng);

// Chain where node j's context is the k most recent predecessors.
Plan build_sliding_window(std::int64_t n, int k);

Plan build_plan(const PlanFamily& family, Rng& rng);

// Longest directed path (in edges) anywhere in the DAG.
int depth(const Plan& plan);

struct ExecutionTrace {
    std::vector<std::uint8_t> scores;  // one binary score per call, call order
    bool final = false;                // score of call n
    std::uint64_t seed = 0;
};

/** Runs the plan once, drawing one Bernoulli per oracle call. */
ExecutionTrace execute(const Plan& plan, const TransferFunction& tf, Rng& rng);

// Lean form for hot loops: writes scores into the caller's buffer and only
// returns the final score.
bool execute_into(const Plan& plan, const TransferFunction& tf, Rng& rng,
                  std::vector<std::uint8_t>& scores);

/**
 * Exact P(node n correct) by summing over all 2^n score assignments.
 * Deliberately brute force; rejects n > 22.
 */
double exact_success_prob(const Plan& plan, const TransferFunction& tf);

inline constexpr int kExactEnumerationMaxNodes = 22;
inline constexpr int kPlanEnumerationMaxNodes = 6;

/**
 * Visits every plan on n nodes whose contexts are plain sets (no repeated
 * indices); there are 2^(n(n-1)/2) of them. Rejects n > 6. The Plan passed
 * to the callback is reused between calls.
 */
void for_each_plan(int n, const std::function<void(const Plan&)>& fn);

std::vector<Plan> enumerate_plans(int n);

nlohmann::json plan_to_json(const Plan& plan);
Plan plan_from_json(const nlohmann::json& j);
Plan load_plan(const std::string& path);

}  // namespace oraclesim
