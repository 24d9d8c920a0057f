#include "oraclesim/plan.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace oraclesim {

namespace {

constexpr std::int64_t kMaxPlanNodes = std::int64_t{1} << 26;

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void sort_node_contexts(Plan& plan) {
    for (std::int64_t k = 1; k <= plan.n; ++k) {
        auto* lo = plan.ctx_data.data() + plan.ctx_offsets[k - 1];
        auto* hi = plan.ctx_data.data() + plan.ctx_offsets[k];
        std::sort(lo, hi);
    }
}

}  // namespace

Plan make_plan(std::vector<std::vector<std::uint32_t>> contexts) {
    Plan plan;
    plan.n = static_cast<std::int64_t>(contexts.size());
    require(plan.n >= 1, "a plan needs at least one call");
    require(plan.n <= kMaxPlanNodes, "plan too large");
    plan.ctx_offsets.resize(contexts.size() + 1, 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        for (auto idx : contexts[i])
            require(idx >= 1 && idx < i + 1,
                    "context of call " + std::to_string(i + 1) +
                        " references call " + std::to_string(idx));
        total += contexts[i].size();
        plan.ctx_offsets[i + 1] = static_cast<std::uint32_t>(total);
    }
    require(total <= std::numeric_limits<std::uint32_t>::max(), "plan context storage too large");
    plan.ctx_data.reserve(total);
    for (auto& ctx : contexts)
        plan.ctx_data.insert(plan.ctx_data.end(), ctx.begin(), ctx.end());
    sort_node_contexts(plan);
    return plan;
}

nlohmann::json PlanFamily::to_json() const {
    switch (kind) {
        case FamilyKind::Branching:
            return {{"family", "branching"}, {"levels", levels}, {"fanins", fanins}};
        case FamilyKind::Genetic:
            return {{"family", "genetic"},
                    {"levels", levels},
                    {"sizes", sizes},
                    {"fanins", fanins}};
        case FamilyKind::RandomSampling:
            return {{"family", "random-sampling"}, {"n", n}, {"k", k}};
        case FamilyKind::SlidingWindow:
            return {{"family", "sliding-window"}, {"n", n}, {"k", k}};
    }
    throw std::invalid_argument("unknown plan family");
}

PlanFamily PlanFamily::branching(int levels, std::vector<int> fanins) {
    PlanFamily f;
    f.kind = FamilyKind::Branching;
    f.levels = levels;
    f.fanins = std::move(fanins);
    return f;
}

PlanFamily PlanFamily::genetic(int levels, std::vector<std::int64_t> sizes,
                               std::vector<int> fanins) {
    PlanFamily f;
    f.kind = FamilyKind::Genetic;
    f.levels = levels;
    f.sizes = std::move(sizes);
    f.fanins = std::move(fanins);
    return f;
}

PlanFamily PlanFamily::random_sampling(std::int64_t n, int k) {
    PlanFamily f;
    f.kind = FamilyKind::RandomSampling;
    f.n = n;
    f.k = k;
    return f;
}

PlanFamily PlanFamily::sliding_window(std::int64_t n, int k) {
    PlanFamily f;
    f.kind = FamilyKind::SlidingWindow;
    f.n = n;
    f.k = k;
    return f;
}

PlanFamily PlanFamily::from_json(const nlohmann::json& j) {
    require(j.is_object() && j.contains("family"), "family config needs a \"family\" field");
    const std::string name = j.at("family").get<std::string>();
    PlanFamily f;
    auto read_fanins = [&](int levels) {
        if (j.contains("fanins")) return j.at("fanins").get<std::vector<int>>();
        // Scalar shorthand: one fanin applied at every level.
        return std::vector<int>(levels, j.at("fanin").get<int>());
    };
    if (name == "branching") {
        f.kind = FamilyKind::Branching;
        f.levels = j.at("levels").get<int>();
        f.fanins = read_fanins(f.levels);
    } else if (name == "genetic") {
        f.kind = FamilyKind::Genetic;
        f.sizes = j.at("sizes").get<std::vector<std::int64_t>>();
        f.levels = j.value("levels", static_cast<int>(f.sizes.size()));
        f.fanins = read_fanins(f.levels);
    } else if (name == "random-sampling") {
        f.kind = FamilyKind::RandomSampling;
        f.n = j.at("n").get<std::int64_t>();
        f.k = j.at("k").get<int>();
    } else if (name == "sliding-window") {
        f.kind = FamilyKind::SlidingWindow;
        f.n = j.at("n").get<std::int64_t>();
        f.k = j.at("k").get<int>();
    } else {
        throw std::invalid_argument("unknown plan family \"" + name + "\"");
    }
    return f;
}

Plan build_branching(int levels, const std::vector<int>& fanins) {
    require(levels >= 0, "levels must be >= 0");
    require(static_cast<int>(fanins.size()) == levels,
            "branching needs one fanin per level");
    for (int k : fanins) require(k >= 1, "fanins must be >= 1");

    // counts[j] = number of nodes at level j; the root sits alone at the top.
    std::vector<std::int64_t> counts(levels + 1);
    counts[levels] = 1;
    for (int j = levels - 1; j >= 0; --j) {
        counts[j] = counts[j + 1] * fanins[j];
        require(counts[j] <= kMaxPlanNodes, "branching plan too large");
    }
    std::vector<std::int64_t> start(levels + 1);  // 1-based index of first node per level
    start[0] = 1;
    for (int j = 1; j <= levels; ++j) start[j] = start[j - 1] + counts[j - 1];

    Plan plan;
    plan.n = start[levels] + counts[levels] - 1;
    require(plan.n <= kMaxPlanNodes, "branching plan too large");
    plan.ctx_offsets.assign(plan.n + 1, 0);
    std::size_t total = 0;
    for (int j = 0; j <= levels; ++j) {
        int fanin = j == 0 ? 0 : fanins[j - 1];
        for (std::int64_t t = 0; t < counts[j]; ++t) {
            total += static_cast<std::size_t>(fanin);
            plan.ctx_offsets[start[j] + t] = static_cast<std::uint32_t>(total);
        }
    }
    require(total <= std::numeric_limits<std::uint32_t>::max(), "plan context storage too large");
    plan.ctx_data.resize(total);
    for (int j = 1; j <= levels; ++j) {
        int fanin = fanins[j - 1];
        for (std::int64_t t = 0; t < counts[j]; ++t) {
            std::int64_t node = start[j] + t;
            std::uint32_t* out = plan.ctx_data.data() + plan.ctx_offsets[node - 1];
            std::int64_t child0 = start[j - 1] + t * fanin;
            for (int c = 0; c < fanin; ++c)
                out[c] = static_cast<std::uint32_t>(child0 + c);
        }
    }
    return plan;
}

void build_genetic_into(Plan& out, int levels, const std::vector<std::int64_t>& sizes,
                        const std::vector<int>& fanins, Rng& rng) {
    require(levels >= 1, "genetic plans need at least one level");
    require(static_cast<int>(sizes.size()) == levels, "genetic needs one size per level");
    require(static_cast<int>(fanins.size()) == levels, "genetic needs one fanin per level");
    for (auto s : sizes) require(s >= 1, "population sizes must be >= 1");
    for (int k : fanins) require(k >= 1, "fanins must be >= 1");

    std::int64_t n = std::accumulate(sizes.begin(), sizes.end(), std::int64_t{1});
    require(n <= kMaxPlanNodes, "genetic plan too large");

    out.n = n;
    out.ctx_offsets.assign(n + 1, 0);
    // Level i (0-based) holds sizes[i] nodes; level-i nodes for i >= 1 draw
    // fanins[i-1] parents, and the final node draws fanins[levels-1].
    std::vector<std::int64_t> start(levels + 1);
    start[0] = 1;
    for (int i = 1; i < levels; ++i) start[i] = start[i - 1] + sizes[i - 1];
    start[levels] = n;  // the single output node

    std::size_t total = 0;
    std::int64_t node = 1;
    for (int i = 0; i < levels; ++i) {
        int fanin = i == 0 ? 0 : fanins[i - 1];
        for (std::int64_t t = 0; t < sizes[i]; ++t, ++node) {
            total += static_cast<std::size_t>(fanin);
            out.ctx_offsets[node] = static_cast<std::uint32_t>(total);
        }
    }
    total += static_cast<std::size_t>(fanins[levels - 1]);
    out.ctx_offsets[n] = static_cast<std::uint32_t>(total);
    require(total <= std::numeric_limits<std::uint32_t>::max(), "plan context storage too large");

    out.ctx_data.resize(total);
    for (int i = 1; i <= levels; ++i) {
        int fanin = fanins[i - 1];
        std::int64_t pool_lo = start[i - 1];
        std::int64_t pool_size = sizes[i - 1];
        std::int64_t first = start[i];
        std::int64_t count = i == levels ? 1 : sizes[i];
        for (std::int64_t t = 0; t < count; ++t) {
            std::uint32_t* ctx = out.ctx_data.data() + out.ctx_offsets[first + t - 1];
            for (int c = 0; c < fanin; ++c)
                ctx[c] = static_cast<std::uint32_t>(
                    pool_lo + static_cast<std::int64_t>(rng.next_below(pool_size)));
            std::sort(ctx, ctx + fanin);
        }
    }
}

Plan build_genetic(int levels, const std::vector<std::int64_t>& sizes,
                   const std::vector<int>& fanins, Rng& rng) {
    Plan plan;
    build_genetic_into(plan, levels, sizes, fanins, rng);
    return plan;
}

void build_random_sampling_into(Plan& out, std::int64_t n, int k, Rng& rng) {
    require(n >= 1, "n must be >= 1");
    require(k >= 1, "k must be >= 1");
    require(n <= kMaxPlanNodes, "plan too large");
    out.n = n;
    out.ctx_offsets.resize(n + 1);
    out.ctx_offsets[0] = 0;
    out.ctx_offsets[1] = 0;
    std::size_t total = 0;
    for (std::int64_t j = 2; j <= n; ++j) {
        total += static_cast<std::size_t>(k);
        out.ctx_offsets[j] = static_cast<std::uint32_t>(total);
    }
    require(total <= std::numeric_limits<std::uint32_t>::max(), "plan context storage too large");
    out.ctx_data.resize(total);
    for (std::int64_t j = 2; j <= n; ++j) {
        std::uint32_t* ctx = out.ctx_data.data() + out.ctx_offsets[j - 1];
        for (int c = 0; c < k; ++c)
            ctx[c] = static_cast<std::uint32_t>(1 + rng.next_below(j - 1));
        std::sort(ctx, ctx + k);
    }
}

Plan build_random_sampling(std::int64_t n, int k, Rng& rng) {
    Plan plan;
    build_random_sampling_into(plan, n, k, rng);
    return plan;
}

Plan build_sliding_window(std::int64_t n, int k) {
    require(n >= 1, "n must be >= 1");
    require(k >= 1, "k must be >= 1");
    require(n <= kMaxPlanNodes, "plan too large");
    Plan plan;
    plan.n = n;
    plan.ctx_offsets.resize(n + 1);
    plan.ctx_offsets[0] = 0;
    std::size_t total = 0;
    for (std::int64_t j = 1; j <= n; ++j) {
        std::int64_t lo = std::max<std::int64_t>(1, j - k);
        total += static_cast<std::size_t>(j - lo);
        plan.ctx_offsets[j] = static_cast<std::uint32_t>(total);
    }
    require(total <= std::numeric_limits<std::uint32_t>::max(), "plan context storage too large");
    plan.ctx_data.resize(total);
    for (std::int64_t j = 1; j <= n; ++j) {
        std::uint32_t* ctx = plan.ctx_data.data() + plan.ctx_offsets[j - 1];
        std::int64_t lo = std::max<std::int64_t>(1, j - k);
        for (std::int64_t i = lo; i < j; ++i)
            ctx[i - lo] = static_cast<std::uint32_t>(i);
    }
    return plan;
}

Plan build_plan(const PlanFamily& family, Rng& rng) {
    switch (family.kind) {
        case FamilyKind::Branching:
            return build_branching(family.levels, family.fanins);
        case FamilyKind::Genetic:
            return build_genetic(family.levels, family.sizes, family.fanins, rng);
        case FamilyKind::RandomSampling:
            return build_random_sampling(family.n, family.k, rng);
        case FamilyKind::SlidingWindow:
            return build_sliding_window(family.n, family.k);
    }
    throw std::invalid_argument("unknown plan family");
}

int depth(const Plan& plan) {
    std::vector<int> d(plan.n + 1, 0);
    int best = 0;
    for (std::int64_t k = 1; k <= plan.n; ++k) {
        int dk = 0;
        for (auto idx : plan.context(k)) dk = std::max(dk, d[idx] + 1);
        d[k] = dk;
        best = std::max(best, dk);
    }
    return best;
}

bool execute_into(const Plan& plan, const TransferFunction& tf, Rng& rng,
                  std::vector<std::uint8_t>& scores) {
    scores.assign(static_cast<std::size_t>(plan.n), 0);
    for (std::int64_t k = 1; k <= plan.n; ++k) {
        ContextCounts c;
        for (auto idx : plan.context(k)) c.correct += scores[idx - 1];
        c.incorrect = static_cast<int>(plan.context(k).size()) - c.correct;
        scores[k - 1] = tf.sample(c, rng) ? 1 : 0;
    }
    return scores[plan.n - 1] != 0;
}

ExecutionTrace execute(const Plan& plan, const TransferFunction& tf, Rng& rng) {
    ExecutionTrace trace;
    trace.seed = rng.key();
    trace.final = execute_into(plan, tf, rng, trace.scores);
    return trace;
}

double exact_success_prob(const Plan& plan, const TransferFunction& tf) {
    if (plan.n > kExactEnumerationMaxNodes)
        throw std::length_error("exact_success_prob handles at most " +
                                std::to_string(kExactEnumerationMaxNodes) + " calls");
    int n = static_cast<int>(plan.n);

    int max_ctx = 0;
    for (int k = 1; k <= n; ++k)
        max_ctx = std::max(max_ctx, static_cast<int>(plan.context(k).size()));
    // success_prob is pure, so tabulate it once per (correct, incorrect).
    std::vector<double> prob((max_ctx + 1) * (max_ctx + 1), 0.0);
    for (int a = 0; a <= max_ctx; ++a)
        for (int b = 0; a + b <= max_ctx; ++b)
            prob[a * (max_ctx + 1) + b] = tf.success_prob({a, b});

    double total = 0.0;
    const std::uint32_t final_bit = std::uint32_t{1} << (n - 1);
    const std::uint32_t top = std::uint32_t{1} << n;
    for (std::uint32_t mask = final_bit; mask < top; ++mask) {
        double weight = 1.0;
        for (int k = 1; k <= n && weight != 0.0; ++k) {
            int a = 0;
            auto ctx = plan.context(k);
            for (auto idx : ctx) a += (mask >> (idx - 1)) & 1u;
            double pk = prob[a * (max_ctx + 1) + (static_cast<int>(ctx.size()) - a)];
            weight *= (mask >> (k - 1)) & 1u ? pk : 1.0 - pk;
        }
        total += weight;
    }
    return total;
}

void for_each_plan(int n, const std::function<void(const Plan&)>& fn) {
    require(n >= 1, "n must be >= 1");
    if (n > kPlanEnumerationMaxNodes)
        throw std::length_error("plan enumeration handles at most " +
                                std::to_string(kPlanEnumerationMaxNodes) + " calls");
    // One subset mask of {1..k-1} per node; run through the full odometer.
    std::vector<std::uint32_t> choice(n, 0);
    Plan plan;
    plan.n = n;
    plan.ctx_offsets.assign(n + 1, 0);
    while (true) {
        plan.ctx_data.clear();
        for (int k = 1; k <= n; ++k) {
            for (int j = 1; j < k; ++j)
                if ((choice[k - 1] >> (j - 1)) & 1u)
                    plan.ctx_data.push_back(static_cast<std::uint32_t>(j));
            plan.ctx_offsets[k] = static_cast<std::uint32_t>(plan.ctx_data.size());
        }
        fn(plan);
        int k = 0;
        while (k < n) {
            std::uint32_t limit = std::uint32_t{1} << k;  // node k+1 has k predecessors
            if (++choice[k] < limit) break;
            choice[k] = 0;
            ++k;
        }
        if (k == n) break;
    }
}

std::vector<Plan> enumerate_plans(int n) {
    std::vector<Plan> plans;
    for_each_plan(n, [&](const Plan& p) { plans.push_back(p); });
    return plans;
}

nlohmann::json plan_to_json(const Plan& plan) {
    nlohmann::json contexts = nlohmann::json::array();
    for (std::int64_t k = 1; k <= plan.n; ++k) {
        auto ctx = plan.context(k);
        contexts.push_back(std::vector<std::uint32_t>(ctx.begin(), ctx.end()));
    }
    return {{"n", plan.n}, {"contexts", contexts}};
}

Plan plan_from_json(const nlohmann::json& j) {
    require(j.is_object() && j.contains("n") && j.contains("contexts"),
            "plan JSON needs \"n\" and \"contexts\"");
    auto contexts = j.at("contexts").get<std::vector<std::vector<std::uint32_t>>>();
    require(static_cast<std::int64_t>(contexts.size()) == j.at("n").get<std::int64_t>(),
            "plan JSON: n does not match the number of contexts");
    return make_plan(std::move(contexts));
}

Plan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open plan file " + path);
    nlohmann::json j;
    in >> j;
    return plan_from_json(j);
}

}  // namespace oraclesim
