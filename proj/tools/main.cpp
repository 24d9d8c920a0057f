// Command-line front end: every operation of the library behind one binary,
// with JSON/JSONL/CSV artifacts and a resolved-config file written next to
// every output so long sweeps stay auditable.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "oraclesim/analysis.hpp"
#include "oraclesim/harness.hpp"
#include "oraclesim/montecarlo.hpp"
#include "oraclesim/oracle.hpp"
#include "oraclesim/plan.hpp"

namespace {

using nlohmann::json;
using namespace oraclesim;

constexpr const char* kSynopsis =
    "usage: oraclesim {analyze|plan|simulate|sweep|fit-exponent|"
    "llm-gen|llm-sweep|llm-estimate|report} [flags]";

// Absent-value sentinels; a flag left at its sentinel after config layering
// is treated as missing.
constexpr double kNoDouble = std::numeric_limits<double>::quiet_NaN();
constexpr int kNoInt = std::numeric_limits<int>::min();
constexpr std::int64_t kNoInt64 = std::numeric_limits<std::int64_t>::min();

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return j;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
}

// Nested lookup with dotted paths ("stats.p_hat", "family.n"); numeric steps
// index arrays. Returns nullptr when any step is missing.
const json* find_path(const json& row, const std::string& path) {
    const json* node = &row;
    std::istringstream steps(path);
    std::string step;
    while (std::getline(steps, step, '.')) {
        if (step.empty()) continue;
        bool numeric = !step.empty() && step.find_first_not_of("0123456789") == std::string::npos;
        if (numeric && node->is_array()) {
            std::size_t i = std::stoul(step);
            if (i >= node->size()) return nullptr;
            node = &(*node)[i];
        } else if (node->is_object() && node->contains(step)) {
            node = &(*node)[step];
        } else {
            return nullptr;
        }
    }
    return node;
}

/**
 * Config layering for one subcommand: values come from the built-in default,
 * then the --config file, then explicit flags, later layers winning. Every
 * layered value is recorded so the fully resolved config can be written
 * next to the outputs.
 */
struct Scope {
    CLI::App* cmd = nullptr;
    json file = json::object();
    json resolved = json::object();

    void load(const std::string& config_path, const std::string& name) {
        if (!config_path.empty()) {
            file = load_json_file(config_path);
            if (!file.is_object())
                throw std::runtime_error(config_path + ": config must be a JSON object");
        }
        resolved["subcommand"] = name;
    }

    template <typename T>
    void layer(const std::string& name, T& var) {
        if (cmd->get_option("--" + name)->count() == 0 && file.contains(name))
            var = file.at(name).get<T>();
        record(name, var);
    }

    template <typename T>
    void record(const std::string& name, const T& var) {
        json v = var;
        // Sentinels mean "not set"; keep them out of the audit trail.
        if (v.is_number_float() && std::isnan(var_as_double(v))) return;
        if (v.is_number_integer() &&
            (v == json(kNoInt) || v == json(kNoInt64)))
            return;
        if (v.is_string() && v.get_ref<const std::string&>().empty()) return;
        if (v.is_array() && v.empty()) return;
        resolved[name] = v;
    }

    static double var_as_double(const json& v) { return v.get<double>(); }
};

double need(const Scope&, const char* name, double v) {
    if (std::isnan(v)) throw CLI::RequiredError(std::string("--") + name);
    return v;
}

int need(const Scope&, const char* name, int v) {
    if (v == kNoInt) throw CLI::RequiredError(std::string("--") + name);
    return v;
}

std::int64_t need(const Scope&, const char* name, std::int64_t v) {
    if (v == kNoInt64) throw CLI::RequiredError(std::string("--") + name);
    return v;
}

std::string need(const Scope&, const char* name, const std::string& v) {
    if (v.empty()) throw CLI::RequiredError(std::string("--") + name);
    return v;
}

// Emits a finished JSON report: pretty-printed to --out (with the resolved
// config beside it) or to stdout.
void emit_json(const Scope& scope, const std::string& out, const json& payload) {
    std::string text = payload.dump(2) + "\n";
    if (out.empty()) {
        std::cout << text;
        return;
    }
    write_text_file(out, text);
    write_text_file(out + ".config.json", scope.resolved.dump(2) + "\n");
}

void emit_lines(const Scope& scope, const std::string& out,
                const std::vector<json>& rows) {
    std::ostringstream text;
    for (const auto& row : rows) text << row.dump() << '\n';
    if (out.empty()) {
        std::cout << text.str();
        return;
    }
    write_text_file(out, text.str());
    write_text_file(out + ".config.json", scope.resolved.dump(2) + "\n");
}

std::vector<int> expand_fanins(const Scope& scope, int levels, int fanin,
                               std::vector<int> fanins) {
    if (fanins.empty()) {
        int k = need(scope, "fanin", fanin);
        fanins.assign(static_cast<std::size_t>(std::max(levels, 0)), k);
    }
    return fanins;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

void setup_analyze(CLI::App& app) {
    auto* analyze = app.add_subcommand("analyze", "Closed-form and numerical reports");
    analyze->require_subcommand(1);

    struct Common {
        std::string config;
        std::string out;
    };

    auto add_common = [](CLI::App* cmd, std::shared_ptr<Common> c) {
        cmd->add_option("--config", c->config, "JSON config file; flags override it");
        cmd->add_option("--out", c->out, "Write the report here instead of stdout");
    };

    {
        auto c = std::make_shared<Common>();
        auto p = std::make_shared<double>(kNoDouble);
        auto q = std::make_shared<double>(kNoDouble);
        auto k = std::make_shared<int>(kNoInt);
        auto* cmd = analyze->add_subcommand(
            "fixed-point", "Roots of x = q - (1-x)^k (q - p) and the selected one");
        cmd->add_option("--p", *p, "Base success rate (no correct context)");
        cmd->add_option("--q", *q, "Success rate with a correct solution in context");
        cmd->add_option("--k", *k, "Context size (fanin)");
        add_common(cmd, c);
        cmd->callback([=] {
            Scope s{cmd};
            s.load(c->config, "analyze fixed-point");
            s.layer("p", *p);
            s.layer("q", *q);
            s.layer("k", *k);
            s.record("out", c->out);
            auto report = solve_fixed_point(need(s, "q", *q), need(s, "p", *p),
                                            need(s, "k", *k));
            emit_json(s, c->out, report.to_json());
        });
    }
    {
        auto c = std::make_shared<Common>();
        auto model = std::make_shared<std::string>();
        auto k_max = std::make_shared<int>(64);
        auto* cmd = analyze->add_subcommand(
            "optimal", "Best limiting success rate over fanins 0..k_max");
        cmd->add_option("--model", *model, "Oracle model JSON file");
        cmd->add_option("--k-max", *k_max, "Largest fanin considered");
        add_common(cmd, c);
        cmd->callback([=] {
            Scope s{cmd};
            s.load(c->config, "analyze optimal");
            s.layer("model", *model);
            s.layer("k-max", *k_max);
            s.record("out", c->out);
            auto tf = TransferFunction::load(need(s, "model", *model));
            emit_json(s, c->out, optimal_success(tf, *k_max).to_json());
        });
    }
    {
        auto c = std::make_shared<Common>();
        auto model = std::make_shared<std::string>();
        auto levels = std::make_shared<int>(kNoInt);
        auto k_max = std::make_shared<int>(64);
        auto* cmd = analyze->add_subcommand(
            "fixed-depth", "Best success rate attainable at each depth 0..L");
        cmd->add_option("--model", *model, "Oracle model JSON file");
        cmd->add_option("--levels", *levels, "Depth bound L");
        cmd->add_option("--k-max", *k_max, "Largest fanin considered per level");
        add_common(cmd, c);
        cmd->callback([=] {
            Scope s{cmd};
            s.load(c->config, "analyze fixed-depth");
            s.layer("model", *model);
            s.layer("levels", *levels);
            s.layer("k-max", *k_max);
            s.record("out", c->out);
            auto tf = TransferFunction::load(need(s, "model", *model));
            int L = need(s, "levels", *levels);
            json out{{"values", fixed_depth_optimum(tf, L, *k_max)},
                     {"argmax", fixed_depth_argmax(tf, L, *k_max)}};
            emit_json(s, c->out, out);
        });
    }
    {
        auto c = std::make_shared<Common>();
        auto p = std::make_shared<double>(kNoDouble);
        auto q = std::make_shared<double>(kNoDouble);
        auto k = std::make_shared<int>(kNoInt);
        auto alg = std::make_shared<std::string>();
        auto* cmd = analyze->add_subcommand(
            "convergence", "Asymptotic rate of approach to the fixed point");
        cmd->add_option("--p", *p, "Base success rate");
        cmd->add_option("--q", *q, "With-correct-context success rate");
        cmd->add_option("--k", *k, "Context size (fanin)");
        cmd->add_option("--alg", *alg, "branching | genetic | random-sampling");
        add_common(cmd, c);
        cmd->callback([=] {
            Scope s{cmd};
            s.load(c->config, "analyze convergence");
            s.layer("p", *p);
            s.layer("q", *q);
            s.layer("k", *k);
            s.layer("alg", *alg);
            s.record("out", c->out);
            auto report = convergence_report(need(s, "p", *p), need(s, "q", *q),
                                             need(s, "k", *k),
                                             algorithm_from_string(need(s, "alg", *alg)));
            emit_json(s, c->out, report.to_json());
        });
    }
    {
        auto c = std::make_shared<Common>();
        auto p = std::make_shared<double>(kNoDouble);
        auto q = std::make_shared<double>(kNoDouble);
        auto k = std::make_shared<int>(kNoInt);
        auto* cmd = analyze->add_subcommand(
            "stationary", "Stationary law and long-run accuracy of the sliding window");
        cmd->add_option("--p", *p, "Base success rate");
        cmd->add_option("--q", *q, "With-correct-context success rate");
        cmd->add_option("--k", *k, "Window size");
        add_common(cmd, c);
        cmd->callback([=] {
            Scope s{cmd};
            s.load(c->config, "analyze stationary");
            s.layer("p", *p);
            s.layer("q", *q);
            s.layer("k", *k);
            s.record("out", c->out);
            auto report = sliding_window_stationary(need(s, "p", *p), need(s, "q", *q),
                                                    need(s, "k", *k));
            emit_json(s, c->out, report.to_json());
        });
    }
    {
        auto c = std::make_shared<Common>();
        auto x = std::make_shared<double>(kNoDouble);
        auto q = std::make_shared<double>(kNoDouble);
        auto* cmd = analyze->add_subcommand(
            "context-size", "Best context size under exponential decay");
        cmd->add_option("--x", *x, "Per-solution correctness probability");
        cmd->add_option("--q", *q, "Decay rate");
        add_common(cmd, c);
        cmd->callback([=] {
            Scope s{cmd};
            s.load(c->config, "analyze context-size");
            s.layer("x", *x);
            s.layer("q", *q);
            s.record("out", c->out);
            int k = optimal_context_size_exp(need(s, "x", *x), need(s, "q", *q));
            emit_json(s, c->out, json{{"k", k}});
        });
    }
    {
        auto c = std::make_shared<Common>();
        auto p = std::make_shared<double>(kNoDouble);
        auto q = std::make_shared<double>(kNoDouble);
        auto* cmd = analyze->add_subcommand(
            "exp-max", "Supremum success rate under exponential decay");
        cmd->add_option("--p", *p, "Base success rate");
        cmd->add_option("--q", *q, "Decay rate");
        add_common(cmd, c);
        cmd->callback([=] {
            Scope s{cmd};
            s.load(c->config, "analyze exp-max");
            s.layer("p", *p);
            s.layer("q", *q);
            s.record("out", c->out);
            double v = exp_decay_max_success(need(s, "p", *p), need(s, "q", *q));
            emit_json(s, c->out, json{{"max_success", v}});
        });
    }
    {
        auto c = std::make_shared<Common>();
        auto levels = std::make_shared<int>(kNoInt);
        auto eps = std::make_shared<double>(kNoDouble);
        auto probs = std::make_shared<std::vector<double>>();
        auto* cmd = analyze->add_subcommand(
            "genetic-sizes", "Population sizes keeping a genetic plan on its corridor");
        cmd->add_option("--levels", *levels, "Number of levels");
        cmd->add_option("--eps", *eps, "Corridor half-width");
        cmd->add_option("--probs", *probs, "Per-level success rates a_0..a_{L-1}")
            ->delimiter(',');
        add_common(cmd, c);
        cmd->callback([=] {
            Scope s{cmd};
            s.load(c->config, "analyze genetic-sizes");
            s.layer("levels", *levels);
            s.layer("eps", *eps);
            s.layer("probs", *probs);
            s.record("out", c->out);
            if (probs->empty()) throw CLI::RequiredError("--probs");
            auto sizes = genetic_population_sizes(need(s, "levels", *levels),
                                                  need(s, "eps", *eps), *probs);
            emit_json(s, c->out, json{{"sizes", sizes}});
        });
    }
    {
        auto c = std::make_shared<Common>();
        auto mu = std::make_shared<double>(kNoDouble);
        auto eps = std::make_shared<double>(kNoDouble);
        auto* cmd = analyze->add_subcommand(
            "chernoff", "Lower-tail bound exp(-eps^2 mu / 2)");
        cmd->add_option("--mu", *mu, "Mean of the binomial count");
        cmd->add_option("--eps", *eps, "Relative shortfall");
        add_common(cmd, c);
        cmd->callback([=] {
            Scope s{cmd};
            s.load(c->config, "analyze chernoff");
            s.layer("mu", *mu);
            s.layer("eps", *eps);
            s.record("out", c->out);
            double v = chernoff_lower_tail(need(s, "mu", *mu), need(s, "eps", *eps));
            emit_json(s, c->out, json{{"bound", v}});
        });
    }
    {
        auto c = std::make_shared<Common>();
        auto p = std::make_shared<double>(kNoDouble);
        auto q = std::make_shared<double>(kNoDouble);
        auto cc = std::make_shared<double>(kNoDouble);
        auto n = std::make_shared<int>(kNoInt);
        auto* cmd = analyze->add_subcommand(
            "poly-series", "The recursion p_{i+1} = c p_i^q and its limit");
        cmd->add_option("--p", *p, "Starting value p_0");
        cmd->add_option("--q", *q, "Exponent");
        cmd->add_option("--c", *cc, "Multiplier");
        cmd->add_option("--n", *n, "Number of steps");
        add_common(cmd, c);
        cmd->callback([=] {
            Scope s{cmd};
            s.load(c->config, "analyze poly-series");
            s.layer("p", *p);
            s.layer("q", *q);
            s.layer("c", *cc);
            s.layer("n", *n);
            s.record("out", c->out);
            auto series = poly_decay_series(need(s, "p", *p), need(s, "q", *q),
                                            need(s, "c", *cc), need(s, "n", *n));
            emit_json(s, c->out, series.to_json());
        });
    }
    {
        auto c = std::make_shared<Common>();
        auto p = std::make_shared<double>(kNoDouble);
        auto q = std::make_shared<double>(kNoDouble);
        auto eps = std::make_shared<double>(kNoDouble);
        auto* cmd = analyze->add_subcommand(
            "poly-steps", "Steps for the series above to reach (1-eps) of its limit");
        cmd->add_option("--p", *p, "Starting value p_0");
        cmd->add_option("--q", *q, "Exponent");
        cmd->add_option("--eps", *eps, "Relative shortfall from the limit");
        add_common(cmd, c);
        cmd->callback([=] {
            Scope s{cmd};
            s.load(c->config, "analyze poly-steps");
            s.layer("p", *p);
            s.layer("q", *q);
            s.layer("eps", *eps);
            s.record("out", c->out);
            int steps = poly_decay_steps(need(s, "p", *p), need(s, "q", *q),
                                         need(s, "eps", *eps));
            emit_json(s, c->out, json{{"steps", steps}});
        });
    }
    {
        auto c = std::make_shared<Common>();
        auto model = std::make_shared<std::string>();
        auto horizon = std::make_shared<int>(16);
        auto* cmd = analyze->add_subcommand(
            "monotonicity", "Weak/strong monotonicity scan of an oracle model");
        cmd->add_option("--model", *model, "Oracle model JSON file");
        cmd->add_option("--horizon", *horizon, "Scan cells with a+b < horizon");
        add_common(cmd, c);
        cmd->callback([=] {
            Scope s{cmd};
            s.load(c->config, "analyze monotonicity");
            s.layer("model", *model);
            s.layer("horizon", *horizon);
            s.record("out", c->out);
            auto tf = TransferFunction::load(need(s, "model", *model));
            auto r = tf.check_monotonicity(*horizon);
            json out{{"weak", r.weak}, {"strong", r.strong}};
            if (r.first_violation)
                out["first_violation"] = {r.first_violation->first,
                                          r.first_violation->second};
            else
                out["first_violation"] = nullptr;
            emit_json(s, c->out, out);
        });
    }
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

void emit_plan(const Scope& scope, const std::string& out, const Plan& plan) {
    json pj = plan_to_json(plan);
    if (out.empty()) {
        std::cout << pj.dump(2) << "\n";
        return;
    }
    write_text_file(out, pj.dump(2) + "\n");
    write_text_file(out + ".config.json", scope.resolved.dump(2) + "\n");
    std::cout << json{{"out", out}, {"n", plan.n}, {"depth", depth(plan)}}.dump() << "\n";
}

void setup_plan(CLI::App& app) {
    auto* plan = app.add_subcommand("plan", "Materialize one plan of a family to JSON");
    plan->require_subcommand(1);

    {
        auto config = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto levels = std::make_shared<int>(kNoInt);
        auto fanin = std::make_shared<int>(kNoInt);
        auto fanins = std::make_shared<std::vector<int>>();
        auto* cmd = plan->add_subcommand("branching", "Complete fanin tree of a given depth");
        cmd->add_option("--levels", *levels, "Tree depth");
        cmd->add_option("--fanin", *fanin, "Fanin used at every level");
        cmd->add_option("--fanins", *fanins, "Per-level fanins k_1..k_L")->delimiter(',');
        cmd->add_option("--config", *config, "JSON config file; flags override it");
        cmd->add_option("--out", *out, "Plan file to write");
        cmd->callback([=, p = cmd] {
            Scope s{p};
            s.load(*config, "plan branching");
            s.layer("levels", *levels);
            s.layer("fanin", *fanin);
            s.layer("fanins", *fanins);
            s.record("out", *out);
            int L = need(s, "levels", *levels);
            auto ks = expand_fanins(s, L, *fanin, *fanins);
            s.resolved["fanins"] = ks;
            emit_plan(s, *out, build_branching(L, ks));
        });
    }
    {
        auto config = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto levels = std::make_shared<int>(kNoInt);
        auto fanin = std::make_shared<int>(kNoInt);
        auto fanins = std::make_shared<std::vector<int>>();
        auto sizes = std::make_shared<std::vector<std::int64_t>>();
        auto seed = std::make_shared<std::uint64_t>(0);
        auto* cmd = plan->add_subcommand("genetic", "Population pipeline with sampled parents");
        cmd->add_option("--levels", *levels, "Number of levels (defaults to the size count)");
        cmd->add_option("--sizes", *sizes, "Population sizes s_1..s_L")->delimiter(',');
        cmd->add_option("--fanin", *fanin, "Fanin used at every level");
        cmd->add_option("--fanins", *fanins, "Per-level fanins k_1..k_L")->delimiter(',');
        auto* seed_opt = cmd->add_option("--seed", *seed, "Wiring seed (required)");
        cmd->add_option("--config", *config, "JSON config file; flags override it");
        cmd->add_option("--out", *out, "Plan file to write");
        cmd->callback([=, p = cmd] {
            Scope s{p};
            s.load(*config, "plan genetic");
            s.layer("levels", *levels);
            s.layer("sizes", *sizes);
            s.layer("fanin", *fanin);
            s.layer("fanins", *fanins);
            s.record("out", *out);
            if (seed_opt->count() == 0 && s.file.contains("seed"))
                *seed = s.file.at("seed").get<std::uint64_t>();
            else if (seed_opt->count() == 0)
                throw CLI::RequiredError("--seed");
            s.resolved["seed"] = *seed;
            if (sizes->empty()) throw CLI::RequiredError("--sizes");
            int L = *levels == kNoInt ? static_cast<int>(sizes->size()) : *levels;
            s.resolved["levels"] = L;
            auto ks = expand_fanins(s, L, *fanin, *fanins);
            s.resolved["fanins"] = ks;
            Rng rng(*seed);
            emit_plan(s, *out, build_genetic(L, *sizes, ks, rng));
        });
    }
    {
        auto config = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto n = std::make_shared<std::int64_t>(kNoInt64);
        auto k = std::make_shared<int>(kNoInt);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto* cmd = plan->add_subcommand(
            "random-sampling", "Chain drawing each context i.i.d. from all predecessors");
        cmd->add_option("--n", *n, "Number of calls");
        cmd->add_option("--k", *k, "Context size");
        auto* seed_opt = cmd->add_option("--seed", *seed, "Wiring seed (required)");
        cmd->add_option("--config", *config, "JSON config file; flags override it");
        cmd->add_option("--out", *out, "Plan file to write");
        cmd->callback([=, p = cmd] {
            Scope s{p};
            s.load(*config, "plan random-sampling");
            s.layer("n", *n);
            s.layer("k", *k);
            s.record("out", *out);
            if (seed_opt->count() == 0 && s.file.contains("seed"))
                *seed = s.file.at("seed").get<std::uint64_t>();
            else if (seed_opt->count() == 0)
                throw CLI::RequiredError("--seed");
            s.resolved["seed"] = *seed;
            Rng rng(*seed);
            emit_plan(s, *out,
                      build_random_sampling(need(s, "n", *n), need(s, "k", *k), rng));
        });
    }
    {
        auto config = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto n = std::make_shared<std::int64_t>(kNoInt64);
        auto k = std::make_shared<int>(kNoInt);
        auto* cmd = plan->add_subcommand(
            "sliding-window", "Chain whose context is the k most recent calls");
        cmd->add_option("--n", *n, "Number of calls");
        cmd->add_option("--k", *k, "Window size");
        cmd->add_option("--config", *config, "JSON config file; flags override it");
        cmd->add_option("--out", *out, "Plan file to write");
        cmd->callback([=, p = cmd] {
            Scope s{p};
            s.load(*config, "plan sliding-window");
            s.layer("n", *n);
            s.layer("k", *k);
            s.record("out", *out);
            emit_plan(s, *out, build_sliding_window(need(s, "n", *n), need(s, "k", *k)));
        });
    }
}

// ---------------------------------------------------------------------------
// simulate and sweep
// ---------------------------------------------------------------------------

PlanFamily family_from_flags(const Scope& s, const std::string& name, std::int64_t n,
                             int k, int levels, int fanin,
                             const std::vector<int>& fanins,
                             const std::vector<std::int64_t>& sizes) {
    if (name == "branching") {
        int L = need(s, "levels", levels);
        return PlanFamily::branching(
            L, expand_fanins(s, L, fanin, fanins));
    }
    if (name == "genetic") {
        if (sizes.empty()) throw CLI::RequiredError("--sizes");
        int L = levels == kNoInt ? static_cast<int>(sizes.size()) : levels;
        return PlanFamily::genetic(L, sizes, expand_fanins(s, L, fanin, fanins));
    }
    if (name == "random-sampling" || name == "random")
        return PlanFamily::random_sampling(need(s, "n", n), need(s, "k", k));
    if (name == "sliding-window" || name == "sliding")
        return PlanFamily::sliding_window(need(s, "n", n), need(s, "k", k));
    throw std::invalid_argument("unknown family \"" + name +
                                "\" (branching, genetic, random-sampling, sliding-window)");
}

void setup_simulate(CLI::App& app) {
    auto config = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto model = std::make_shared<std::string>();
    auto family = std::make_shared<std::string>();
    auto n = std::make_shared<std::int64_t>(kNoInt64);
    auto k = std::make_shared<int>(kNoInt);
    auto levels = std::make_shared<int>(kNoInt);
    auto fanin = std::make_shared<int>(kNoInt);
    auto fanins = std::make_shared<std::vector<int>>();
    auto sizes = std::make_shared<std::vector<std::int64_t>>();
    auto trials = std::make_shared<std::int64_t>(kNoInt64);
    auto workers = std::make_shared<int>(1);
    auto seed = std::make_shared<std::uint64_t>(0);

    auto* cmd = app.add_subcommand(
        "simulate", "Monte Carlo estimate of a plan family's success rate");
    cmd->add_option("--model", *model, "Oracle model JSON file");
    cmd->add_option("--family", *family,
                    "branching | genetic | random-sampling | sliding-window");
    cmd->add_option("--n", *n, "Number of calls (chain families)");
    cmd->add_option("--k", *k, "Context size (chain families)");
    cmd->add_option("--levels", *levels, "Tree depth (branching, genetic)");
    cmd->add_option("--fanin", *fanin, "Fanin used at every level");
    cmd->add_option("--fanins", *fanins, "Per-level fanins")->delimiter(',');
    cmd->add_option("--sizes", *sizes, "Population sizes (genetic)")->delimiter(',');
    cmd->add_option("--trials", *trials, "Monte Carlo trials");
    cmd->add_option("--workers", *workers, "Worker threads");
    auto* seed_opt = cmd->add_option("--seed", *seed, "Base seed (required)");
    cmd->add_option("--config", *config, "JSON config file; flags override it");
    cmd->add_option("--out", *out, "Result JSONL file instead of stdout");

    cmd->callback([=] {
        Scope s{cmd};
        s.load(*config, "simulate");
        s.layer("model", *model);
        s.layer("family", *family);
        s.layer("n", *n);
        s.layer("k", *k);
        s.layer("levels", *levels);
        s.layer("fanin", *fanin);
        s.layer("fanins", *fanins);
        s.layer("sizes", *sizes);
        s.layer("trials", *trials);
        s.layer("workers", *workers);
        s.record("out", *out);
        if (seed_opt->count() == 0 && s.file.contains("seed"))
            *seed = s.file.at("seed").get<std::uint64_t>();
        else if (seed_opt->count() == 0)
            throw CLI::RequiredError("--seed");
        s.resolved["seed"] = *seed;

        auto tf = TransferFunction::load(need(s, "model", *model));
        auto fam = family_from_flags(s, need(s, "family", *family), *n, *k, *levels,
                                     *fanin, *fanins, *sizes);
        RunConfig rc;
        rc.trials = need(s, "trials", *trials);
        rc.base_seed = *seed;
        rc.workers = *workers;
        RunStats stats = run_trials(fam, tf, rc);
        json row = stats.to_json();
        row["model"] = tf.to_json();
        row["family"] = fam.to_json();
        emit_lines(s, *out, {row});
    });
}

void setup_sweep(CLI::App& app) {
    auto config = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto spec_path = std::make_shared<std::string>();
    auto trials = std::make_shared<std::int64_t>(kNoInt64);
    auto workers = std::make_shared<int>(1);
    auto seed = std::make_shared<std::uint64_t>(0);

    auto* cmd = app.add_subcommand(
        "sweep", "run_trials over the cross product of models and families");
    cmd->add_option("--spec", *spec_path,
                    "JSON file with \"models\" and \"families\" arrays");
    cmd->add_option("--trials", *trials, "Monte Carlo trials per row");
    cmd->add_option("--workers", *workers, "Worker threads per row");
    auto* seed_opt = cmd->add_option("--seed", *seed, "Root seed (required)");
    cmd->add_option("--config", *config, "JSON config file; flags override it");
    cmd->add_option("--out", *out, "Row JSONL file instead of stdout");

    cmd->callback([=] {
        Scope s{cmd};
        s.load(*config, "sweep");
        s.layer("spec", *spec_path);
        s.layer("trials", *trials);
        s.layer("workers", *workers);
        s.record("out", *out);
        if (seed_opt->count() == 0 && s.file.contains("seed"))
            *seed = s.file.at("seed").get<std::uint64_t>();
        else if (seed_opt->count() == 0)
            throw CLI::RequiredError("--seed");
        s.resolved["seed"] = *seed;

        json spec_json = load_json_file(need(s, "spec", *spec_path));
        SweepSpec spec;
        for (const auto& m : spec_json.value("models", json::array()))
            spec.models.push_back(m);
        for (const auto& f : spec_json.value("families", json::array()))
            spec.families.push_back(f);
        spec.cfg.trials = need(s, "trials", *trials);
        spec.cfg.base_seed = *seed;
        spec.cfg.workers = *workers;

        std::vector<json> rows;
        for (const auto& row : sweep(spec)) rows.push_back(row.to_json());
        emit_lines(s, *out, rows);
    });
}

// ---------------------------------------------------------------------------
// fit-exponent
// ---------------------------------------------------------------------------

void setup_fit_exponent(CLI::App& app) {
    auto config = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto in = std::make_shared<std::string>();
    auto x_star = std::make_shared<double>(kNoDouble);
    auto x_field = std::make_shared<std::string>("family.n");

    auto* cmd = app.add_subcommand(
        "fit-exponent", "Power-law fit of the gap to x_star against call budget");
    cmd->add_option("--in", *in, "Row JSONL from simulate or sweep");
    cmd->add_option("--x-star", *x_star, "Limiting success rate the gap is measured from");
    cmd->add_option("--x-field", *x_field, "Dotted path of the call budget in each row");
    cmd->add_option("--config", *config, "JSON config file; flags override it");
    cmd->add_option("--out", *out, "Report file instead of stdout");

    cmd->callback([=] {
        Scope s{cmd};
        s.load(*config, "fit-exponent");
        s.layer("in", *in);
        s.layer("x-star", *x_star);
        s.layer("x-field", *x_field);
        s.record("out", *out);

        std::ifstream rows_in(need(s, "in", *in));
        if (!rows_in) throw std::runtime_error("cannot open " + *in);
        std::vector<std::pair<double, RunStats>> rows;
        std::string line;
        int lineno = 0;
        while (std::getline(rows_in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json row;
            try {
                row = json::parse(line);
            } catch (const json::exception& e) {
                throw std::runtime_error("line " + std::to_string(lineno) +
                                         ": not valid JSON: " + e.what());
            }
            if (row.value("ok", true) == false) continue;  // failed sweep rows carry no data
            const json* x = find_path(row, *x_field);
            // Sweep rows nest their statistics; simulate rows keep them flat.
            const json* stats = row.contains("stats") ? &row["stats"] : &row;
            if (x == nullptr || !x->is_number())
                throw std::runtime_error("line " + std::to_string(lineno) +
                                         ": missing numeric field \"" + *x_field + "\"");
            for (const char* want : {"p_hat", "trials", "successes"}) {
                if (!stats->contains(want))
                    throw std::runtime_error("line " + std::to_string(lineno) +
                                             ": missing field \"" + want + "\"");
            }
            RunStats st;
            st.trials = (*stats)["trials"].get<std::int64_t>();
            st.successes = (*stats)["successes"].get<std::int64_t>();
            st.p_hat = (*stats)["p_hat"].get<double>();
            rows.emplace_back(x->get<double>(), st);
        }
        auto points = gap_points(rows, need(s, "x-star", *x_star));
        ExponentFit fit = fit_exponent(points);
        json report = fit.to_json();
        report["x_star"] = *x_star;
        report["rows_read"] = static_cast<int>(rows.size());
        emit_json(s, *out, report);
    });
}

// ---------------------------------------------------------------------------
// llm subcommands
// ---------------------------------------------------------------------------

Question load_question(const std::string& path) {
    json j = load_json_file(path);
    Question q;
    q.id = j.value("id", std::string());
    q.text = j.value("text", std::string());
    q.gold_answer = j.value("gold_answer", std::string());
    if (q.id.empty() || q.gold_answer.empty())
        throw std::runtime_error(path + ": question needs \"id\" and \"gold_answer\"");
    return q;
}

struct LlmSetup {
    Question question;
    EndpointConfig endpoint;
    std::unique_ptr<Transport> transport;
};

LlmSetup make_llm_setup(Scope& s, const std::string& question_path,
                        const std::string& endpoint_path, const std::string& transport_name,
                        const std::string& stub_model, std::uint64_t seed) {
    LlmSetup setup;
    setup.question = load_question(question_path);
    if (!endpoint_path.empty())
        setup.endpoint = EndpointConfig::from_json(load_json_file(endpoint_path));
    if (transport_name == "http") {
        if (endpoint_path.empty()) throw CLI::RequiredError("--endpoint");
        setup.transport = std::make_unique<HttpTransport>(setup.endpoint);
    } else if (transport_name == "oracle-stub") {
        if (stub_model.empty()) throw CLI::RequiredError("--stub-model");
        if (setup.endpoint.model_name.empty()) setup.endpoint.model_name = "oracle-stub";
        setup.transport = std::make_unique<OracleStub>(
            TransferFunction::load(stub_model), seed,
            std::map<std::string, std::string>{
                {setup.question.id, setup.question.gold_answer}});
    } else if (transport_name == "random-picker") {
        if (setup.endpoint.model_name.empty()) setup.endpoint.model_name = "random-picker";
        setup.transport = std::make_unique<RandomPickerStub>(seed);
    } else {
        throw std::invalid_argument("unknown transport \"" + transport_name +
                                    "\" (http, oracle-stub, random-picker)");
    }
    s.resolved["endpoint"] = setup.endpoint.to_json();
    return setup;
}

void setup_llm_gen(CLI::App& app) {
    auto config = std::make_shared<std::string>();
    auto question = std::make_shared<std::string>();
    auto endpoint = std::make_shared<std::string>();
    auto transport = std::make_shared<std::string>("http");
    auto stub_model = std::make_shared<std::string>();
    auto n = std::make_shared<std::int64_t>(kNoInt64);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto out_bank = std::make_shared<std::string>();
    auto out_transcripts = std::make_shared<std::string>();

    auto* cmd = app.add_subcommand(
        "llm-gen", "Generate and grade empty-context solutions into a bank");
    cmd->add_option("--question", *question, "Question JSON {id, text, gold_answer}");
    cmd->add_option("--endpoint", *endpoint, "Endpoint config JSON (http transport)");
    cmd->add_option("--transport", *transport, "http | oracle-stub | random-picker");
    cmd->add_option("--stub-model", *stub_model, "Oracle model for the oracle-stub transport");
    cmd->add_option("--n", *n, "Number of generation calls");
    auto* seed_opt = cmd->add_option("--seed", *seed, "Seed (required)");
    cmd->add_option("--out-bank", *out_bank, "Solution bank file to write");
    cmd->add_option("--out-transcripts", *out_transcripts, "Transcript JSONL to write");
    cmd->add_option("--config", *config, "JSON config file; flags override it");

    cmd->callback([=] {
        Scope s{cmd};
        s.load(*config, "llm-gen");
        s.layer("question", *question);
        s.layer("endpoint", *endpoint);
        s.layer("transport", *transport);
        s.layer("stub-model", *stub_model);
        s.layer("n", *n);
        s.layer("out-bank", *out_bank);
        s.layer("out-transcripts", *out_transcripts);
        if (seed_opt->count() == 0 && s.file.contains("seed"))
            *seed = s.file.at("seed").get<std::uint64_t>();
        else if (seed_opt->count() == 0)
            throw CLI::RequiredError("--seed");
        s.resolved["seed"] = *seed;

        auto setup = make_llm_setup(s, need(s, "question", *question), *endpoint,
                                    *transport, *stub_model, *seed);
        std::vector<Transcript> log;
        SolutionBank bank =
            generate_base_solutions(setup.question, need(s, "n", *n), *setup.transport,
                                    setup.endpoint, *seed, &log);
        std::string bank_path = need(s, "out-bank", *out_bank);
        bank.save(bank_path);
        write_text_file(bank_path + ".config.json", s.resolved.dump(2) + "\n");
        if (!out_transcripts->empty()) write_transcripts(*out_transcripts, log);
        std::cout << json{{"bank", bank_path},
                          {"calls", *n},
                          {"ok_calls", bank.base_cell.n_calls},
                          {"correct", bank.correct_pool.size()},
                          {"incorrect", bank.incorrect_pool.size()},
                          {"base_acc", bank.base_cell.acc}}
                         .dump()
                  << "\n";
    });
}

void setup_llm_sweep(CLI::App& app) {
    auto config = std::make_shared<std::string>();
    auto question = std::make_shared<std::string>();
    auto bank_path = std::make_shared<std::string>();
    auto endpoint = std::make_shared<std::string>();
    auto transport = std::make_shared<std::string>("http");
    auto stub_model = std::make_shared<std::string>();
    auto protocol = std::make_shared<std::string>();
    auto b_max = std::make_shared<int>(kNoInt);
    auto total = std::make_shared<int>(kNoInt);
    auto calls = std::make_shared<std::int64_t>(30);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto out = std::make_shared<std::string>();
    auto out_transcripts = std::make_shared<std::string>();

    auto* cmd = app.add_subcommand(
        "llm-sweep", "Run a context-composition protocol against a solution bank");
    cmd->add_option("--question", *question, "Question JSON {id, text, gold_answer}");
    cmd->add_option("--bank", *bank_path, "Solution bank (updated in place: used ids)");
    cmd->add_option("--endpoint", *endpoint, "Endpoint config JSON (http transport)");
    cmd->add_option("--transport", *transport, "http | oracle-stub | random-picker");
    cmd->add_option("--stub-model", *stub_model, "Oracle model for the oracle-stub transport");
    cmd->add_option("--protocol", *protocol, "one-correct | fixed-total");
    cmd->add_option("--b-max", *b_max, "Largest incorrect count (one-correct)");
    cmd->add_option("--total", *total, "Context size (fixed-total)");
    cmd->add_option("--calls", *calls, "Calls per configuration");
    auto* seed_opt = cmd->add_option("--seed", *seed, "Seed (required)");
    cmd->add_option("--out", *out, "Accuracy-cell JSONL instead of stdout");
    cmd->add_option("--out-transcripts", *out_transcripts,
                    "Transcript JSONL, appended to (the experiment ledger)");
    cmd->add_option("--config", *config, "JSON config file; flags override it");

    cmd->callback([=] {
        Scope s{cmd};
        s.load(*config, "llm-sweep");
        s.layer("question", *question);
        s.layer("bank", *bank_path);
        s.layer("endpoint", *endpoint);
        s.layer("transport", *transport);
        s.layer("stub-model", *stub_model);
        s.layer("protocol", *protocol);
        s.layer("b-max", *b_max);
        s.layer("total", *total);
        s.layer("calls", *calls);
        s.layer("out-transcripts", *out_transcripts);
        s.record("out", *out);
        if (seed_opt->count() == 0 && s.file.contains("seed"))
            *seed = s.file.at("seed").get<std::uint64_t>();
        else if (seed_opt->count() == 0)
            throw CLI::RequiredError("--seed");
        s.resolved["seed"] = *seed;

        auto setup = make_llm_setup(s, need(s, "question", *question), *endpoint,
                                    *transport, *stub_model, *seed);
        SolutionBank bank = SolutionBank::load(need(s, "bank", *bank_path));
        std::vector<Transcript> log;
        std::vector<AccuracyCell> cells;
        std::string proto = need(s, "protocol", *protocol);
        if (proto == "one-correct") {
            cells = run_one_correct_sweep(setup.question, bank, need(s, "b-max", *b_max),
                                          *calls, *setup.transport, setup.endpoint, *seed,
                                          &log);
        } else if (proto == "fixed-total") {
            cells = run_fixed_total_sweep(setup.question, bank, need(s, "total", *total),
                                          *calls, *setup.transport, setup.endpoint, *seed,
                                          &log);
        } else {
            throw std::invalid_argument("unknown protocol \"" + proto +
                                        "\" (one-correct, fixed-total)");
        }
        bank.save(*bank_path);  // persists the used-id ledger for resume
        if (!out_transcripts->empty())
            write_transcripts(*out_transcripts, log, /*append=*/true);
        std::vector<json> rows;
        for (const auto& c : cells) rows.push_back(c.to_json());
        emit_lines(s, *out, rows);
    });
}

void setup_llm_estimate(CLI::App& app) {
    auto config = std::make_shared<std::string>();
    auto transcripts_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto k_max = std::make_shared<int>(kNoInt);
    auto horizon = std::make_shared<int>(64);

    auto* cmd = app.add_subcommand(
        "llm-estimate", "Fit an empirical oracle model from transcripts");
    cmd->add_option("--transcripts", *transcripts_path, "Transcript JSONL to fit from");
    cmd->add_option("--k-max", *k_max,
                    "Also report the best limiting success rate over fanins 0..k_max");
    cmd->add_option("--horizon", *horizon,
                    "Table horizon for the decaying projection behind --k-max");
    cmd->add_option("--config", *config, "JSON config file; flags override it");
    cmd->add_option("--out", *out, "Report file instead of stdout");

    cmd->callback([=] {
        Scope s{cmd};
        s.load(*config, "llm-estimate");
        s.layer("transcripts", *transcripts_path);
        s.layer("k-max", *k_max);
        s.layer("horizon", *horizon);
        s.record("out", *out);

        auto ts = read_transcripts(need(s, "transcripts", *transcripts_path));
        TransferFunction tf = fit_empirical_transfer(ts);
        json report{{"model", tf.to_json()},
                    {"base_acc", tf.fallback()},
                    {"transcripts", ts.size()},
                    {"cells", tf.cells().size()}};
        if (*k_max != kNoInt) {
            auto best = optimal_success(tf.to_decaying(*horizon), *k_max);
            report["optimal"] = best.to_json();
        }
        emit_json(s, *out, report);
    });
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string csv_cell(const json& v) {
    if (v.is_string()) return csv_escape(v.get<std::string>());
    if (v.is_null()) return "";
    if (v.is_object() || v.is_array()) return csv_escape(v.dump());
    return v.dump();
}

void flatten_keys(const json& row, const std::string& prefix,
                  std::vector<std::string>& order, std::set<std::string>& seen) {
    for (const auto& [key, value] : row.items()) {
        std::string path = prefix.empty() ? key : prefix + "." + key;
        if (value.is_object()) {
            flatten_keys(value, path, order, seen);
        } else if (seen.insert(path).second) {
            order.push_back(path);
        }
    }
}

void setup_report(CLI::App& app) {
    auto config = std::make_shared<std::string>();
    auto in = std::make_shared<std::string>();
    auto format = std::make_shared<std::string>();
    auto x_field = std::make_shared<std::string>();
    auto y_field = std::make_shared<std::string>();
    auto columns = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();

    auto* cmd = app.add_subcommand(
        "report", "Re-serialize result JSONL as csv, json, or plotdata");
    cmd->add_option("--in", *in, "Result JSONL file");
    cmd->add_option("--format", *format, "csv | json | plotdata");
    cmd->add_option("--x", *x_field, "Dotted path of the swept parameter (plotdata)");
    cmd->add_option("--y", *y_field, "Dotted path of the measured value (plotdata)");
    cmd->add_option("--columns", *columns, "Column paths for csv (default: all)")
        ->delimiter(',');
    cmd->add_option("--config", *config, "JSON config file; flags override it");
    cmd->add_option("--out", *out, "Output file instead of stdout");

    cmd->callback([=] {
        Scope s{cmd};
        s.load(*config, "report");
        s.layer("in", *in);
        s.layer("format", *format);
        s.layer("x", *x_field);
        s.layer("y", *y_field);
        s.layer("columns", *columns);
        s.record("out", *out);

        std::ifstream rows_in(need(s, "in", *in));
        if (!rows_in) throw std::runtime_error("cannot open " + *in);
        std::vector<json> rows;
        std::string line;
        int lineno = 0;
        while (std::getline(rows_in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json row;
            try {
                row = json::parse(line);
            } catch (const json::exception& e) {
                throw std::runtime_error("line " + std::to_string(lineno) +
                                         ": not valid JSON: " + e.what());
            }
            if (!row.is_object())
                throw std::runtime_error("line " + std::to_string(lineno) +
                                         ": expected a JSON object");
            rows.push_back(std::move(row));
        }

        std::string fmt = need(s, "format", *format);
        std::ostringstream text;
        if (fmt == "json") {
            text << json(rows).dump(2) << "\n";
        } else if (fmt == "csv") {
            std::vector<std::string> cols = *columns;
            if (cols.empty()) {
                std::set<std::string> seen;
                for (const auto& row : rows) flatten_keys(row, "", cols, seen);
            }
            for (std::size_t i = 0; i < cols.size(); ++i)
                text << (i ? "," : "") << csv_escape(cols[i]);
            text << "\n";
            for (std::size_t r = 0; r < rows.size(); ++r) {
                for (std::size_t i = 0; i < cols.size(); ++i) {
                    const json* v = find_path(rows[r], cols[i]);
                    text << (i ? "," : "") << (v ? csv_cell(*v) : "");
                }
                text << "\n";
            }
        } else if (fmt == "plotdata") {
            std::string xf = need(s, "x", *x_field);
            std::string yf = need(s, "y", *y_field);
            // Header names the swept parameter so plots label themselves.
            text << csv_escape(xf) << "," << csv_escape(yf) << "\n";
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const json* x = find_path(rows[r], xf);
                const json* y = find_path(rows[r], yf);
                if (x == nullptr)
                    throw std::runtime_error("line " + std::to_string(r + 1) +
                                             ": missing field \"" + xf + "\"");
                if (y == nullptr)
                    throw std::runtime_error("line " + std::to_string(r + 1) +
                                             ": missing field \"" + yf + "\"");
                text << csv_cell(*x) << "," << csv_cell(*y) << "\n";
            }
        } else {
            throw std::invalid_argument("unknown format \"" + fmt +
                                        "\" (csv, json, plotdata)");
        }

        if (out->empty()) {
            std::cout << text.str();
        } else {
            write_text_file(*out, text.str());
            write_text_file(*out + ".config.json", s.resolved.dump(2) + "\n");
        }
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation and analysis of reasoning plans over a probabilistic "
                 "solution oracle"};
    app.require_subcommand(1);

    setup_analyze(app);
    setup_plan(app);
    setup_simulate(app);
    setup_sweep(app);
    setup_fit_exponent(app);
    setup_llm_gen(app);
    setup_llm_sweep(app);
    setup_llm_estimate(app);
    setup_report(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);  // help goes to stdout, errors to stderr
        if (rc == 0) return 0;
        std::cerr << kSynopsis << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
