// End-to-end gate for the whole library. Each numbered check prints one
// PASS/FAIL line; the binary exits nonzero if any fail. Every tolerance and
// time budget is pinned here rather than in a config so a green run means
// exactly the same thing on every machine.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oraclesim/analysis.hpp"
#include "oraclesim/harness.hpp"
#include "oraclesim/montecarlo.hpp"
#include "oraclesim/oracle.hpp"
#include "oraclesim/plan.hpp"
#include "oraclesim/rng.hpp"

using namespace oraclesim;

namespace {

const double kXStar = std::sqrt(0.2);  // fixed point of x = 0.6 - 0.5(1-x)^2

struct Gate {
    bool ok = true;
    std::ostringstream why;

    void expect(bool cond, const std::string& what) {
        if (cond) return;
        if (!ok) why << "; ";
        ok = false;
        why << what;
    }
    void expect_near(double got, double want, double tol, const std::string& what) {
        if (std::abs(got - want) <= tol) return;
        std::ostringstream ss;
        ss << what << " (got " << std::setprecision(12) << got << ", want " << want
           << " +/- " << tol << ")";
        expect(false, ss.str());
    }
};

int failures = 0;

template <typename Fn>
void run_check(const std::string& name, Fn&& fn) {
    Gate g;
    auto t0 = std::chrono::steady_clock::now();
    try {
        fn(g);
    } catch (const std::exception& e) {
        g.expect(false, std::string("threw: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                      .count();
    std::ostringstream line;
    line << (g.ok ? "[PASS] " : "[FAIL] ") << name << " (" << std::fixed
         << std::setprecision(2) << secs << "s)";
    if (!g.ok) {
        line << ": " << g.why.str();
        ++failures;
    }
    std::cout << line.str() << std::endl;
}

double elapsed(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Every context list of `plan`, as mutable vectors.
std::vector<std::vector<std::uint32_t>> contexts_of(const Plan& plan) {
    std::vector<std::vector<std::uint32_t>> out(plan.n);
    for (std::int64_t node = 1; node <= plan.n; ++node) {
        auto span = plan.context(node);
        out[node - 1].assign(span.begin(), span.end());
    }
    return out;
}

}  // namespace

int main() {
    const TransferFunction uniform = TransferFunction::uniform(0.1, 0.6, 2);

    run_check("01 fixed-point closed forms", [&](Gate& g) {
        auto t0 = std::chrono::steady_clock::now();

        g.expect_near(solve_fixed_point(0.6, 0.1, 0).selected, 0.1, 1e-12,
                      "k=0 returns the base rate");
        g.expect_near(solve_fixed_point(0.6, 0.1, 1).selected, 0.2, 1e-12,
                      "k=1 returns g/(1-f+g)");

        auto unique = solve_fixed_point(0.6, 0.1, 2);
        g.expect_near(unique.selected, kXStar, 1e-9, "k=2 root");
        g.expect_near(unique.selected, 0.4472136, 5e-8, "k=2 root, display precision");

        auto two = solve_fixed_point(0.6, 0.0, 2);
        g.expect(two.roots.size() == 2, "zero base with kf>1 has two roots");
        if (two.roots.size() == 2) {
            g.expect_near(two.roots[0], 0.0, 1e-12, "first root is 0");
            g.expect_near(two.roots[1], 1.0 / 3.0, 1e-9, "second root is 1/3");
        }

        auto zero = solve_fixed_point(0.4, 0.0, 2);
        g.expect(zero.roots.size() == 1, "zero base with kf<=1 has one root");
        if (!zero.roots.empty())
            g.expect_near(zero.roots[0], 0.0, 1e-12, "that root is 0");

        g.expect(elapsed(t0) < 1.0, "runs in under a second");
    });

    run_check("02 no plan beats the fixed point", [&](Gate& g) {
        auto t0 = std::chrono::steady_clock::now();
        std::size_t plans_at_5 = 0;
        std::int64_t over = 0;
        for (std::int64_t n = 1; n <= 5; ++n) {
            auto plans = enumerate_plans(n);
            if (n == 5) plans_at_5 = plans.size();
            for (const auto& plan : plans) {
                if (exact_success_prob(plan, uniform) > kXStar + 1e-9) ++over;
            }
        }
        g.expect(plans_at_5 == 1024, "1024 plans at n=5, got " +
                                         std::to_string(plans_at_5));
        g.expect(over == 0, std::to_string(over) + " plans exceed the ceiling");
        g.expect(elapsed(t0) < 10.0, "runs in under ten seconds");
    });

    run_check("03 depth-limited plans cap at the level optimum", [&](Gate& g) {
        auto levels = fixed_depth_optimum(uniform, 3);

        double best_so_far = 0.0;
        std::vector<double> best_by_depth(4, 0.0);
        for (std::int64_t n = 1; n <= 5; ++n) {
            for (const auto& plan : enumerate_plans(n)) {
                int d = depth(plan);
                if (d <= 3)
                    best_by_depth[d] =
                        std::max(best_by_depth[d], exact_success_prob(plan, uniform));
            }
        }
        for (int L = 0; L <= 3; ++L) {
            best_so_far = std::max(best_so_far, best_by_depth[L]);
            g.expect(best_so_far <= levels[L] + 1e-9,
                     "depth<=" + std::to_string(L) + " enumeration exceeds a_L");
        }

        // The greedy branching tree attains each level optimum exactly.
        g.expect_near(exact_success_prob(make_plan({{}}), uniform), levels[0], 1e-12,
                      "single call attains a_0");
        for (int L = 1; L <= 3; ++L) {
            auto fanins = fixed_depth_argmax(uniform, L);
            Plan plan = build_branching(L, fanins);
            g.expect_near(exact_success_prob(plan, uniform), levels[L], 1e-12,
                          "depth-" + std::to_string(L) + " branching attains a_L");
        }
    });

    run_check("04 context never hurts a monotone oracle", [&](Gate& g) {
        // Cap 8 keeps every reachable cell inside the q plateau, which makes
        // this fixture strongly monotone over the scanned horizon.
        TransferFunction strong = TransferFunction::uniform(0.1, 0.6, 8);
        g.expect(strong.check_monotonicity(8).strong, "fixture is strongly monotone");

        std::int64_t dropped = 0;
        for (std::int64_t n = 1; n <= 5; ++n) {
            for (const auto& plan : enumerate_plans(n)) {
                double base = exact_success_prob(plan, strong);
                auto ctx = contexts_of(plan);
                for (std::int64_t node = 2; node <= n; ++node) {
                    for (std::uint32_t j = 1; j < node; ++j) {
                        const auto& have = ctx[node - 1];
                        if (std::find(have.begin(), have.end(), j) != have.end())
                            continue;
                        auto grown = ctx;
                        grown[node - 1].push_back(j);
                        double with_edge =
                            exact_success_prob(make_plan(grown), strong);
                        if (with_edge < base - 1e-12) ++dropped;
                    }
                }
            }
        }
        g.expect(dropped == 0,
                 std::to_string(dropped) + " single-edge additions lowered success");
    });

    run_check("05 branching gap shrinks at the predicted rate", [&](Gate& g) {
        auto t0 = std::chrono::steady_clock::now();
        auto levels = fixed_depth_optimum(uniform, 12);
        std::vector<GapPoint> points;
        for (int L = 2; L <= 12; ++L)
            points.push_back({std::pow(2.0, L), kXStar - levels[L]});
        ExponentFit fit = fit_exponent(points);
        g.expect(fit.points_used == 11, "all eleven levels contribute");
        g.expect_near(fit.slope, 0.85504, 0.085504, "gap exponent within 10%");
        g.expect(elapsed(t0) < 1.0, "runs in under a second");
    });

    run_check("06 sliding window stalls below the fixed point", [&](Gate& g) {
        auto rep = sliding_window_stationary(0.1, 0.6, 2);
        g.expect_near(rep.pi[0], 1.0 / 3.0, 1e-12, "closed-form pi(0)");

        double worst = 0.0;
        for (std::size_t j = 0; j < rep.pi.size(); ++j)
            worst = std::max(worst, std::abs(rep.pi[j] - rep.pi_power[j]));
        g.expect(worst <= 1e-10, "power iteration agrees with the closed form");

        double sim = sliding_window_long_run(uniform, 2, 1000000, 20240816);
        g.expect_near(sim, 1.0 / 3.0, 0.005, "million-step simulation");

        g.expect(rep.pi[0] < kXStar - 0.1, "stationary accuracy sits below x*-0.1");
    });

    run_check("07 random sampling converges in mean", [&](Gate& g) {
        auto t0 = std::chrono::steady_clock::now();
        double sum = 0.0;
        for (int s = 0; s < 100; ++s) {
            auto xs = random_sampling_trajectory(uniform, 2, 100000, 1000 + s);
            sum += xs.back();
        }
        g.expect_near(sum / 100.0, 0.4472, 0.01, "mean of X_100000 over 100 seeds");
        g.expect(elapsed(t0) < 120.0, "runs in under two minutes");
    });

    run_check("08 sized genetic run stays on its corridor", [&](Gate& g) {
        auto levels = fixed_depth_optimum(uniform, 3);
        std::vector<double> probs(levels.begin(), levels.begin() + 3);
        auto sizes = genetic_population_sizes(3, 0.1, probs);
        g.expect(sizes == std::vector<std::int64_t>({6803, 3489, 2465}),
                 "population sizes match the frozen values");

        TransferFunction weakened = uniform.scaled(1.0 - 0.1 / 8.0);
        RunConfig cfg;
        cfg.trials = 10000;
        cfg.base_seed = 20240818;
        auto stats = run_trials(PlanFamily::genetic(3, sizes, {2, 2, 2}), weakened, cfg);
        g.expect(stats.p_hat >= levels[3] - 0.2,
                 "weakened success " + std::to_string(stats.p_hat) +
                     " fell below a_3 - 2*eps");
    });

    run_check("09 exponential decay optima", [&](Gate& g) {
        // Brute force over k of (1 - (1-x)^k) q^(k-1), smallest k on ties.
        std::int64_t mismatched = 0;
        for (int i = 1; i <= 50; ++i) {
            for (int j = 1; j <= 50; ++j) {
                double x = i / 51.0, q = j / 51.0;
                int best_k = 1;
                double best = (1.0 - std::pow(1.0 - x, 1)) * 1.0;
                for (int k = 2; k <= 400; ++k) {
                    double v = (1.0 - std::pow(1.0 - x, k)) * std::pow(q, k - 1);
                    if (v > best) {
                        best = v;
                        best_k = k;
                    }
                }
                if (optimal_context_size_exp(x, q) != best_k) ++mismatched;
            }
        }
        g.expect(mismatched == 0,
                 std::to_string(mismatched) + " grid cells disagree with brute force");

        g.expect_near(exp_decay_max_success(0.1, 0.8), 0.75, 1e-12, "ceiling at q=0.8");
        g.expect_near(exp_decay_max_success(0.1, 0.5), 0.1, 1e-12, "ceiling at q=0.5");

        auto trajectory =
            branching_success(TransferFunction::exp_decay(0.1, 0.8), std::vector<int>(120, 2));
        g.expect(trajectory.back() >= 0.75 - 0.02,
                 "pair branching reaches the ceiling within 120 levels");
    });

    run_check("10 polynomial decay series and step count", [&](Gate& g) {
        for (double p : {0.01, 0.05, 0.1, 0.2, 0.4}) {
            for (double q : {0.3, 0.5, 0.7}) {
                for (double c : {0.1, 0.2642, 0.5}) {
                    auto series = poly_decay_series(p, q, c, 15);
                    double v = p;
                    for (std::size_t i = 1; i < series.values.size(); ++i) {
                        v = c * std::pow(v, q);
                        double rel = std::abs(series.values[i] - v) /
                                     std::max(v, 1e-300);
                        if (rel > 1e-12) {
                            g.expect(false, "closed form drifts from iteration at p=" +
                                                std::to_string(p));
                            break;
                        }
                    }
                }
            }
        }

        auto spot = poly_decay_series(0.01, 0.5, 0.2642, 2);
        g.expect_near(spot.values[2], 0.0429435, 1e-5, "two-step spot value");

        for (double p : {0.01, 0.05, 0.1, 0.3, 0.5}) {
            for (double q : {0.3, 0.5, 0.7, 0.9}) {
                for (double eps : {0.01, 0.05, 0.1, 0.2}) {
                    int n = poly_decay_steps(p, q, eps);
                    double bound =
                        10.0 * (std::log(std::log(1.0 / p)) + std::log(1.0 / eps)) / q;
                    if (n > bound) {
                        std::ostringstream ss;
                        ss << "step count " << n << " beats its bound " << bound
                           << " at p=" << p << " q=" << q << " eps=" << eps;
                        g.expect(false, ss.str());
                    }
                }
            }
        }
    });

    run_check("11 context protocols on the stub transport", [&](Gate& g) {
        Question q{"acc-q", "Which candidate is right?", "42"};
        EndpointConfig ec;
        ec.model_name = "random-picker";

        // One correct solution among b wrong ones: the picker lands on the
        // right one with probability exactly 1/(b+1).
        SolutionBank bank = make_synthetic_bank(q, 13 * 500, 78 * 500);
        RandomPickerStub picker(20240819);
        auto cells = run_one_correct_sweep(q, bank, 12, 500, picker, ec, 20240819);
        g.expect(cells.size() == 13, "one cell per context size");
        for (const auto& cell : cells) {
            double want = 1.0 / (cell.b + 1);
            double se = std::sqrt(want * (1.0 - want) / 500.0);
            g.expect_near(cell.acc, want, 3.0 * se + 1e-12,
                          "picker accuracy at b=" + std::to_string(cell.b));
        }

        std::vector<AccuracyCell> mix;
        for (int a = 0; a <= 5; ++a)
            mix.push_back(
                AccuracyCell::from_counts(a, 5 - a, static_cast<std::int64_t>(2 * a), 10));
        g.expect(binomial_mixture_accuracy(0.5, mix) == 0.5,
                 "dyadic mixture is exact");

        // 30 calls/cell over b = 0..12 consumes 30 * 78 = 2340 wrong
        // solutions; one fewer must be refused up front.
        SolutionBank short_bank = make_synthetic_bank(q, 390, 2339);
        bool threw = false;
        try {
            RandomPickerStub p2(7);
            run_one_correct_sweep(q, short_bank, 12, 30, p2, ec, 7);
        } catch (const std::runtime_error& e) {
            threw = true;
            g.expect(std::string(e.what()).find("2340") != std::string::npos,
                     "refusal names the required pool size");
        }
        g.expect(threw, "short bank is refused");
        g.expect(short_bank.used_ids.empty(), "refused sweep consumes nothing");

        SolutionBank exact_bank = make_synthetic_bank(q, 390, 2340);
        RandomPickerStub p3(8);
        run_one_correct_sweep(q, exact_bank, 12, 30, p3, ec, 8);
        g.expect(exact_bank.unused_incorrect() == 0, "exact bank drains to zero");
    });

    run_check("12 transcripts round-trip to the right optimum", [&](Gate& g) {
        std::vector<std::pair<int, int>> grid;
        for (int a = 0; a <= 3; ++a)
            for (int b = 0; a + b <= 3; ++b) grid.push_back({a, b});
        auto ts = simulate_transcripts(uniform, grid, 10000, 20240820);
        TransferFunction fitted = fit_empirical_transfer(ts);
        auto best = optimal_success(fitted.to_decaying(8), 8);
        g.expect_near(best.x_star, 0.4472, 0.03, "fitted fixed point");
    });

    run_check("13 identical seeds give identical artifacts", [&](Gate& g) {
        RunConfig one;
        one.trials = 4000;
        one.base_seed = 99;
        one.workers = 1;
        RunConfig four = one;
        four.workers = 4;
        auto rs = PlanFamily::random_sampling(2000, 2);
        g.expect(run_trials(rs, uniform, one).to_json().dump() ==
                     run_trials(rs, uniform, four).to_json().dump(),
                 "random-sampling stats depend on worker count");

        auto gen = PlanFamily::genetic(2, {40, 25}, {2, 2});
        g.expect(run_trials(gen, uniform, one).to_json().dump() ==
                     run_trials(gen, uniform, four).to_json().dump(),
                 "genetic stats depend on worker count");

        auto dump_ts = [](const std::vector<Transcript>& ts) {
            std::string out;
            for (const auto& t : ts) out += t.to_json().dump() + "\n";
            return out;
        };
        auto ts_a = simulate_transcripts(uniform, {{0, 0}, {1, 1}}, 2000, 5);
        auto ts_b = simulate_transcripts(uniform, {{0, 0}, {1, 1}}, 2000, 5);
        g.expect(dump_ts(ts_a) == dump_ts(ts_b), "synthetic transcripts drift");

        Question q{"det-q", "Pick one.", "42"};
        EndpointConfig ec;
        ec.model_name = "random-picker";
        std::string cells_dump[2], ts_dump[2];
        for (int rep = 0; rep < 2; ++rep) {
            SolutionBank bank = make_synthetic_bank(q, 100, 100);
            RandomPickerStub picker(31);
            std::vector<Transcript> log;
            auto cells = run_one_correct_sweep(q, bank, 2, 20, picker, ec, 31, &log);
            for (const auto& c : cells) cells_dump[rep] += c.to_json().dump() + "\n";
            ts_dump[rep] = dump_ts(log);
        }
        g.expect(cells_dump[0] == cells_dump[1], "sweep cells drift across reruns");
        g.expect(ts_dump[0] == ts_dump[1], "sweep transcripts drift across reruns");
    });

    if (failures == 0) {
        std::cout << "all checks passed" << std::endl;
        return 0;
    }
    std::cout << failures << " check(s) failed" << std::endl;
    return 1;
}
