#include "oraclesim/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace oraclesim {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Dense (correct, size) -> probability lookup so the trial loop never
// re-evaluates closed forms.
class ProbTable {
  public:
    ProbTable(const TransferFunction& tf, int max_size) : stride_(max_size + 1) {
        v_.resize(static_cast<std::size_t>(stride_) * stride_, 0.0);
        for (int size = 0; size <= max_size; ++size)
            for (int a = 0; a <= size; ++a)
                v_[static_cast<std::size_t>(a) * stride_ + size] =
                    tf.success_prob({a, size - a});
    }

    double at(int a, int size) const {
        return v_[static_cast<std::size_t>(a) * stride_ + size];
    }

  private:
    int stride_;
    std::vector<double> v_;
};

int max_context_size(const Plan& plan) {
    int m = 0;
    for (std::int64_t k = 1; k <= plan.n; ++k)
        m = std::max(m, static_cast<int>(plan.context(k).size()));
    return m;
}

bool run_plan(const Plan& plan, const ProbTable& probs, Rng& rng,
              std::vector<std::uint8_t>& scores) {
    scores.resize(static_cast<std::size_t>(plan.n));
    const std::uint32_t* data = plan.ctx_data.data();
    for (std::int64_t k = 1; k <= plan.n; ++k) {
        int lo = plan.ctx_offsets[k - 1], hi = plan.ctx_offsets[k];
        int a = 0;
        for (int i = lo; i < hi; ++i) a += scores[data[i] - 1];
        scores[k - 1] = rng.next_double() < probs.at(a, hi - lo) ? 1 : 0;
    }
    return scores[plan.n - 1] != 0;
}

int genetic_max_fanin(const PlanFamily& f) {
    int m = 0;
    for (int k : f.fanins) m = std::max(m, k);
    return m;
}

}  // namespace

std::pair<double, double> wilson_interval(std::int64_t successes, std::int64_t trials) {
    require(trials >= 1, "trials must be >= 1");
    require(successes >= 0 && successes <= trials, "successes out of range");
    const double z = 1.959963984540054;
    double n = static_cast<double>(trials);
    double p = static_cast<double>(successes) / n;
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double center = p + z2 / (2.0 * n);
    double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    // at the boundary counts the interval endpoint is exactly the boundary;
    // keep it free of subtraction dust
    double lo = successes == 0 ? 0.0 : std::max(0.0, (center - half) / denom);
    double hi = successes == trials ? 1.0 : std::min(1.0, (center + half) / denom);
    return {lo, hi};
}

RunStats run_trials(const PlanFamily& family, const TransferFunction& tf,
                    const RunConfig& cfg) {
    require(cfg.trials >= 1, "trials must be >= 1");
    require(cfg.workers >= 1, "workers must be >= 1");

    const bool rebuild = family.randomized();
    Rng root(cfg.base_seed);

    // Fixed-wiring families share one plan across trials; randomized ones
    // get rebuilt per trial below (trial 0 is built here so parameter errors
    // surface before any thread spawns).
    Rng probe = root.split(0).split(0);
    Plan shared = build_plan(family, probe);
    int max_size = rebuild ? std::max(max_context_size(shared), genetic_max_fanin(family))
                           : max_context_size(shared);
    ProbTable probs(tf, max_size);

    int workers = static_cast<int>(std::min<std::int64_t>(cfg.workers, cfg.trials));
    std::vector<std::int64_t> hits(workers, 0);
    auto work = [&](int w, std::int64_t lo, std::int64_t hi) {
        Plan local;
        std::vector<std::uint8_t> scores;
        std::int64_t count = 0;
        for (std::int64_t t = lo; t < hi; ++t) {
            Rng trial = root.split(static_cast<std::uint64_t>(t));
            const Plan* plan = &shared;
            if (rebuild) {
                Rng build = trial.split(0);
                if (family.kind == FamilyKind::Genetic)
                    build_genetic_into(local, family.levels, family.sizes, family.fanins,
                                       build);
                else
                    build_random_sampling_into(local, family.n, family.k, build);
                plan = &local;
            }
            Rng exec = trial.split(1);
            count += run_plan(*plan, probs, exec, scores) ? 1 : 0;
        }
        hits[w] = count;
    };

    if (workers == 1) {
        work(0, 0, cfg.trials);
    } else {
        std::vector<std::thread> pool;
        std::int64_t chunk = (cfg.trials + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            std::int64_t lo = w * chunk;
            std::int64_t hi = std::min<std::int64_t>(cfg.trials, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(work, w, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    RunStats stats;
    stats.trials = cfg.trials;
    for (auto h : hits) stats.successes += h;
    stats.p_hat = static_cast<double>(stats.successes) / static_cast<double>(cfg.trials);
    auto [lo, hi] = wilson_interval(stats.successes, stats.trials);
    stats.ci_low = lo;
    stats.ci_high = hi;
    stats.base_seed = cfg.base_seed;
    return stats;
}

std::vector<double> random_sampling_trajectory(const TransferFunction& tf, int k,
                                               std::int64_t n, std::uint64_t seed) {
    require(k >= 1, "k must be >= 1");
    require(n >= 1, "n must be >= 1");
    ProbTable probs(tf, k);
    Rng rng(seed);
    std::vector<std::uint8_t> scores(static_cast<std::size_t>(n));
    std::vector<double> running(static_cast<std::size_t>(n));
    std::int64_t correct = 0;
    for (std::int64_t j = 1; j <= n; ++j) {
        int a = 0, size = 0;
        if (j > 1) {
            size = k;
            for (int c = 0; c < k; ++c)
                a += scores[rng.next_below(static_cast<std::uint64_t>(j - 1))];
        }
        bool ok = rng.next_double() < probs.at(a, size);
        scores[j - 1] = ok ? 1 : 0;
        correct += ok ? 1 : 0;
        running[j - 1] = static_cast<double>(correct) / static_cast<double>(j);
    }
    return running;
}

double sliding_window_long_run(const TransferFunction& tf, int k, std::int64_t steps,
                               std::uint64_t seed) {
    require(k >= 1, "k must be >= 1");
    require(steps >= 1, "steps must be >= 1");
    ProbTable probs(tf, k);
    Rng rng(seed);
    std::vector<std::uint8_t> window(static_cast<std::size_t>(k), 0);
    std::int64_t correct = 0;
    int in_window = 0;
    for (std::int64_t j = 0; j < steps; ++j) {
        int size = static_cast<int>(std::min<std::int64_t>(j, k));
        bool ok = rng.next_double() < probs.at(in_window, size);
        correct += ok ? 1 : 0;
        std::uint8_t& slot = window[static_cast<std::size_t>(j % k)];
        if (j >= k) in_window -= slot;
        slot = ok ? 1 : 0;
        in_window += slot;
    }
    return static_cast<double>(correct) / static_cast<double>(steps);
}

ExponentFit fit_exponent(const std::vector<GapPoint>& points) {
    std::vector<double> xs, ys;
    for (const GapPoint& pt : points) {
        if (pt.gap <= 0.0 || pt.n <= 0.0) continue;
        xs.push_back(std::log(pt.n));
        ys.push_back(-std::log(pt.gap));
    }
    require(xs.size() >= 3, "exponent fit needs at least 3 points with positive gap");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (!(sxx > 0.0))
        throw std::runtime_error("exponent fit is degenerate: all call budgets equal");
    if (!(syy > 0.0))
        throw std::runtime_error("exponent fit is degenerate: all gaps equal");
    ExponentFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = (sxy * sxy) / (sxx * syy);
    fit.points_used = static_cast<int>(xs.size());
    return fit;
}

std::vector<GapPoint> gap_points(const std::vector<std::pair<double, RunStats>>& rows,
                                 double x_star) {
    std::vector<GapPoint> pts;
    for (const auto& [n, stats] : rows) {
        double gap = x_star - stats.p_hat;
        double sigma = std::sqrt(std::max(stats.p_hat * (1.0 - stats.p_hat), 1e-12) /
                                 static_cast<double>(stats.trials));
        if (std::abs(gap) < 3.0 * sigma) continue;
        pts.push_back({n, gap});
    }
    return pts;
}

std::vector<SweepRow> sweep(const SweepSpec& spec) {
    require(!spec.models.empty(), "sweep needs at least one model");
    require(!spec.families.empty(), "sweep needs at least one family");
    Rng root(spec.cfg.base_seed);
    std::vector<SweepRow> rows;
    std::uint64_t index = 0;
    for (const auto& mj : spec.models) {
        for (const auto& fj : spec.families) {
            SweepRow row;
            row.model = mj;
            row.family = fj;
            RunConfig cfg = spec.cfg;
            cfg.base_seed = root.split(index).key();
            ++index;
            try {
                TransferFunction tf = TransferFunction::from_json(mj);
                PlanFamily family = PlanFamily::from_json(fj);
                row.stats = run_trials(family, tf, cfg);
                row.ok = true;
            } catch (const std::exception& e) {
                row.ok = false;
                row.error = e.what();
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

nlohmann::json RunStats::to_json() const {
    return {{"trials", trials},   {"successes", successes}, {"p_hat", p_hat},
            {"ci_low", ci_low},   {"ci_high", ci_high},     {"seed", base_seed}};
}

nlohmann::json ExponentFit::to_json() const {
    return {{"slope", slope},
            {"intercept", intercept},
            {"r2", r2},
            {"points_used", points_used}};
}

nlohmann::json SweepRow::to_json() const {
    nlohmann::json j{{"model", model}, {"family", family}, {"ok", ok}};
    if (ok)
        j["stats"] = stats.to_json();
    else
        j["error"] = error;
    return j;
}

}  // namespace oraclesim
