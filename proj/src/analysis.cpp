#include "oraclesim/analysis.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace oraclesim {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

double residual(double x, double f, double g, int k) {
    return x - f + std::pow(1.0 - x, k) * (f - g);
}

// Bisects residual(x) on [lo, hi] with residual(lo) < 0 <= residual(hi),
// running until the bracket collapses to adjacent doubles.
double bisect(double lo, double hi, double f, double g, int k) {
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (residual(mid, f, g, k) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

constexpr int kBracketCells = 1024;

// First sign change of the residual strictly right of `from`.
double bracket_and_bisect(double from, double f, double g, int k) {
    double lo = from;
    for (int i = 1; i <= kBracketCells; ++i) {
        double x = static_cast<double>(i) / kBracketCells;
        if (x <= from) continue;
        if (residual(x, f, g, k) >= 0.0) return bisect(lo, x, f, g, k);
        lo = x;
    }
    throw std::runtime_error("fixed-point bracketing found no sign change");
}

}  // namespace

const char* to_string(FixedPointCase c) {
    switch (c) {
        case FixedPointCase::K0: return "k0";
        case FixedPointCase::K1: return "k1";
        case FixedPointCase::K1Degenerate: return "k1-degenerate";
        case FixedPointCase::Unique: return "unique";
        case FixedPointCase::ZeroOnly: return "zero-only";
        case FixedPointCase::TwoRoots: return "two-roots";
    }
    return "?";
}

FixedPointReport solve_fixed_point(double f_k, double g_k, int k) {
    require(k >= 0, "fanin k must be >= 0");
    FixedPointReport rep;
    rep.k = k;
    rep.f_k = clamp_probability(f_k, "f_k");
    rep.g_k = clamp_probability(g_k, "g_k");
    const double f = rep.f_k, g = rep.g_k;

    if (k == 0) {
        rep.fp_case = FixedPointCase::K0;
        rep.roots = {g};
    } else if (k == 1) {
        if (g == 0.0 && f == 1.0) {
            rep.fp_case = FixedPointCase::K1Degenerate;
            rep.roots = {1.0};
        } else {
            rep.fp_case = FixedPointCase::K1;
            rep.roots = {g / (1.0 - f + g)};
        }
    } else if (g > 0.0) {
        rep.fp_case = FixedPointCase::Unique;
        rep.roots = {bracket_and_bisect(0.0, f, g, k)};
    } else if (k * f <= 1.0) {
        rep.fp_case = FixedPointCase::ZeroOnly;
        rep.roots = {0.0};
    } else {
        rep.fp_case = FixedPointCase::TwoRoots;
        // 0 is always a root here; the positive one sits where the residual
        // (negative just right of 0) crosses back. If it hides below the
        // first grid cell, shrink the left edge until the sign shows.
        double cell = 1.0 / kBracketCells;
        double lo = 0.0;
        if (residual(cell, f, 0.0, k) >= 0.0) {
            double probe = cell;
            while (probe > 1e-300 && residual(probe, f, 0.0, k) >= 0.0) probe *= 0.5;
            rep.roots = {0.0, bisect(probe, std::min(1.0, probe * 2.0), f, 0.0, k)};
        } else {
            rep.roots = {0.0, bracket_and_bisect(cell, f, 0.0, k)};
        }
    }
    rep.selected = rep.roots.back();
    return rep;
}

OptimalSuccess optimal_success(const TransferFunction& tf, int k_max) {
    require(tf.is_decaying_family(),
            "optimal_success needs a decaying-family model (project empirical "
            "tables with to_decaying first)");
    require(k_max >= 0, "k_max must be >= 0");
    OptimalSuccess best;
    best.x_star = -1.0;
    for (int k = 0; k <= k_max; ++k) {
        if (k >= 1 && tf.f_at(k) <= best.x_star) continue;
        FixedPointReport rep = solve_fixed_point(tf.f_at(k), tf.g_at(k), k);
        if (rep.fp_case == FixedPointCase::K1Degenerate) continue;
        if (rep.selected > best.x_star) {
            best.x_star = rep.selected;
            best.argmax_k = k;
        }
    }
    return best;
}

std::vector<double> fixed_depth_optimum(const TransferFunction& tf, int levels, int k_max) {
    require(tf.is_decaying_family(), "fixed_depth_optimum needs a decaying-family model");
    require(levels >= 0, "levels must be >= 0");
    require(k_max >= 1, "k_max must be >= 1");
    std::vector<double> a(levels + 1);
    a[0] = tf.g_at(0);
    for (int i = 1; i <= levels; ++i) {
        double best = 0.0;
        for (int k = 1; k <= k_max; ++k) {
            double f = tf.f_at(k), g = tf.g_at(k);
            if (f <= best) continue;
            best = std::max(best, f - std::pow(1.0 - a[i - 1], k) * (f - g));
        }
        a[i] = best;
    }
    return a;
}

std::vector<int> fixed_depth_argmax(const TransferFunction& tf, int levels, int k_max) {
    require(tf.is_decaying_family(), "fixed_depth_argmax needs a decaying-family model");
    require(levels >= 1, "levels must be >= 1");
    require(k_max >= 1, "k_max must be >= 1");
    std::vector<int> ks(levels);
    double a = tf.g_at(0);
    for (int i = 0; i < levels; ++i) {
        double best = -1.0;
        int best_k = 1;
        for (int k = 1; k <= k_max; ++k) {
            double f = tf.f_at(k), g = tf.g_at(k);
            if (f <= best) continue;
            double v = f - std::pow(1.0 - a, k) * (f - g);
            if (v > best) {
                best = v;
                best_k = k;
            }
        }
        ks[i] = best_k;
        a = best;
    }
    return ks;
}

std::vector<double> branching_success(const TransferFunction& tf,
                                      const std::vector<int>& fanins) {
    require(tf.is_decaying_family(), "branching_success needs a decaying-family model");
    std::vector<double> a(fanins.size() + 1);
    a[0] = tf.g_at(0);
    for (std::size_t i = 0; i < fanins.size(); ++i) {
        int k = fanins[i];
        require(k >= 1, "fanins must be >= 1");
        a[i + 1] = tf.f_at(k) - std::pow(1.0 - a[i], k) * (tf.f_at(k) - tf.g_at(k));
    }
    return a;
}

const char* to_string(AlgorithmKind a) {
    switch (a) {
        case AlgorithmKind::Branching: return "branching";
        case AlgorithmKind::Genetic: return "genetic";
        case AlgorithmKind::RandomSampling: return "random-sampling";
    }
    return "?";
}

AlgorithmKind algorithm_from_string(const std::string& name) {
    if (name == "branching") return AlgorithmKind::Branching;
    if (name == "genetic") return AlgorithmKind::Genetic;
    if (name == "random-sampling") return AlgorithmKind::RandomSampling;
    throw std::invalid_argument("unknown algorithm \"" + name + "\"");
}

ConvergenceReport convergence_report(double p, double q, int k, AlgorithmKind algorithm) {
    require(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0 && p < q,
            "convergence_report needs 0 < p < q < 1");
    require(k >= 1, "fanin k must be >= 1");
    ConvergenceReport rep;
    rep.p = p;
    rep.q = q;
    rep.k = k;
    rep.algorithm = algorithm;
    rep.x_star = solve_fixed_point(q, p, k).selected;
    rep.derivative = k * (q - rep.x_star) / (1.0 - rep.x_star);
    require(rep.derivative > 0.0 && rep.derivative < 1.0,
            "update-map derivative must lie in (0, 1)");
    switch (algorithm) {
        case AlgorithmKind::Branching:
            require(k >= 2, "branching rate is undefined at fanin 1");
            rep.exponent = -std::log(rep.derivative) / std::log(static_cast<double>(k));
            break;
        case AlgorithmKind::Genetic:
            rep.exponent = 0.5;
            break;
        case AlgorithmKind::RandomSampling:
            rep.exponent = std::min(0.5, 1.0 - rep.derivative);
            break;
    }
    return rep;
}

StationaryReport sliding_window_stationary(double p, double q, int k) {
    require(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0 && p <= q,
            "sliding_window_stationary needs 0 < p <= q < 1");
    require(k >= 1, "window k must be >= 1");
    StationaryReport rep;
    rep.p = p;
    rep.q = q;
    rep.k = k;

    double r = 1.0 - q;
    double norm = (1.0 - std::pow(r, k)) / q + std::pow(r, k) / p;
    rep.pi.resize(k + 1);
    for (int j = 0; j < k; ++j) rep.pi[j] = std::pow(r, j) / norm;
    rep.pi[k] = std::pow(r, k) / (p * norm);
    rep.success = rep.pi[0];

    // Power iteration from the empty-history state.
    std::vector<double> x(k + 1, 0.0), next(k + 1, 0.0);
    x[k] = 1.0;
    int iter = 0;
    for (; iter < 10'000'000; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int j = 0; j < k; ++j) {
            next[0] += x[j] * q;
            next[j + 1] += x[j] * (1.0 - q);
        }
        next[0] += x[k] * p;
        next[k] += x[k] * (1.0 - p);
        double diff = 0.0;
        for (int j = 0; j <= k; ++j) diff = std::max(diff, std::abs(next[j] - x[j]));
        x.swap(next);
        if (diff < 1e-12) break;
    }
    rep.pi_power = x;
    rep.iterations = iter + 1;
    return rep;
}

int optimal_context_size_exp(double x, double q) {
    require(x > 0.0 && x < 1.0, "x must lie strictly inside (0, 1)");
    require(q > 0.0 && q < 1.0, "q must lie strictly inside (0, 1)");
    double t = std::log((1.0 - q) / (1.0 - (1.0 - x) * q)) / std::log(1.0 - x);
    double k = std::floor(1.0 + t);
    return k < 1.0 ? 1 : static_cast<int>(k);
}

double exp_decay_max_success(double p, double q) {
    clamp_probability(p, "p");
    clamp_probability(q, "q");
    return q > 0.0 ? std::max(p, 2.0 - 1.0 / q) : p;
}

std::vector<std::int64_t> genetic_population_sizes(int levels, double eps,
                                                   const std::vector<double>& level_probs) {
    require(levels >= 1, "levels must be >= 1");
    require(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
    require(static_cast<int>(level_probs.size()) == levels,
            "need one level probability per level");
    std::vector<std::int64_t> sizes(levels);
    for (int i = 0; i < levels; ++i) {
        double pi = level_probs[i];
        require(pi > 0.0 && pi <= 1.0, "level probabilities must lie in (0, 1]");
        sizes[i] = static_cast<std::int64_t>(
            std::ceil(-2.0 * std::log(eps / levels) / (pi * eps * eps)));
    }
    return sizes;
}

double chernoff_lower_tail(double mu, double eps) {
    require(mu >= 0.0, "mu must be >= 0");
    require(eps >= 0.0 && eps <= 1.0, "eps must lie in [0, 1]");
    return std::exp(-eps * eps * mu / 2.0);
}

PolySeries poly_decay_series(double p, double q, double c, int n) {
    require(p > 0.0 && p <= 1.0, "p must lie in (0, 1]");
    require(q > 0.0 && q < 1.0, "q must lie strictly inside (0, 1)");
    require(c > 0.0 && c <= 1.0, "c must lie in (0, 1]");
    require(n >= 0, "n must be >= 0");
    PolySeries s;
    s.limit = std::pow(c, 1.0 / (1.0 - q));
    s.values.resize(n + 1);
    s.values[0] = p;
    for (int i = 1; i <= n; ++i) s.values[i] = c * std::pow(s.values[i - 1], q);
    for (int i = 0; i <= n; ++i) {
        double qn = std::pow(q, i);
        double closed = std::pow(p, qn) * std::pow(c, (1.0 - qn) / (1.0 - q));
        if (std::abs(s.values[i] - closed) > 1e-12 * std::max(std::abs(closed), 1e-300))
            throw std::runtime_error("poly series: iterative and closed forms diverged");
    }
    return s;
}

int poly_decay_steps(double p, double q, double eps) {
    require(p > 0.0 && p <= 0.5, "p must lie in (0, 1/2]");
    require(q > 0.0 && q < 1.0, "q must lie strictly inside (0, 1)");
    require(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
    const double c = 1.0 - 2.0 / std::exp(1.0);
    const double target = (1.0 - eps) * std::pow(c, 1.0 / (1.0 - q));
    double v = p;
    for (int n = 0; n < 10'000'000; ++n) {
        if (v >= target) return n;
        v = c * std::pow(v, q);
    }
    throw std::runtime_error("poly_decay_steps failed to converge");
}

nlohmann::json FixedPointReport::to_json() const {
    return {{"k", k},          {"f_k", f_k},           {"g_k", g_k},
            {"roots", roots},  {"selected", selected}, {"case", to_string(fp_case)}};
}

nlohmann::json OptimalSuccess::to_json() const {
    return {{"x_star", x_star}, {"argmax_k", argmax_k}};
}

nlohmann::json ConvergenceReport::to_json() const {
    return {{"p", p},
            {"q", q},
            {"k", k},
            {"algorithm", to_string(algorithm)},
            {"x_star", x_star},
            {"derivative", derivative},
            {"exponent", exponent}};
}

nlohmann::json StationaryReport::to_json() const {
    return {{"p", p},
            {"q", q},
            {"k", k},
            {"pi", pi},
            {"pi_power", pi_power},
            {"success", success},
            {"iterations", iterations}};
}

nlohmann::json PolySeries::to_json() const {
    return {{"values", values}, {"limit", limit}};
}

}  // namespace oraclesim
