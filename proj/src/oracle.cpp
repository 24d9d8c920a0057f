#include "oraclesim/oracle.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace oraclesim {

namespace {

constexpr double kClampSlack = 1e-12;

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

double table_at(const std::vector<double>& t, int size) {
    if (size < 0) throw std::invalid_argument("context size must be >= 0");
    auto i = static_cast<std::size_t>(size);
    return i < t.size() ? t[i] : t.back();
}

}  // namespace

double clamp_probability(double x, const char* what) {
    if (x >= 0.0 && x <= 1.0) return x;
    if (x < 0.0 && x >= -kClampSlack) return 0.0;
    if (x > 1.0 && x <= 1.0 + kClampSlack) return 1.0;
    throw std::invalid_argument(std::string(what) + " = " + std::to_string(x) +
                                " is not a probability");
}

TransferFunction TransferFunction::uniform(double p, double q, int k) {
    TransferFunction tf;
    tf.kind_ = Kind::Uniform;
    tf.p_ = clamp_probability(p, "p");
    tf.q_ = clamp_probability(q, "q");
    tf.cap_ = k;
    require(k >= 0, "uniform cap k must be >= 0");
    require(tf.p_ <= tf.q_, "uniform model needs p <= q");
    return tf;
}

TransferFunction TransferFunction::decaying(std::vector<double> f, std::vector<double> g) {
    TransferFunction tf;
    tf.kind_ = Kind::Decaying;
    require(!f.empty() && !g.empty(), "decaying tables must be non-empty");
    for (auto& v : f) v = clamp_probability(v, "f entry");
    for (auto& v : g) v = clamp_probability(v, "g entry");
    std::size_t horizon = std::max(f.size(), g.size());
    for (std::size_t i = 0; i < horizon; ++i) {
        double fi = i < f.size() ? f[i] : f.back();
        double gi = i < g.size() ? g[i] : g.back();
        require(fi >= gi, "decaying model needs f(s) >= g(s) at every size");
    }
    tf.f_table_ = std::move(f);
    tf.g_table_ = std::move(g);
    return tf;
}

TransferFunction TransferFunction::exp_decay(double p, double q) {
    TransferFunction tf;
    tf.kind_ = Kind::ExpDecay;
    tf.p_ = clamp_probability(p, "p");
    tf.q_ = clamp_probability(q, "q");
    return tf;
}

TransferFunction TransferFunction::poly_decay(double p, double q) {
    TransferFunction tf;
    tf.kind_ = Kind::PolyDecay;
    tf.p_ = clamp_probability(p, "p");
    require(q > 0.0 && q <= 1.0, "poly decay exponent must lie in (0, 1]");
    tf.q_ = q;
    return tf;
}

TransferFunction TransferFunction::empirical(std::vector<EmpiricalCell> cells, double fallback) {
    TransferFunction tf;
    tf.kind_ = Kind::Empirical;
    tf.fallback_ = clamp_probability(fallback, "fallback");
    for (auto& c : cells) {
        require(c.correct >= 0 && c.incorrect >= 0, "empirical cell counts must be >= 0");
        require(c.n >= 0, "empirical cell sample size must be >= 0");
        c.prob = clamp_probability(c.prob, "cell prob");
        auto key = std::make_pair(c.correct, c.incorrect);
        require(tf.cells_.emplace(key, c).second, "duplicate empirical cell");
    }
    return tf;
}

double TransferFunction::f_at(int size) const {
    switch (kind_) {
        case Kind::Uniform:
            return size <= cap_ ? q_ : p_;
        case Kind::Decaying:
            return table_at(f_table_, size);
        case Kind::ExpDecay:
            return size >= 1 ? std::pow(q_, size - 1) : 1.0;
        case Kind::PolyDecay:
            return size >= 1 ? std::pow(static_cast<double>(size), -q_) : 1.0;
        case Kind::Empirical:
            break;
    }
    throw std::invalid_argument("f/g are defined for decaying-family models only");
}

double TransferFunction::g_at(int size) const {
    switch (kind_) {
        case Kind::Uniform:
            if (size < 0) throw std::invalid_argument("context size must be >= 0");
            return p_;
        case Kind::Decaying:
            return table_at(g_table_, size);
        case Kind::ExpDecay:
        case Kind::PolyDecay:
            if (size < 0) throw std::invalid_argument("context size must be >= 0");
            return size == 0 ? p_ : 0.0;
        case Kind::Empirical:
            break;
    }
    throw std::invalid_argument("f/g are defined for decaying-family models only");
}

double TransferFunction::success_prob(ContextCounts c) const {
    require(c.correct >= 0 && c.incorrect >= 0, "context counts must be >= 0");
    if (kind_ == Kind::Empirical) {
        auto it = cells_.find({c.correct, c.incorrect});
        return it != cells_.end() ? it->second.prob : fallback_;
    }
    double v = c.correct >= 1 ? f_at(c.size()) : g_at(c.size());
    return clamp_probability(v, "success_prob");
}

MonotonicityReport TransferFunction::check_monotonicity(int horizon) const {
    require(horizon >= 1, "monotonicity horizon must be >= 1");
    MonotonicityReport rep;
    rep.weak = true;
    bool strong_part = true;
    std::optional<std::pair<int, int>> first_weak, first_strong;
    for (int a = 0; a < horizon; ++a) {
        for (int b = 0; a + b < horizon; ++b) {
            double here = success_prob({a, b});
            double more_correct = success_prob({a + 1, b});
            double more_wrong = success_prob({a, b + 1});
            if (more_correct < more_wrong - kClampSlack && !first_weak) {
                rep.weak = false;
                first_weak = {a, b};
            }
            if (more_wrong < here - kClampSlack && !first_strong) {
                strong_part = false;
                first_strong = {a, b};
            }
        }
    }
    rep.strong = rep.weak && strong_part;
    if (!rep.weak)
        rep.first_violation = first_weak;
    else if (!rep.strong)
        rep.first_violation = first_strong;
    return rep;
}

TransferFunction TransferFunction::scaled(double factor, int horizon) const {
    require(factor >= 0.0, "scale factor must be >= 0");
    if (kind_ == Kind::Empirical) {
        std::vector<EmpiricalCell> scaled_cells;
        scaled_cells.reserve(cells_.size());
        for (const auto& [key, c] : cells_) {
            EmpiricalCell sc = c;
            sc.prob = clamp_probability(c.prob * factor, "scaled cell prob");
            scaled_cells.push_back(sc);
        }
        return empirical(std::move(scaled_cells),
                         clamp_probability(fallback_ * factor, "scaled fallback"));
    }
    TransferFunction base = to_decaying(horizon);
    for (auto& v : base.f_table_) v = clamp_probability(v * factor, "scaled f entry");
    for (auto& v : base.g_table_) v = clamp_probability(v * factor, "scaled g entry");
    return decaying(std::move(base.f_table_), std::move(base.g_table_));
}

TransferFunction TransferFunction::to_decaying(int horizon) const {
    require(horizon >= 0, "horizon must be >= 0");
    std::vector<double> f(static_cast<std::size_t>(horizon) + 1);
    std::vector<double> g(static_cast<std::size_t>(horizon) + 1);
    if (kind_ != Kind::Empirical) {
        for (int s = 0; s <= horizon; ++s) {
            f[s] = clamp_probability(f_at(s), "f entry");
            g[s] = g_at(s);
        }
        return decaying(std::move(f), std::move(g));
    }
    for (int s = 0; s <= horizon; ++s) {
        double weighted = 0.0, weight = 0.0, plain = 0.0;
        int found = 0;
        for (const auto& [key, c] : cells_) {
            if (c.correct >= 1 && c.correct + c.incorrect == s) {
                weighted += c.prob * static_cast<double>(c.n);
                weight += static_cast<double>(c.n);
                plain += c.prob;
                ++found;
            }
        }
        if (found == 0)
            f[s] = fallback_;
        else if (weight > 0.0)
            f[s] = weighted / weight;
        else
            f[s] = plain / found;
        auto it = cells_.find({0, s});
        g[s] = it != cells_.end() ? it->second.prob : fallback_;
        f[s] = std::max(f[s], g[s]);
    }
    return decaying(std::move(f), std::move(g));
}

nlohmann::json TransferFunction::to_json() const {
    nlohmann::json j;
    switch (kind_) {
        case Kind::Uniform:
            j = {{"kind", "uniform"}, {"p", p_}, {"q", q_}, {"k", cap_}};
            break;
        case Kind::ExpDecay:
            j = {{"kind", "exp"}, {"p", p_}, {"q", q_}};
            break;
        case Kind::PolyDecay:
            j = {{"kind", "poly"}, {"p", p_}, {"q", q_}};
            break;
        case Kind::Decaying:
            j = {{"kind", "decaying"},
                 {"f", {{"table", f_table_}}},
                 {"g", {{"table", g_table_}}}};
            break;
        case Kind::Empirical: {
            nlohmann::json cells = nlohmann::json::array();
            for (const auto& [key, c] : cells_)
                cells.push_back({{"a", c.correct},
                                 {"b", c.incorrect},
                                 {"prob", c.prob},
                                 {"n", c.n}});
            j = {{"kind", "empirical"}, {"cells", cells}, {"fallback", fallback_}};
            break;
        }
    }
    return j;
}

TransferFunction TransferFunction::from_json(const nlohmann::json& j) {
    require(j.is_object() && j.contains("kind"), "model config needs a \"kind\" field");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "uniform")
        return uniform(j.at("p").get<double>(), j.at("q").get<double>(), j.at("k").get<int>());
    if (kind == "exp")
        return exp_decay(j.at("p").get<double>(), j.at("q").get<double>());
    if (kind == "poly")
        return poly_decay(j.at("p").get<double>(), j.at("q").get<double>());
    if (kind == "decaying") {
        auto table = [](const nlohmann::json& seq) {
            require(seq.is_object() && seq.contains("table"),
                    "decay sequence needs a \"table\" array");
            return seq.at("table").get<std::vector<double>>();
        };
        return decaying(table(j.at("f")), table(j.at("g")));
    }
    if (kind == "empirical") {
        std::vector<EmpiricalCell> cells;
        for (const auto& cj : j.at("cells")) {
            EmpiricalCell c;
            c.correct = cj.at("a").get<int>();
            c.incorrect = cj.at("b").get<int>();
            c.prob = cj.at("prob").get<double>();
            c.n = cj.value("n", std::int64_t{0});
            cells.push_back(c);
        }
        return empirical(std::move(cells), j.at("fallback").get<double>());
    }
    throw std::invalid_argument("unknown model kind \"" + kind + "\"");
}

TransferFunction TransferFunction::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model config " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

}  // namespace oraclesim
