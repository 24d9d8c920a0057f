// Python surface of the library. Structured reports cross the boundary as
// plain dicts (via each type's JSON form) so python callers get native
// containers instead of thin wrapper classes; the oracle model and the two
// plan types are bound properly because they are what callers hold onto.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "oraclesim/analysis.hpp"
#include "oraclesim/harness.hpp"
#include "oraclesim/montecarlo.hpp"
#include "oraclesim/oracle.hpp"
#include "oraclesim/plan.hpp"
#include "oraclesim/rng.hpp"

namespace py = pybind11;
using namespace oraclesim;
using nlohmann::json;

namespace {

py::object json_to_py(const json& j) {
    switch (j.type()) {
        case json::value_t::null:
            return py::none();
        case json::value_t::boolean:
            return py::bool_(j.get<bool>());
        case json::value_t::number_integer:
            return py::int_(j.get<std::int64_t>());
        case json::value_t::number_unsigned:
            return py::int_(j.get<std::uint64_t>());
        case json::value_t::number_float:
            return py::float_(j.get<double>());
        case json::value_t::string:
            return py::str(j.get<std::string>());
        case json::value_t::array: {
            py::list out;
            for (const auto& e : j) out.append(json_to_py(e));
            return out;
        }
        default: {
            py::dict out;
            for (const auto& [key, value] : j.items())
                out[py::str(key)] = json_to_py(value);
            return out;
        }
    }
}

json py_to_json(const py::handle& h) {
    if (h.is_none()) return nullptr;
    if (py::isinstance<py::bool_>(h)) return h.cast<bool>();
    if (py::isinstance<py::int_>(h)) return h.cast<std::int64_t>();
    if (py::isinstance<py::float_>(h)) return h.cast<double>();
    if (py::isinstance<py::str>(h)) return h.cast<std::string>();
    if (py::isinstance<py::list>(h) || py::isinstance<py::tuple>(h)) {
        json arr = json::array();
        for (const auto& e : h) arr.push_back(py_to_json(e));
        return arr;
    }
    if (py::isinstance<py::dict>(h)) {
        json obj = json::object();
        for (const auto& item : h.cast<py::dict>())
            obj[item.first.cast<std::string>()] = py_to_json(item.second);
        return obj;
    }
    throw std::invalid_argument("config values must be json-like");
}

py::object monotonicity_to_py(const MonotonicityReport& r) {
    py::dict d;
    d["weak"] = r.weak;
    d["strong"] = r.strong;
    d["first_violation"] =
        r.first_violation
            ? py::object(py::make_tuple(r.first_violation->first,
                                        r.first_violation->second))
            : py::object(py::none());
    return d;
}

std::vector<AccuracyCell> cells_from_py(const py::list& cells) {
    std::vector<AccuracyCell> out;
    out.reserve(cells.size());
    for (const auto& c : cells) out.push_back(AccuracyCell::from_json(py_to_json(c)));
    return out;
}

std::vector<Transcript> transcripts_from_py(const py::list& ts) {
    std::vector<Transcript> out;
    out.reserve(ts.size());
    for (const auto& t : ts) out.push_back(Transcript::from_json(py_to_json(t)));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Simulation and analysis of reasoning plans over a probabilistic "
              "solution oracle";

    // ----- oracle models ---------------------------------------------------

    py::class_<TransferFunction>(m, "TransferFunction")
        .def_static("uniform", &TransferFunction::uniform, py::arg("p"), py::arg("q"),
                    py::arg("k"))
        .def_static("decaying", &TransferFunction::decaying, py::arg("f"), py::arg("g"))
        .def_static("exp_decay", &TransferFunction::exp_decay, py::arg("p"),
                    py::arg("q"))
        .def_static("poly_decay", &TransferFunction::poly_decay, py::arg("p"),
                    py::arg("q"))
        .def_static(
            "from_config",
            [](const py::dict& cfg) { return TransferFunction::from_json(py_to_json(cfg)); },
            py::arg("config"))
        .def_static("load", &TransferFunction::load, py::arg("path"))
        .def(
            "success_prob",
            [](const TransferFunction& tf, int correct, int incorrect) {
                return tf.success_prob({correct, incorrect});
            },
            py::arg("correct"), py::arg("incorrect"))
        .def("f_at", &TransferFunction::f_at, py::arg("size"))
        .def("g_at", &TransferFunction::g_at, py::arg("size"))
        .def("base_rate", &TransferFunction::base_rate)
        .def(
            "check_monotonicity",
            [](const TransferFunction& tf, int horizon) {
                return monotonicity_to_py(tf.check_monotonicity(horizon));
            },
            py::arg("horizon") = 16)
        .def("scaled", &TransferFunction::scaled, py::arg("factor"),
             py::arg("horizon") = 64)
        .def("to_decaying", &TransferFunction::to_decaying, py::arg("horizon"))
        .def("config", [](const TransferFunction& tf) { return json_to_py(tf.to_json()); })
        .def("__repr__", [](const TransferFunction& tf) {
            return "TransferFunction(" + tf.to_json().dump() + ")";
        });

    // ----- plans ------------------------------------------------------------

    py::class_<Plan>(m, "Plan")
        .def_readonly("n", &Plan::n)
        .def(
            "context",
            [](const Plan& p, std::int64_t node) {
                auto span = p.context(node);
                return std::vector<std::int64_t>(span.begin(), span.end());
            },
            py::arg("node"))
        .def("depth", [](const Plan& p) { return depth(p); })
        .def("config", [](const Plan& p) { return json_to_py(plan_to_json(p)); })
        .def_static(
            "from_config",
            [](const py::dict& cfg) { return plan_from_json(py_to_json(cfg)); },
            py::arg("config"))
        .def("__repr__", [](const Plan& p) {
            return "Plan(n=" + std::to_string(p.n) + ")";
        });

    py::class_<PlanFamily>(m, "PlanFamily")
        .def_static("branching", &PlanFamily::branching, py::arg("levels"),
                    py::arg("fanins"))
        .def_static("genetic", &PlanFamily::genetic, py::arg("levels"), py::arg("sizes"),
                    py::arg("fanins"))
        .def_static("random_sampling", &PlanFamily::random_sampling, py::arg("n"),
                    py::arg("k"))
        .def_static("sliding_window", &PlanFamily::sliding_window, py::arg("n"),
                    py::arg("k"))
        .def("randomized", &PlanFamily::randomized)
        .def(
            "build",
            [](const PlanFamily& f, std::uint64_t seed) {
                Rng rng(seed);
                return build_plan(f, rng);
            },
            py::arg("seed") = 0)
        .def("config", [](const PlanFamily& f) { return json_to_py(f.to_json()); })
        .def_static(
            "from_config",
            [](const py::dict& cfg) { return PlanFamily::from_json(py_to_json(cfg)); },
            py::arg("config"))
        .def("__repr__", [](const PlanFamily& f) {
            return "PlanFamily(" + f.to_json().dump() + ")";
        });

    m.def(
        "execute",
        [](const Plan& plan, const TransferFunction& tf, std::uint64_t seed) {
            Rng rng(seed);
            auto trace = execute(plan, tf, rng);
            py::dict d;
            d["scores"] = trace.scores;
            d["final"] = trace.final;
            return d;
        },
        py::arg("plan"), py::arg("model"), py::arg("seed"));
    m.def("exact_success_prob", &exact_success_prob, py::arg("plan"), py::arg("model"));
    m.def("enumerate_plans", &enumerate_plans, py::arg("n"));

    // ----- closed-form analysis ----------------------------------------------

    m.def(
        "solve_fixed_point",
        [](double f_k, double g_k, int k) {
            return json_to_py(solve_fixed_point(f_k, g_k, k).to_json());
        },
        py::arg("f_k"), py::arg("g_k"), py::arg("k"));
    m.def(
        "optimal_success",
        [](const TransferFunction& tf, int k_max) {
            return json_to_py(optimal_success(tf, k_max).to_json());
        },
        py::arg("model"), py::arg("k_max") = 64);
    m.def("fixed_depth_optimum", &fixed_depth_optimum, py::arg("model"),
          py::arg("levels"), py::arg("k_max") = 64);
    m.def("fixed_depth_argmax", &fixed_depth_argmax, py::arg("model"), py::arg("levels"),
          py::arg("k_max") = 64);
    m.def("branching_success", &branching_success, py::arg("model"), py::arg("fanins"));
    m.def(
        "convergence_report",
        [](double p, double q, int k, const std::string& algorithm) {
            return json_to_py(
                convergence_report(p, q, k, algorithm_from_string(algorithm)).to_json());
        },
        py::arg("p"), py::arg("q"), py::arg("k"), py::arg("algorithm"));
    m.def(
        "sliding_window_stationary",
        [](double p, double q, int k) {
            return json_to_py(sliding_window_stationary(p, q, k).to_json());
        },
        py::arg("p"), py::arg("q"), py::arg("k"));
    m.def("optimal_context_size_exp", &optimal_context_size_exp, py::arg("x"),
          py::arg("q"));
    m.def("exp_decay_max_success", &exp_decay_max_success, py::arg("p"), py::arg("q"));
    m.def("genetic_population_sizes", &genetic_population_sizes, py::arg("levels"),
          py::arg("eps"), py::arg("level_probs"));
    m.def("chernoff_lower_tail", &chernoff_lower_tail, py::arg("mu"), py::arg("eps"));
    m.def(
        "poly_decay_series",
        [](double p, double q, double c, int n) {
            return json_to_py(poly_decay_series(p, q, c, n).to_json());
        },
        py::arg("p"), py::arg("q"), py::arg("c"), py::arg("n"));
    m.def("poly_decay_steps", &poly_decay_steps, py::arg("p"), py::arg("q"),
          py::arg("eps"));

    // ----- Monte Carlo --------------------------------------------------------

    m.def(
        "run_trials",
        [](const PlanFamily& family, const TransferFunction& tf, std::int64_t trials,
           std::uint64_t seed, int workers) {
            RunConfig cfg;
            cfg.trials = trials;
            cfg.base_seed = seed;
            cfg.workers = workers;
            return json_to_py(run_trials(family, tf, cfg).to_json());
        },
        py::arg("family"), py::arg("model"), py::arg("trials"), py::arg("seed"),
        py::arg("workers") = 1);
    m.def("wilson_interval", &wilson_interval, py::arg("successes"), py::arg("trials"));
    m.def("random_sampling_trajectory", &random_sampling_trajectory, py::arg("model"),
          py::arg("k"), py::arg("n"), py::arg("seed"));
    m.def("sliding_window_long_run", &sliding_window_long_run, py::arg("model"),
          py::arg("k"), py::arg("steps"), py::arg("seed"));
    m.def(
        "fit_exponent",
        [](const std::vector<std::pair<double, double>>& points) {
            std::vector<GapPoint> gp;
            gp.reserve(points.size());
            for (auto [n, gap] : points) gp.push_back({n, gap});
            return json_to_py(fit_exponent(gp).to_json());
        },
        py::arg("points"));

    // ----- grading and empirical fits -----------------------------------------

    m.def("canonicalize_answer", &canonicalize_answer, py::arg("raw"));
    m.def(
        "grade",
        [](const std::string& raw_output, const std::string& gold) {
            GradeResult g = grade(raw_output, gold);
            py::dict d;
            d["score"] = g.score;
            d["extracted"] = g.extracted;
            d["audit"] = g.audit;
            return d;
        },
        py::arg("raw_output"), py::arg("gold"));
    m.def(
        "binomial_mixture_accuracy",
        [](double base_acc, const py::list& cells) {
            return binomial_mixture_accuracy(base_acc, cells_from_py(cells));
        },
        py::arg("base_acc"), py::arg("cells"));
    m.def(
        "fit_empirical_transfer",
        [](const py::list& transcripts) {
            return fit_empirical_transfer(transcripts_from_py(transcripts));
        },
        py::arg("transcripts"));
    m.def(
        "simulate_transcripts",
        [](const TransferFunction& tf, const std::vector<std::pair<int, int>>& cells,
           std::int64_t per_cell, std::uint64_t seed) {
            py::list out;
            for (const auto& t : simulate_transcripts(tf, cells, per_cell, seed))
                out.append(json_to_py(t.to_json()));
            return out;
        },
        py::arg("model"), py::arg("cells"), py::arg("per_cell"), py::arg("seed"));
}
