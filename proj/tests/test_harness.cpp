#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "oraclesim/harness.hpp"

using namespace oraclesim;

namespace {

Question demo_question() {
    Question q;
    q.id = "q1";
    q.text = "A bag holds 6 red and 8 blue marbles; how many marbles is that in total?";
    q.gold_answer = "42";
    return q;
}

EndpointConfig stub_config() {
    EndpointConfig c;
    c.model_name = "stub";
    c.max_retries = 0;
    c.retry_backoff_seconds = 0.0;
    return c;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("grading extracts the final boxed integer") {
    CHECK(grade("the answer is \\boxed{042}", "42").score == 1);
    CHECK(grade("the answer is \\boxed{042}", "42").extracted == "42");
    CHECK(grade("\\boxed{1} no wait \\boxed{7}", "7").score == 1);
    CHECK(grade("I think \\boxed{41}.", "42").score == 0);
    CHECK_FALSE(grade("I think \\boxed{41}.", "42").audit);
}

TEST_CASE("grading falls back to the last standalone integer") {
    GradeResult g = grade("answer: 41", "42");
    CHECK(g.score == 0);
    CHECK(g.extracted == "41");
    CHECK_FALSE(g.audit);
    CHECK(grade("first 12 then 42", "42").score == 1);
    CHECK(grade("answer 042 done", "42").score == 1);
}

TEST_CASE("unextractable output scores zero and is flagged for audit") {
    GradeResult g = grade("I refuse to answer.", "42");
    CHECK(g.score == 0);
    CHECK(g.audit);
    CHECK(g.extracted.empty());
    // A boxed expression without digits is an extraction failure, not a
    // fallback to the surrounding text.
    GradeResult boxed = grade("42 maybe? \\boxed{no idea}", "42");
    CHECK(boxed.score == 0);
    CHECK(boxed.audit);
}

TEST_CASE("answer canonicalization") {
    CHECK(canonicalize_answer("042") == "42");
    CHECK(canonicalize_answer("  7 ") == "7");
    CHECK(canonicalize_answer("000") == "0");
    CHECK(canonicalize_answer("x = 13") == "13");
    CHECK(canonicalize_answer("nothing here").empty());
    // Gold sides canonicalize too, so "042" in a dataset matches "42".
    CHECK(grade("\\boxed{42}", "042").score == 1);
}

TEST_CASE("request body template substitution") {
    EndpointConfig c;
    c.model_name = "m-1";
    c.temperature = 0.7;
    nlohmann::json body = build_request_body(c, "What is 2+2?");
    CHECK(body["model"] == "m-1");
    CHECK(body["temperature"] == doctest::Approx(0.7));
    REQUIRE(body["messages"].is_array());
    CHECK(body["messages"][0]["role"] == "user");
    CHECK(body["messages"][0]["content"] == "What is 2+2?");

    c.request_template = "{\"prompt\":\"$PROMPT\",\"opts\":{\"t\":\"$TEMPERATURE\"}}";
    nlohmann::json alt = build_request_body(c, "hi");
    CHECK(alt["prompt"] == "hi");
    CHECK(alt["opts"]["t"] == doctest::Approx(0.7));

    c.request_template = "not json";
    CHECK_THROWS_AS(build_request_body(c, "hi"), std::invalid_argument);
}

TEST_CASE("response path extraction") {
    auto response = nlohmann::json::parse(
        R"({"choices":[{"message":{"content":"the answer"}}],"usage":{"total_tokens":7}})");
    CHECK(extract_response_text(response, "choices.0.message.content") == "the answer");
    CHECK(extract_response_text(response, "usage.total_tokens") == "7");
    CHECK_THROWS_AS(extract_response_text(response, "choices.1.message"), std::runtime_error);
    CHECK_THROWS_AS(extract_response_text(response, "nope"), std::runtime_error);
}

TEST_CASE("endpoint config round-trips without any key material") {
    EndpointConfig c;
    c.base_url = "http://localhost:9999/v1/chat/completions";
    c.model_name = "test-model";
    c.temperature = 0.3;
    c.max_concurrency = 4;
    c.api_key_env = "TEST_API_KEY";
    nlohmann::json j = c.to_json();
    CHECK(j.dump().find("TEST_API_KEY") != std::string::npos);  // the *name* is config
    EndpointConfig back = EndpointConfig::from_json(j);
    CHECK(back.base_url == c.base_url);
    CHECK(back.model_name == c.model_name);
    CHECK(back.temperature == doctest::Approx(c.temperature));
    CHECK(back.max_concurrency == 4);
    CHECK(back.api_key_env == "TEST_API_KEY");
    CHECK(back.response_path == c.response_path);

    nlohmann::json bad = j;
    bad["max_concurrency"] = 0;
    CHECK_THROWS_AS(EndpointConfig::from_json(bad), std::invalid_argument);
}

TEST_CASE("retry wrapper reports total attempts") {
    OracleCall call;
    call.call_id = 11;

    FlakyStub twice(2, "\\boxed{5}");
    TransportResult ok = complete_with_retries(twice, call, 2, 0.0);
    CHECK(ok.ok);
    CHECK(ok.attempts == 3);
    CHECK(ok.raw_output == "\\boxed{5}");

    FlakyStub wall(5, "\\boxed{5}");
    TransportResult fail = complete_with_retries(wall, call, 1, 0.0);
    CHECK_FALSE(fail.ok);
    CHECK(fail.attempts == 2);
    CHECK(fail.error == "simulated outage");
}

TEST_CASE("oracle stub follows its transfer function") {
    Question q = demo_question();
    // Degenerate rates make the check exact: empty context always fails,
    // any context with a correct solution always succeeds.
    auto tf = TransferFunction::uniform(0.0, 1.0, 8);
    OracleStub stub(tf, 7, {{q.id, q.gold_answer}});

    OracleCall base;
    base.call_id = 0;
    base.question_id = q.id;
    TransportResult r0 = stub.complete(base);
    REQUIRE(r0.ok);
    CHECK(grade(r0.raw_output, q.gold_answer).score == 0);
    CHECK(grade(r0.raw_output, q.gold_answer).extracted == "43");

    OracleCall ctx = base;
    ctx.call_id = 1;
    ctx.a = 1;
    ctx.b = 2;
    TransportResult r1 = stub.complete(ctx);
    REQUIRE(r1.ok);
    CHECK(grade(r1.raw_output, q.gold_answer).score == 1);

    OracleCall unknown;
    unknown.question_id = "other";
    CHECK_FALSE(stub.complete(unknown).ok);

    // Same (seed, call_id) must reproduce the same output regardless of
    // call order.
    TransportResult again = stub.complete(base);
    CHECK(again.raw_output == r0.raw_output);
}

TEST_CASE("random picker answers uniformly among the context answers") {
    RandomPickerStub stub(3);
    OracleCall call;
    call.question_id = "q1";
    call.a = 1;
    call.b = 2;
    call.context_solution_ids = {"s1", "s2", "s3"};
    call.context_answers = {"42", "41", "40"};
    std::map<std::string, int> picks;
    for (int i = 0; i < 3000; ++i) {
        call.call_id = i;
        TransportResult r = stub.complete(call);
        REQUIRE(r.ok);
        picks[grade(r.raw_output, "42").extracted] += 1;
    }
    // Each answer should land near 1000; 4 sigma over a uniform pick of 3
    // is about 68.
    for (const auto& [answer, n] : picks) {
        CAPTURE(answer);
        CHECK(std::abs(n - 1000) < 70);
    }

    OracleCall empty;
    empty.call_id = 0;
    TransportResult r = stub.complete(empty);
    REQUIRE(r.ok);
    CHECK(grade(r.raw_output, "42").audit);
}

TEST_CASE("base solution generation partitions outputs into pools") {
    Question q = demo_question();
    // 30% base accuracy stub, no context effects.
    auto tf = TransferFunction::uniform(0.3, 0.3, 4);
    OracleStub stub(tf, 99, {{q.id, q.gold_answer}});
    std::vector<Transcript> log;
    SolutionBank bank = generate_base_solutions(q, 200, stub, stub_config(), 99, &log);

    CHECK(bank.question_id == q.id);
    CHECK(bank.gold_answer == "42");
    CHECK(bank.correct_pool.size() + bank.incorrect_pool.size() == 200);
    CHECK(bank.base_cell.n_calls == 200);
    CHECK(bank.base_cell.successes == static_cast<std::int64_t>(bank.correct_pool.size()));
    // 200 draws at 0.3: 4 sigma is about 26.
    CHECK(std::abs(bank.base_cell.acc - 0.3) < 0.13);
    CHECK(bank.used_ids.empty());
    CHECK(log.size() == 200);
    for (const auto& r : bank.correct_pool) CHECK(r.extracted_answer == "42");
    for (const auto& r : bank.incorrect_pool) CHECK(r.extracted_answer == "43");
}

TEST_CASE("transport failures are logged but leave the denominator") {
    Question q = demo_question();
    FlakyStub dead(1000, "\\boxed{42}");
    EndpointConfig cfg = stub_config();
    std::vector<Transcript> log;
    SolutionBank bank = generate_base_solutions(q, 5, dead, cfg, 1, &log);
    CHECK(bank.base_cell.n_calls == 0);
    CHECK(bank.correct_pool.empty());
    CHECK(bank.incorrect_pool.empty());
    REQUIRE(log.size() == 5);
    for (const auto& t : log) {
        CHECK_FALSE(t.ok);
        CHECK(t.error == "simulated outage");
        CHECK(t.score == 0);
    }
}

TEST_CASE("one-correct sweep enforces the no-reuse ledger") {
    Question q = demo_question();
    SolutionBank bank = make_synthetic_bank(q, 50, 100);
    auto tf = TransferFunction::uniform(0.1, 1.0, 64);
    OracleStub stub(tf, 5, {{q.id, q.gold_answer}});
    std::vector<Transcript> log;
    // b in 0..3, 10 calls each: needs 40 correct and 60 incorrect.
    auto cells = run_one_correct_sweep(q, bank, 3, 10, stub, stub_config(), 5, &log);

    REQUIRE(cells.size() == 4);
    for (int b = 0; b <= 3; ++b) {
        CHECK(cells[b].a == 1);
        CHECK(cells[b].b == b);
        CHECK(cells[b].n_calls == 10);
        CHECK(cells[b].acc == doctest::Approx(1.0));  // f is 1 whenever a >= 1
    }
    CHECK(bank.used_ids.size() == 40 + 60);
    CHECK(bank.unused_correct() == 10);
    CHECK(bank.unused_incorrect() == 40);
    CHECK(log.size() == 40);

    // Every context id is consumed exactly once across the whole sweep.
    std::set<std::string> seen;
    for (const auto& t : log) {
        CHECK(t.context_solution_ids.size() == static_cast<std::size_t>(1 + t.b));
        for (const auto& id : t.context_solution_ids) CHECK(seen.insert(id).second);
    }
}

TEST_CASE("sweeps fail up front when a pool cannot cover the protocol") {
    Question q = demo_question();
    auto tf = TransferFunction::uniform(0.1, 0.9, 64);
    OracleStub stub(tf, 5, {{q.id, q.gold_answer}});

    // b in 0..12 at 30 calls per cell needs 30 * 78 = 2340 incorrect
    // solutions; one short must be rejected before any call goes out.
    SolutionBank short_bank = make_synthetic_bank(q, 390, 2339);
    std::vector<Transcript> log;
    CHECK_THROWS_WITH_AS(
        run_one_correct_sweep(q, short_bank, 12, 30, stub, stub_config(), 5, &log),
        "one-correct sweep needs 2340 unused incorrect solutions but the bank has 2339",
        std::runtime_error);
    CHECK(log.empty());
    CHECK(short_bank.used_ids.empty());

    SolutionBank exact_bank = make_synthetic_bank(q, 390, 2340);
    auto cells = run_one_correct_sweep(q, exact_bank, 12, 30, stub, stub_config(), 5, &log);
    CHECK(cells.size() == 13);
    CHECK(exact_bank.unused_incorrect() == 0);
    CHECK(exact_bank.unused_correct() == 0);

    // Ids already burned by a previous run count against the budget.
    SolutionBank reused = make_synthetic_bank(q, 390, 2340);
    reused.used_ids.insert(reused.incorrect_pool.front().id);
    CHECK_THROWS_AS(run_one_correct_sweep(q, reused, 12, 30, stub, stub_config(), 5, nullptr),
                    std::runtime_error);
}

TEST_CASE("fixed-total sweep covers every composition of the context") {
    Question q = demo_question();
    SolutionBank bank = make_synthetic_bank(q, 200, 200);
    auto tf = TransferFunction::uniform(0.0, 1.0, 64);
    OracleStub stub(tf, 17, {{q.id, q.gold_answer}});
    auto cells = run_fixed_total_sweep(q, bank, 4, 8, stub, stub_config(), 17, nullptr);

    REQUIRE(cells.size() == 5);
    for (int a = 0; a <= 4; ++a) {
        CHECK(cells[a].a == a);
        CHECK(cells[a].b == 4 - a);
        CHECK(cells[a].n_calls == 8);
        // f = 1 with any correct solution present, g = 0 without.
        CHECK(cells[a].acc == doctest::Approx(a >= 1 ? 1.0 : 0.0));
    }
    // 8 calls * (1+2+3+4) of each pool.
    CHECK(bank.unused_correct() == 200 - 80);
    CHECK(bank.unused_incorrect() == 200 - 80);
}

TEST_CASE("context presentation order is shuffled per call") {
    Question q = demo_question();
    SolutionBank bank = make_synthetic_bank(q, 300, 300);
    auto tf = TransferFunction::uniform(0.5, 0.5, 64);
    OracleStub stub(tf, 23, {{q.id, q.gold_answer}});
    std::vector<Transcript> log;
    run_fixed_total_sweep(q, bank, 1, 200, stub, stub_config(), 23, &log);

    // The a=1 half of the sweep has a single correct solution in a context
    // of one; look at a=1 within total 2 instead: rebuild with total 2.
    bank = make_synthetic_bank(q, 500, 500);
    log.clear();
    run_fixed_total_sweep(q, bank, 2, 150, stub, stub_config(), 23, &log);
    int correct_first = 0;
    int n = 0;
    for (const auto& t : log) {
        if (t.a != 1 || t.b != 1) continue;
        ++n;
        // Correct ids from make_synthetic_bank carry the "-c" marker.
        if (t.context_solution_ids[0].find("-c") != std::string::npos) ++correct_first;
    }
    REQUIRE(n == 150);
    // Under a fair shuffle the correct solution leads about half the time;
    // 4 sigma at 150 calls is about 25.
    CHECK(std::abs(correct_first - 75) < 25);
}

TEST_CASE("binomial mixture accuracy is exact on dyadic cells") {
    // base 0.5 with acc_a = a/5 must come out to exactly 0.5: the weights
    // C(5,a)/32 are exact dyadics and the sum telescopes to m/2 / m.
    std::vector<AccuracyCell> cells;
    for (int a = 0; a <= 5; ++a) {
        AccuracyCell c = AccuracyCell::from_counts(a, 5 - a, 0, 0);
        c.acc = static_cast<double>(a) / 5.0;
        cells.push_back(c);
    }
    std::vector<double> weights;
    double acc = binomial_mixture_accuracy(0.5, cells, &weights);
    CHECK(acc == 0.5);
    REQUIRE(weights.size() == 6);
    CHECK(weights[0] == 1.0 / 32.0);
    CHECK(weights[1] == 5.0 / 32.0);
    CHECK(weights[2] == 10.0 / 32.0);
    double total = 0.0;
    for (double w : weights) total += w;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("binomial mixture rejects gaps and mixed totals") {
    std::vector<AccuracyCell> cells;
    for (int a = 0; a <= 3; ++a)
        if (a != 2) cells.push_back(AccuracyCell::from_counts(a, 3 - a, a, 4));
    CHECK_THROWS_WITH_AS(binomial_mixture_accuracy(0.5, cells),
                         "missing accuracy cell for a = 2 of total 3", std::runtime_error);

    cells.push_back(AccuracyCell::from_counts(2, 2, 1, 4));  // total 4, not 3
    CHECK_THROWS_AS(binomial_mixture_accuracy(0.5, cells), std::invalid_argument);
    CHECK_THROWS_AS(binomial_mixture_accuracy(0.5, {}), std::invalid_argument);
}

TEST_CASE("empirical transfer fit matches per-cell frequencies") {
    std::vector<Transcript> ts;
    auto add = [&](int a, int b, int score, bool ok) {
        Transcript t;
        t.a = a;
        t.b = b;
        t.score = score;
        t.ok = ok;
        ts.push_back(t);
    };
    for (int i = 0; i < 10; ++i) add(0, 0, i < 3 ? 1 : 0, true);   // base 0.3
    for (int i = 0; i < 10; ++i) add(1, 1, i < 8 ? 1 : 0, true);   // 0.8
    for (int i = 0; i < 4; ++i) add(2, 0, 1, true);                // 1.0
    add(5, 5, 1, false);  // transport failure: ignored entirely

    TransferFunction tf = fit_empirical_transfer(ts);
    CHECK(tf.kind() == TransferFunction::Kind::Empirical);
    CHECK(tf.success_prob({0, 0}) == doctest::Approx(0.3));
    CHECK(tf.success_prob({1, 1}) == doctest::Approx(0.8));
    CHECK(tf.success_prob({2, 0}) == doctest::Approx(1.0));
    // Unseen cells fall back to the base cell's accuracy.
    CHECK(tf.success_prob({7, 3}) == doctest::Approx(0.3));
    CHECK(tf.cells().at({1, 1}).n == 10);

    CHECK_THROWS_AS(fit_empirical_transfer({}), std::invalid_argument);
}

TEST_CASE("simulated transcripts recover the generating model") {
    auto tf = TransferFunction::uniform(0.1, 0.6, 2);
    std::vector<std::pair<int, int>> grid;
    for (int a = 0; a <= 2; ++a)
        for (int b = 0; b <= 2; ++b) grid.emplace_back(a, b);
    auto ts = simulate_transcripts(tf, grid, 4000, 31);
    CHECK(ts.size() == 9 * 4000);

    TransferFunction fit = fit_empirical_transfer(ts);
    for (auto [a, b] : grid) {
        CAPTURE(a);
        CAPTURE(b);
        // 4000 draws: 4 sigma of a Bernoulli mean is at most 0.032.
        CHECK(fit.success_prob({a, b}) ==
              doctest::Approx(tf.success_prob({a, b})).epsilon(0.15));
        CHECK(std::abs(fit.success_prob({a, b}) - tf.success_prob({a, b})) < 0.032);
    }

    // Same seed, same bytes.
    auto again = simulate_transcripts(tf, grid, 4000, 31);
    REQUIRE(again.size() == ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i)
        CHECK(again[i].to_json() == ts[i].to_json());
}

TEST_CASE("transcripts round-trip through JSONL") {
    Question q = demo_question();
    SolutionBank bank = make_synthetic_bank(q, 20, 20);
    auto tf = TransferFunction::uniform(0.2, 0.7, 8);
    OracleStub stub(tf, 41, {{q.id, q.gold_answer}});
    std::vector<Transcript> log;
    run_one_correct_sweep(q, bank, 2, 5, stub, stub_config(), 41, &log);
    REQUIRE(log.size() == 15);

    std::string path = temp_path("oraclesim_transcripts_test.jsonl");
    write_transcripts(path, log);
    auto back = read_transcripts(path);
    REQUIRE(back.size() == log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
        CHECK(back[i].to_json() == log[i].to_json());
        // Stub timestamps come from the logical clock, keyed by call id.
        CHECK(back[i].timestamp == 1700000000 + back[i].call_id);
    }

    write_transcripts(path, {log[0]}, /*append=*/true);
    CHECK(read_transcripts(path).size() == log.size() + 1);
    std::remove(path.c_str());

    CHECK_THROWS_AS(read_transcripts("/nonexistent/nowhere.jsonl"), std::runtime_error);
}

TEST_CASE("solution banks round-trip and reject id collisions") {
    Question q = demo_question();
    SolutionBank bank = make_synthetic_bank(q, 3, 4);
    bank.used_ids.insert(bank.correct_pool[0].id);
    bank.base_cell = AccuracyCell::from_counts(0, 0, 30, 100);

    std::string path = temp_path("oraclesim_bank_test.json");
    bank.save(path);
    SolutionBank back = SolutionBank::load(path);
    std::remove(path.c_str());

    CHECK(back.question_id == bank.question_id);
    CHECK(back.gold_answer == "42");
    CHECK(back.correct_pool.size() == 3);
    CHECK(back.incorrect_pool.size() == 4);
    CHECK(back.used_ids == bank.used_ids);
    CHECK(back.unused_correct() == 2);
    CHECK(back.base_cell.acc == doctest::Approx(0.3));
    CHECK(back.base_cell.std_err == doctest::Approx(std::sqrt(0.3 * 0.7 / 100.0)));

    nlohmann::json j = bank.to_json();
    j["incorrect_pool"][0]["id"] = bank.correct_pool[0].id;
    CHECK_THROWS_AS(SolutionBank::from_json(j), std::invalid_argument);
}

TEST_CASE("sweep results and transcript bytes are reproducible") {
    Question q = demo_question();
    auto tf = TransferFunction::uniform(0.1, 0.6, 2);
    EndpointConfig cfg = stub_config();

    auto run_once = [&](int workers) {
        SolutionBank bank = make_synthetic_bank(q, 150, 150);
        OracleStub stub(tf, 77, {{q.id, q.gold_answer}});
        EndpointConfig c = cfg;
        c.max_concurrency = workers;
        std::vector<Transcript> log;
        auto cells = run_fixed_total_sweep(q, bank, 3, 20, stub, c, 77, &log);
        std::string bytes;
        for (const auto& t : log) bytes += t.to_json().dump() + "\n";
        return std::make_pair(cells, bytes);
    };

    auto [cells1, bytes1] = run_once(1);
    auto [cells4, bytes4] = run_once(4);
    CHECK(bytes1 == bytes4);
    REQUIRE(cells1.size() == cells4.size());
    for (std::size_t i = 0; i < cells1.size(); ++i) {
        CHECK(cells1[i].successes == cells4[i].successes);
        CHECK(cells1[i].n_calls == cells4[i].n_calls);
    }
}

TEST_CASE("prompt lists the context under the question") {
    Question q = demo_question();
    SolutionRecord r1{"s1", "Count them: 6 + 8 = 14.", "14"};
    SolutionRecord r2{"s2", "Clearly \\boxed{42}.", "42"};
    std::string prompt = build_prompt(q, {&r1, &r2});
    CHECK(prompt.find(q.text) == 0);
    CHECK(prompt.find("2 candidate solutions") != std::string::npos);
    CHECK(prompt.find("1. Count them") != std::string::npos);
    CHECK(prompt.find("2. Clearly") != std::string::npos);
    CHECK(prompt.find("\\boxed{<integer>}") != std::string::npos);
    // Base generation prompt: no context section at all.
    std::string base = build_prompt(q, {});
    CHECK(base.find("candidate") == std::string::npos);
}
