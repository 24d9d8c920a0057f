#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "oraclesim/oracle.hpp"
#include "oraclesim/rng.hpp"

namespace oraclesim {

// ---------------------------------------------------------------------------
// Questions, solutions, grading
// ---------------------------------------------------------------------------

struct Question {
    std::string id;
    std::string text;
    std::string gold_answer;  // canonical integer text, e.g. "42"
};

struct SolutionRecord {
    std::string id;
    std::string text;              // full model output
    std::string extracted_answer;  // canonical; empty when nothing extractable
};

struct GradeResult {
    int score = 0;          // 1 iff extracted matches the canonical gold
    std::string extracted;  // canonical extracted answer
    bool audit = false;     // nothing extractable; scored 0 and flagged
};

// Strips whitespace and leading zeros from an integer answer ("042" -> "42");
// non-digit input keeps only its last maximal digit run.
std::string canonicalize_answer(const std::string& raw);

/**
 * Binary grading for integer-answer questions: the answer is the content of
 * the last \boxed{...} in the output, or failing that the last maximal digit
 * run anywhere. A boxed expression without digits counts as an extraction
 * failure, not a silent fallback.
 */
GradeResult grade(const std::string& raw_output, const std::string& gold);

// ---------------------------------------------------------------------------
// Endpoint configuration and transports
// ---------------------------------------------------------------------------

/**
 * Where and how to reach a chat-completion endpoint. The API key is read
 * from the environment variable named here at call time; neither the name's
 * value nor the key ever enters any artifact written to disk.
 */
struct EndpointConfig {
    std::string base_url;  // e.g. "http://host:8000/v1/chat/completions"
    std::string model_name;
    double temperature = 0.0;
    int max_concurrency = 1;
    double timeout_seconds = 60.0;
    int max_retries = 2;
    double retry_backoff_seconds = 0.5;  // doubled per attempt
    std::string api_key_env;             // name of the env var, may be empty
    // Request body: JSON template with the string placeholders "$MODEL",
    // "$PROMPT" and "$TEMPERATURE" substituted per call.
    std::string request_template =
        R"({"model":"$MODEL","messages":[{"role":"user","content":"$PROMPT"}],"temperature":"$TEMPERATURE"})";
    // Dot path into the response JSON; numeric steps index arrays.
    std::string response_path = "choices.0.message.content";
    std::string prompt_version = "v1";

    nlohmann::json to_json() const;
    static EndpointConfig from_json(const nlohmann::json& j);
};

/** One oracle call: a prompt plus the context bookkeeping the stubs need. */
struct OracleCall {
    std::int64_t call_id = 0;
    std::string question_id;
    std::string prompt;
    int a = 0;  // correct solutions in context
    int b = 0;  // incorrect solutions in context
    std::vector<std::string> context_solution_ids;  // shuffled presentation order
    std::vector<std::string> context_answers;       // aligned with the ids
};

struct TransportResult {
    bool ok = false;
    std::string raw_output;
    int attempts = 0;
    std::string error;
};

class Transport {
public:
    virtual ~Transport() = default;
    // One attempt; retries are layered on top by complete_with_retries.
    virtual TransportResult complete(const OracleCall& call) = 0;
    // Deterministic transports get logical timestamps in transcripts.
    virtual bool deterministic() const = 0;
};

// Runs transport.complete up to 1 + max_retries times with exponential
// backoff (skipped for deterministic transports); reports total attempts.
TransportResult complete_with_retries(Transport& transport, const OracleCall& call,
                                      int max_retries, double backoff_seconds);

/**
 * Chat-completion HTTP transport. POSTs the rendered request template, adds
 * "Authorization: Bearer <key>" when the configured env var is set, and
 * pulls the answer text out of the response via the configured dot path.
 */
class HttpTransport : public Transport {
public:
    explicit HttpTransport(EndpointConfig config);
    TransportResult complete(const OracleCall& call) override;
    bool deterministic() const override { return false; }

private:
    EndpointConfig config_;
};

// Pure helpers behind HttpTransport, split out for tests that never touch
// a socket.
nlohmann::json build_request_body(const EndpointConfig& config, const std::string& prompt);
std::string extract_response_text(const nlohmann::json& response, const std::string& path);

/**
 * Simulates an oracle with a known transfer function: each call succeeds
 * with probability F(a,b), keyed by (seed, call_id) so results are stable
 * under any scheduling. Correct calls answer the question's gold; wrong
 * calls answer gold+1 mod 1000.
 */
class OracleStub : public Transport {
public:
    OracleStub(TransferFunction tf, std::uint64_t seed,
               std::map<std::string, std::string> golds);
    TransportResult complete(const OracleCall& call) override;
    bool deterministic() const override { return true; }

private:
    TransferFunction tf_;
    std::uint64_t seed_;
    std::map<std::string, std::string> golds_;
};

/**
 * Answers with a uniformly chosen context answer (the "can the model do
 * better than chance" baseline: accuracy 1/(b+1) with one correct solution
 * present). An empty context yields an unusable output that grades 0.
 */
class RandomPickerStub : public Transport {
public:
    explicit RandomPickerStub(std::uint64_t seed);
    TransportResult complete(const OracleCall& call) override;
    bool deterministic() const override { return true; }

private:
    std::uint64_t seed_;
};

// Fails the first `failures` attempts of every call, then succeeds with the
// given output; exercises the retry path.
class FlakyStub : public Transport {
public:
    FlakyStub(int failures, std::string output);
    TransportResult complete(const OracleCall& call) override;
    bool deterministic() const override { return true; }

private:
    int failures_;
    std::string output_;
    std::map<std::int64_t, int> attempts_;
};

// ---------------------------------------------------------------------------
// Transcripts
// ---------------------------------------------------------------------------

struct Transcript {
    std::int64_t call_id = 0;
    std::string question_id;
    int a = 0;
    int b = 0;
    std::vector<std::string> context_solution_ids;
    std::string raw_output;
    std::string extracted_answer;
    int score = 0;
    bool audit = false;
    bool ok = true;  // transport succeeded (failed calls keep score 0)
    std::string error;
    std::int64_t timestamp = 0;  // unix seconds; logical clock under stubs
    std::string model;

    nlohmann::json to_json() const;
    static Transcript from_json(const nlohmann::json& j);
};

// JSONL persistence, one object per line, call-id order.
void write_transcripts(const std::string& path, const std::vector<Transcript>& ts,
                       bool append = false);
std::vector<Transcript> read_transcripts(const std::string& path);

// ---------------------------------------------------------------------------
// Solution banks and accuracy cells
// ---------------------------------------------------------------------------

struct AccuracyCell {
    int a = 0;
    int b = 0;
    std::int64_t n_calls = 0;
    std::int64_t successes = 0;
    double acc = 0.0;
    double std_err = 0.0;  // sqrt(acc (1-acc) / n_calls)

    nlohmann::json to_json() const;
    static AccuracyCell from_json(const nlohmann::json& j);
    static AccuracyCell from_counts(int a, int b, std::int64_t successes,
                                    std::int64_t n_calls);
};

/**
 * Per-question pools of graded solutions plus the no-reuse ledger: an id
 * consumed by one call never appears in another call's context within the
 * same bank.
 */
struct SolutionBank {
    std::string question_id;
    std::string gold_answer;
    std::vector<SolutionRecord> correct_pool;
    std::vector<SolutionRecord> incorrect_pool;
    std::set<std::string> used_ids;
    AccuracyCell base_cell;  // empty-context accuracy, cell (0,0)

    std::int64_t unused_correct() const;
    std::int64_t unused_incorrect() const;

    nlohmann::json to_json() const;
    static SolutionBank from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static SolutionBank load(const std::string& path);
};

// Builds a synthetic bank (gold answers vs. distinct wrong answers) big
// enough for the given protocol; handy for stub experiments and tests.
SolutionBank make_synthetic_bank(const Question& q, std::int64_t n_correct,
                                 std::int64_t n_incorrect);

// ---------------------------------------------------------------------------
// Experiment protocols
// ---------------------------------------------------------------------------

/**
 * Issues n_calls empty-context generations, grades them, and partitions the
 * outputs into the bank's pools. Transport failures after retries are
 * recorded as failed transcripts and excluded from the accuracy denominator.
 */
SolutionBank generate_base_solutions(const Question& q, std::int64_t n_calls,
                                     Transport& transport, const EndpointConfig& config,
                                     std::uint64_t seed,
                                     std::vector<Transcript>* transcripts = nullptr);

/**
 * One-correct protocol: for each b in 0..b_max, calls_per_config calls whose
 * context holds 1 fresh correct solution plus b fresh incorrect ones,
 * shuffled per call. Fails up front (naming the deficient pool and the
 * required size) if the bank cannot cover the whole sweep without reuse.
 */
std::vector<AccuracyCell> run_one_correct_sweep(const Question& q, SolutionBank& bank,
                                                int b_max, std::int64_t calls_per_config,
                                                Transport& transport,
                                                const EndpointConfig& config,
                                                std::uint64_t seed,
                                                std::vector<Transcript>* transcripts = nullptr);

/**
 * Fixed-total protocol: for each a in 0..total, calls_per_config calls with
 * a correct and total-a incorrect fresh shuffled solutions.
 */
std::vector<AccuracyCell> run_fixed_total_sweep(const Question& q, SolutionBank& bank,
                                                int total, std::int64_t calls_per_config,
                                                Transport& transport,
                                                const EndpointConfig& config,
                                                std::uint64_t seed,
                                                std::vector<Transcript>* transcripts = nullptr);

/**
 * Accuracy of "draw m base solutions, then answer with them as context":
 * sum over a of C(m,a) base^a (1-base)^(m-a) acc_a. Cells must cover every
 * a in 0..m for one total m. Optionally reports the per-a weights.
 */
double binomial_mixture_accuracy(double base_acc, const std::vector<AccuracyCell>& cells,
                                 std::vector<double>* weights = nullptr);

/**
 * Groups successful transcripts by (a,b) and turns observed accuracies into
 * an empirical transfer function; fallback is the (0,0) cell's accuracy
 * when present, else the pooled accuracy.
 */
TransferFunction fit_empirical_transfer(const std::vector<Transcript>& transcripts);

// Synthesizes per_cell graded transcripts per (a,b) cell directly from a
// known transfer function (no pools, no prompts): the cheap way to feed
// fit_empirical_transfer round-trip tests.
std::vector<Transcript> simulate_transcripts(const TransferFunction& tf,
                                             const std::vector<std::pair<int, int>>& cells,
                                             std::int64_t per_cell, std::uint64_t seed);

// Prompt used by the sweep protocols: question first, then the shuffled
// candidate solutions as a numbered list, then the boxed-answer instruction.
std::string build_prompt(const Question& q,
                         const std::vector<const SolutionRecord*>& context);

}  // namespace oraclesim
