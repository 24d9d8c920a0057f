#include "oraclesim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>

namespace oraclesim {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Fixed epoch for the logical clock: deterministic transports stamp
// transcripts with epoch + call_id so reruns are byte-identical.
constexpr std::int64_t kLogicalEpoch = 1700000000;

std::int64_t stamp(const Transport& transport, std::int64_t call_id) {
    if (transport.deterministic()) return kLogicalEpoch + call_id;
    return static_cast<std::int64_t>(std::time(nullptr));
}

std::string last_digit_run(const std::string& s) {
    std::size_t end = std::string::npos;
    for (std::size_t i = s.size(); i-- > 0;) {
        bool digit = s[i] >= '0' && s[i] <= '9';
        if (digit && end == std::string::npos) end = i + 1;
        if (!digit && end != std::string::npos) return s.substr(i + 1, end - i - 1);
    }
    return end == std::string::npos ? std::string() : s.substr(0, end);
}

std::string strip_leading_zeros(std::string digits) {
    std::size_t keep = digits.find_first_not_of('0');
    if (keep == std::string::npos) return digits.empty() ? digits : "0";
    return digits.substr(keep);
}

// Placeholder substitution for the request template: strings that are
// exactly "$MODEL" / "$PROMPT" become the configured values, "$TEMPERATURE"
// becomes a JSON number.
void substitute(nlohmann::json& node, const EndpointConfig& config, const std::string& prompt) {
    if (node.is_string()) {
        const auto& s = node.get_ref<const std::string&>();
        if (s == "$MODEL") {
            node = config.model_name;
        } else if (s == "$PROMPT") {
            node = prompt;
        } else if (s == "$TEMPERATURE") {
            node = config.temperature;
        }
        return;
    }
    if (node.is_object() || node.is_array()) {
        for (auto& child : node) substitute(child, config, prompt);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Grading
// ---------------------------------------------------------------------------

std::string canonicalize_answer(const std::string& raw) {
    std::string run = last_digit_run(raw);
    if (run.empty()) return run;
    return strip_leading_zeros(run);
}

GradeResult grade(const std::string& raw_output, const std::string& gold) {
    GradeResult out;
    static const std::string kBox = "\\boxed{";
    std::size_t pos = raw_output.rfind(kBox);
    if (pos != std::string::npos) {
        std::size_t open = pos + kBox.size();
        int depth = 1;
        std::size_t close = open;
        while (close < raw_output.size() && depth > 0) {
            if (raw_output[close] == '{') ++depth;
            if (raw_output[close] == '}') --depth;
            if (depth > 0) ++close;
        }
        out.extracted = canonicalize_answer(raw_output.substr(open, close - open));
    } else {
        out.extracted = canonicalize_answer(raw_output);
    }
    if (out.extracted.empty()) {
        out.audit = true;
        return out;
    }
    out.score = out.extracted == canonicalize_answer(gold) ? 1 : 0;
    return out;
}

// ---------------------------------------------------------------------------
// Endpoint config
// ---------------------------------------------------------------------------

nlohmann::json EndpointConfig::to_json() const {
    // api_key_env is the *name* of the variable; the key itself never
    // appears here or anywhere else on disk.
    return nlohmann::json{{"base_url", base_url},
                          {"model_name", model_name},
                          {"temperature", temperature},
                          {"max_concurrency", max_concurrency},
                          {"timeout_seconds", timeout_seconds},
                          {"max_retries", max_retries},
                          {"retry_backoff_seconds", retry_backoff_seconds},
                          {"api_key_env", api_key_env},
                          {"request_template", request_template},
                          {"response_path", response_path},
                          {"prompt_version", prompt_version}};
}

EndpointConfig EndpointConfig::from_json(const nlohmann::json& j) {
    EndpointConfig c;
    c.base_url = j.value("base_url", c.base_url);
    c.model_name = j.value("model_name", c.model_name);
    c.temperature = j.value("temperature", c.temperature);
    c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.retry_backoff_seconds = j.value("retry_backoff_seconds", c.retry_backoff_seconds);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.request_template = j.value("request_template", c.request_template);
    c.response_path = j.value("response_path", c.response_path);
    c.prompt_version = j.value("prompt_version", c.prompt_version);
    require(c.max_concurrency >= 1, "max_concurrency must be >= 1");
    require(c.max_retries >= 0, "max_retries must be >= 0");
    return c;
}

nlohmann::json build_request_body(const EndpointConfig& config, const std::string& prompt) {
    nlohmann::json body;
    try {
        body = nlohmann::json::parse(config.request_template);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("request_template is not valid JSON: ") +
                                    e.what());
    }
    substitute(body, config, prompt);
    return body;
}

std::string extract_response_text(const nlohmann::json& response, const std::string& path) {
    const nlohmann::json* node = &response;
    std::istringstream steps(path);
    std::string step;
    while (std::getline(steps, step, '.')) {
        if (step.empty()) continue;
        bool numeric = step.find_first_not_of("0123456789") == std::string::npos;
        if (numeric && node->is_array()) {
            std::size_t i = std::stoul(step);
            if (i >= node->size())
                throw std::runtime_error("response path index out of range: " + step);
            node = &(*node)[i];
        } else if (node->is_object() && node->contains(step)) {
            node = &(*node)[step];
        } else {
            throw std::runtime_error("response has no field \"" + step + "\" on path " + path);
        }
    }
    return node->is_string() ? node->get<std::string>() : node->dump();
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

TransportResult complete_with_retries(Transport& transport, const OracleCall& call,
                                      int max_retries, double backoff_seconds) {
    require(max_retries >= 0, "max_retries must be >= 0");
    TransportResult last;
    int attempts = 0;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        if (attempt > 0 && !transport.deterministic() && backoff_seconds > 0.0) {
            double wait = backoff_seconds * std::pow(2.0, attempt - 1);
            std::this_thread::sleep_for(std::chrono::duration<double>(wait));
        }
        last = transport.complete(call);
        attempts += std::max(1, last.attempts);
        if (last.ok) break;
    }
    last.attempts = attempts;
    return last;
}

HttpTransport::HttpTransport(EndpointConfig config) : config_(std::move(config)) {
    require(!config_.base_url.empty(), "endpoint base_url must be set");
}

TransportResult HttpTransport::complete(const OracleCall& call) {
    TransportResult out;
    out.attempts = 1;
    auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) {
        out.error = "base_url needs a scheme, got " + config_.base_url;
        return out;
    }
    auto path_start = config_.base_url.find('/', scheme_end + 3);
    std::string origin = path_start == std::string::npos ? config_.base_url
                                                         : config_.base_url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? std::string("/")
                                                       : config_.base_url.substr(path_start);

    httplib::Client client(origin);
    auto timeout = std::chrono::milliseconds(
        static_cast<std::int64_t>(config_.timeout_seconds * 1000.0));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        // Key material lives only in this request header, never in config
        // dumps or transcripts.
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key != nullptr && *key != '\0')
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::string body = build_request_body(config_, call.prompt).dump();
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
        out.error = "transport failure: " + httplib::to_string(res.error());
        return out;
    }
    if (res->status < 200 || res->status >= 300) {
        out.error = "endpoint returned status " + std::to_string(res->status);
        return out;
    }
    try {
        auto parsed = nlohmann::json::parse(res->body);
        out.raw_output = extract_response_text(parsed, config_.response_path);
        out.ok = true;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

OracleStub::OracleStub(TransferFunction tf, std::uint64_t seed,
                       std::map<std::string, std::string> golds)
    : tf_(std::move(tf)), seed_(seed), golds_(std::move(golds)) {}

TransportResult OracleStub::complete(const OracleCall& call) {
    TransportResult out;
    out.attempts = 1;
    auto it = golds_.find(call.question_id);
    if (it == golds_.end()) {
        out.error = "stub has no gold answer for question " + call.question_id;
        return out;
    }
    double p = tf_.success_prob({call.a, call.b});
    bool hit = counter_uniform(seed_, static_cast<std::uint64_t>(call.call_id), 1) < p;
    std::string answer = it->second;
    if (!hit) {
        long gold = std::strtol(answer.c_str(), nullptr, 10);
        answer = std::to_string((gold + 1) % 1000);
    }
    out.raw_output = "Working through the candidates, the answer is \\boxed{" + answer + "}.";
    out.ok = true;
    return out;
}

RandomPickerStub::RandomPickerStub(std::uint64_t seed) : seed_(seed) {}

TransportResult RandomPickerStub::complete(const OracleCall& call) {
    TransportResult out;
    out.attempts = 1;
    out.ok = true;
    if (call.context_answers.empty()) {
        out.raw_output = "There is nothing to go on here.";
        return out;
    }
    auto i = counter_below(seed_, static_cast<std::uint64_t>(call.call_id), 7,
                           call.context_answers.size());
    const std::string& picked = call.context_answers[i];
    if (picked.empty()) {
        out.raw_output = "The solution I trust most gives no final answer.";
        return out;
    }
    out.raw_output = "I will go with solution " + std::to_string(i + 1) + ": \\boxed{" +
                     picked + "}.";
    return out;
}

FlakyStub::FlakyStub(int failures, std::string output)
    : failures_(failures), output_(std::move(output)) {}

TransportResult FlakyStub::complete(const OracleCall& call) {
    TransportResult out;
    out.attempts = 1;
    int seen;
    {
        static std::mutex mu;
        std::lock_guard<std::mutex> lock(mu);
        seen = attempts_[call.call_id]++;
    }
    if (seen < failures_) {
        out.error = "simulated outage";
        return out;
    }
    out.ok = true;
    out.raw_output = output_;
    return out;
}

// ---------------------------------------------------------------------------
// Transcripts
// ---------------------------------------------------------------------------

nlohmann::json Transcript::to_json() const {
    return nlohmann::json{{"call_id", call_id},
                          {"question_id", question_id},
                          {"a", a},
                          {"b", b},
                          {"context_solution_ids", context_solution_ids},
                          {"raw_output", raw_output},
                          {"extracted_answer", extracted_answer},
                          {"score", score},
                          {"audit", audit},
                          {"ok", ok},
                          {"error", error},
                          {"timestamp", timestamp},
                          {"model", model}};
}

Transcript Transcript::from_json(const nlohmann::json& j) {
    Transcript t;
    t.call_id = j.value("call_id", t.call_id);
    t.question_id = j.value("question_id", t.question_id);
    t.a = j.value("a", t.a);
    t.b = j.value("b", t.b);
    t.context_solution_ids =
        j.value("context_solution_ids", t.context_solution_ids);
    t.raw_output = j.value("raw_output", t.raw_output);
    t.extracted_answer = j.value("extracted_answer", t.extracted_answer);
    t.score = j.value("score", t.score);
    t.audit = j.value("audit", t.audit);
    t.ok = j.value("ok", t.ok);
    t.error = j.value("error", t.error);
    t.timestamp = j.value("timestamp", t.timestamp);
    t.model = j.value("model", t.model);
    return t;
}

void write_transcripts(const std::string& path, const std::vector<Transcript>& ts,
                       bool append) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open transcript file " + path);
    for (const auto& t : ts) out << t.to_json().dump() << '\n';
}

std::vector<Transcript> read_transcripts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open transcript file " + path);
    std::vector<Transcript> ts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ts.push_back(Transcript::from_json(nlohmann::json::parse(line)));
    }
    return ts;
}

// ---------------------------------------------------------------------------
// Accuracy cells and solution banks
// ---------------------------------------------------------------------------

AccuracyCell AccuracyCell::from_counts(int a, int b, std::int64_t successes,
                                       std::int64_t n_calls) {
    require(n_calls >= 0 && successes >= 0 && successes <= n_calls,
            "cell counts must satisfy 0 <= successes <= n_calls");
    AccuracyCell c;
    c.a = a;
    c.b = b;
    c.n_calls = n_calls;
    c.successes = successes;
    if (n_calls > 0) {
        c.acc = static_cast<double>(successes) / static_cast<double>(n_calls);
        c.std_err = std::sqrt(c.acc * (1.0 - c.acc) / static_cast<double>(n_calls));
    }
    return c;
}

nlohmann::json AccuracyCell::to_json() const {
    return nlohmann::json{{"a", a},           {"b", b},   {"n_calls", n_calls},
                          {"successes", successes}, {"acc", acc}, {"stderr", std_err}};
}

AccuracyCell AccuracyCell::from_json(const nlohmann::json& j) {
    AccuracyCell c;
    c.a = j.value("a", 0);
    c.b = j.value("b", 0);
    c.n_calls = j.value("n_calls", std::int64_t{0});
    c.successes = j.value("successes", std::int64_t{0});
    c.acc = j.value("acc", 0.0);
    c.std_err = j.value("stderr", 0.0);
    return c;
}

namespace {

std::int64_t count_unused(const std::vector<SolutionRecord>& pool,
                          const std::set<std::string>& used) {
    std::int64_t n = 0;
    for (const auto& r : pool)
        if (used.find(r.id) == used.end()) ++n;
    return n;
}

nlohmann::json record_to_json(const SolutionRecord& r) {
    return nlohmann::json{{"id", r.id}, {"text", r.text}, {"extracted_answer", r.extracted_answer}};
}

SolutionRecord record_from_json(const nlohmann::json& j) {
    SolutionRecord r;
    r.id = j.value("id", std::string());
    r.text = j.value("text", std::string());
    r.extracted_answer = j.value("extracted_answer", std::string());
    return r;
}

}  // namespace

std::int64_t SolutionBank::unused_correct() const {
    return count_unused(correct_pool, used_ids);
}

std::int64_t SolutionBank::unused_incorrect() const {
    return count_unused(incorrect_pool, used_ids);
}

nlohmann::json SolutionBank::to_json() const {
    nlohmann::json correct = nlohmann::json::array();
    for (const auto& r : correct_pool) correct.push_back(record_to_json(r));
    nlohmann::json incorrect = nlohmann::json::array();
    for (const auto& r : incorrect_pool) incorrect.push_back(record_to_json(r));
    return nlohmann::json{{"question_id", question_id},
                          {"gold_answer", gold_answer},
                          {"correct_pool", correct},
                          {"incorrect_pool", incorrect},
                          {"used_ids", used_ids},
                          {"base_cell", base_cell.to_json()}};
}

SolutionBank SolutionBank::from_json(const nlohmann::json& j) {
    SolutionBank b;
    b.question_id = j.value("question_id", std::string());
    b.gold_answer = j.value("gold_answer", std::string());
    for (const auto& r : j.value("correct_pool", nlohmann::json::array()))
        b.correct_pool.push_back(record_from_json(r));
    for (const auto& r : j.value("incorrect_pool", nlohmann::json::array()))
        b.incorrect_pool.push_back(record_from_json(r));
    for (const auto& id : j.value("used_ids", nlohmann::json::array()))
        b.used_ids.insert(id.get<std::string>());
    if (j.contains("base_cell")) b.base_cell = AccuracyCell::from_json(j["base_cell"]);

    std::set<std::string> seen;
    for (const auto& r : b.correct_pool)
        require(seen.insert(r.id).second, "duplicate solution id " + r.id);
    for (const auto& r : b.incorrect_pool)
        require(seen.insert(r.id).second, "solution id " + r.id + " appears in both pools");
    return b;
}

void SolutionBank::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open bank file " + path);
    out << to_json().dump(2) << '\n';
}

SolutionBank SolutionBank::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open bank file " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

SolutionBank make_synthetic_bank(const Question& q, std::int64_t n_correct,
                                 std::int64_t n_incorrect) {
    require(n_correct >= 0 && n_incorrect >= 0, "pool sizes must be >= 0");
    SolutionBank bank;
    bank.question_id = q.id;
    bank.gold_answer = canonicalize_answer(q.gold_answer);
    long gold = std::strtol(bank.gold_answer.c_str(), nullptr, 10);
    for (std::int64_t i = 0; i < n_correct; ++i) {
        SolutionRecord r;
        r.id = q.id + "-c" + std::to_string(i);
        r.text = "After checking the cases, the answer is \\boxed{" + bank.gold_answer + "}.";
        r.extracted_answer = bank.gold_answer;
        bank.correct_pool.push_back(std::move(r));
    }
    for (std::int64_t i = 0; i < n_incorrect; ++i) {
        // Offset in 1..999 keeps the wrong answer distinct from the gold.
        long wrong = (gold + 1 + static_cast<long>(i % 999)) % 1000;
        SolutionRecord r;
        r.id = q.id + "-w" + std::to_string(i);
        r.text = "I believe the answer is \\boxed{" + std::to_string(wrong) + "}.";
        r.extracted_answer = std::to_string(wrong);
        bank.incorrect_pool.push_back(std::move(r));
    }
    bank.base_cell = AccuracyCell::from_counts(0, 0, 0, 0);
    return bank;
}

// ---------------------------------------------------------------------------
// Prompts and experiment plumbing
// ---------------------------------------------------------------------------

std::string build_prompt(const Question& q,
                         const std::vector<const SolutionRecord*>& context) {
    std::ostringstream out;
    out << q.text << "\n";
    if (!context.empty()) {
        out << "\nHere are " << context.size()
            << " candidate solutions from other attempts. Some may be wrong.\n";
        for (std::size_t i = 0; i < context.size(); ++i)
            out << "\n" << (i + 1) << ". " << context[i]->text << "\n";
    }
    out << "\nSolve the problem and give only your final answer as \\boxed{<integer>}.";
    return out.str();
}

namespace {

// Runs the prepared calls (round-robin over max_concurrency threads, results
// keyed by position so scheduling cannot reorder anything), grades the
// outputs, and returns transcripts in call-id order.
std::vector<Transcript> run_calls(const std::vector<OracleCall>& calls, const Question& q,
                                  Transport& transport, const EndpointConfig& config) {
    std::vector<TransportResult> results(calls.size());
    int workers = std::max(1, config.max_concurrency);
    workers = static_cast<int>(std::min<std::size_t>(workers, calls.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < calls.size(); ++i)
            results[i] = complete_with_retries(transport, calls[i], config.max_retries,
                                               config.retry_backoff_seconds);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < calls.size();
                     i = next.fetch_add(1)) {
                    results[i] = complete_with_retries(transport, calls[i], config.max_retries,
                                                       config.retry_backoff_seconds);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    std::vector<Transcript> transcripts(calls.size());
    for (std::size_t i = 0; i < calls.size(); ++i) {
        const auto& call = calls[i];
        const auto& res = results[i];
        Transcript t;
        t.call_id = call.call_id;
        t.question_id = call.question_id;
        t.a = call.a;
        t.b = call.b;
        t.context_solution_ids = call.context_solution_ids;
        t.ok = res.ok;
        t.error = res.error;
        t.timestamp = stamp(transport, call.call_id);
        t.model = config.model_name;
        if (res.ok) {
            t.raw_output = res.raw_output;
            GradeResult g = grade(res.raw_output, q.gold_answer);
            t.extracted_answer = g.extracted;
            t.score = g.score;
            t.audit = g.audit;
        }
        transcripts[i] = t;
    }
    std::sort(transcripts.begin(), transcripts.end(),
              [](const Transcript& x, const Transcript& y) { return x.call_id < y.call_id; });
    return transcripts;
}

// Draws `n` fresh records from a pool, consuming the no-reuse ledger.
std::vector<const SolutionRecord*> take_fresh(const std::vector<SolutionRecord>& pool,
                                              std::set<std::string>& used, std::size_t& cursor,
                                              int n) {
    std::vector<const SolutionRecord*> out;
    out.reserve(static_cast<std::size_t>(n));
    while (out.size() < static_cast<std::size_t>(n)) {
        if (cursor >= pool.size())
            throw std::runtime_error("solution pool ran dry mid-sweep");
        const SolutionRecord& r = pool[cursor++];
        if (used.insert(r.id).second) out.push_back(&r);
    }
    return out;
}

// Shared body of the two sweep protocols: `schedule` lists one (a, b) pair
// per configuration, each run calls_per_config times.
std::vector<AccuracyCell> run_sweep(const Question& q, SolutionBank& bank,
                                    const std::vector<std::pair<int, int>>& schedule,
                                    std::int64_t calls_per_config, Transport& transport,
                                    const EndpointConfig& config, std::uint64_t seed,
                                    std::vector<Transcript>* transcripts,
                                    const std::string& sweep_name) {
    require(calls_per_config >= 1, "calls_per_config must be >= 1");
    std::int64_t need_correct = 0;
    std::int64_t need_incorrect = 0;
    for (auto [a, b] : schedule) {
        require(a >= 0 && b >= 0, "context composition must be non-negative");
        need_correct += calls_per_config * a;
        need_incorrect += calls_per_config * b;
    }
    if (bank.unused_correct() < need_correct)
        throw std::runtime_error(sweep_name + " needs " + std::to_string(need_correct) +
                                 " unused correct solutions but the bank has " +
                                 std::to_string(bank.unused_correct()));
    if (bank.unused_incorrect() < need_incorrect)
        throw std::runtime_error(sweep_name + " needs " + std::to_string(need_incorrect) +
                                 " unused incorrect solutions but the bank has " +
                                 std::to_string(bank.unused_incorrect()));

    Rng root(seed);
    std::size_t correct_cursor = 0;
    std::size_t incorrect_cursor = 0;
    std::vector<OracleCall> calls;
    std::int64_t call_id = 0;
    for (auto [a, b] : schedule) {
        for (std::int64_t rep = 0; rep < calls_per_config; ++rep, ++call_id) {
            auto ctx = take_fresh(bank.correct_pool, bank.used_ids, correct_cursor, a);
            auto wrong = take_fresh(bank.incorrect_pool, bank.used_ids, incorrect_cursor, b);
            ctx.insert(ctx.end(), wrong.begin(), wrong.end());
            // Presentation order is shuffled per call so position carries no
            // signal about correctness.
            Rng shuffle = root.split(static_cast<std::uint64_t>(call_id));
            for (std::size_t i = ctx.size(); i > 1; --i)
                std::swap(ctx[i - 1], ctx[shuffle.next_below(i)]);

            OracleCall call;
            call.call_id = call_id;
            call.question_id = q.id;
            call.a = a;
            call.b = b;
            for (const auto* r : ctx) {
                call.context_solution_ids.push_back(r->id);
                call.context_answers.push_back(r->extracted_answer);
            }
            call.prompt = build_prompt(q, ctx);
            calls.push_back(std::move(call));
        }
    }

    auto ts = run_calls(calls, q, transport, config);
    std::map<std::pair<int, int>, std::pair<std::int64_t, std::int64_t>> counts;
    for (const auto& t : ts) {
        if (!t.ok) continue;  // failed calls stay out of the denominator
        auto& c = counts[{t.a, t.b}];
        c.first += t.score;
        c.second += 1;
    }
    std::vector<AccuracyCell> cells;
    for (auto [a, b] : schedule) {
        auto c = counts[{a, b}];
        cells.push_back(AccuracyCell::from_counts(a, b, c.first, c.second));
    }
    if (transcripts != nullptr)
        transcripts->insert(transcripts->end(), ts.begin(), ts.end());
    return cells;
}

}  // namespace

SolutionBank generate_base_solutions(const Question& q, std::int64_t n_calls,
                                     Transport& transport, const EndpointConfig& config,
                                     std::uint64_t seed, std::vector<Transcript>* transcripts) {
    require(n_calls >= 1, "n_calls must be >= 1");
    (void)seed;  // kept in the signature so every protocol is seeded alike
    std::vector<OracleCall> calls(static_cast<std::size_t>(n_calls));
    for (std::int64_t i = 0; i < n_calls; ++i) {
        calls[static_cast<std::size_t>(i)].call_id = i;
        calls[static_cast<std::size_t>(i)].question_id = q.id;
        calls[static_cast<std::size_t>(i)].prompt = build_prompt(q, {});
    }
    auto ts = run_calls(calls, q, transport, config);

    SolutionBank bank;
    bank.question_id = q.id;
    bank.gold_answer = canonicalize_answer(q.gold_answer);
    std::int64_t ok_calls = 0;
    std::int64_t successes = 0;
    for (const auto& t : ts) {
        if (!t.ok) continue;
        ++ok_calls;
        successes += t.score;
        SolutionRecord r;
        r.id = q.id + "-base-" + std::to_string(t.call_id);
        r.text = t.raw_output;
        r.extracted_answer = t.extracted_answer;
        (t.score == 1 ? bank.correct_pool : bank.incorrect_pool).push_back(std::move(r));
    }
    bank.base_cell = AccuracyCell::from_counts(0, 0, successes, ok_calls);
    if (transcripts != nullptr)
        transcripts->insert(transcripts->end(), ts.begin(), ts.end());
    return bank;
}

std::vector<AccuracyCell> run_one_correct_sweep(const Question& q, SolutionBank& bank,
                                                int b_max, std::int64_t calls_per_config,
                                                Transport& transport,
                                                const EndpointConfig& config,
                                                std::uint64_t seed,
                                                std::vector<Transcript>* transcripts) {
    require(b_max >= 0, "b_max must be >= 0");
    std::vector<std::pair<int, int>> schedule;
    for (int b = 0; b <= b_max; ++b) schedule.emplace_back(1, b);
    return run_sweep(q, bank, schedule, calls_per_config, transport, config, seed,
                     transcripts, "one-correct sweep");
}

std::vector<AccuracyCell> run_fixed_total_sweep(const Question& q, SolutionBank& bank,
                                                int total, std::int64_t calls_per_config,
                                                Transport& transport,
                                                const EndpointConfig& config,
                                                std::uint64_t seed,
                                                std::vector<Transcript>* transcripts) {
    require(total >= 0, "total context size must be >= 0");
    std::vector<std::pair<int, int>> schedule;
    for (int a = 0; a <= total; ++a) schedule.emplace_back(a, total - a);
    return run_sweep(q, bank, schedule, calls_per_config, transport, config, seed,
                     transcripts, "fixed-total sweep");
}

double binomial_mixture_accuracy(double base_acc, const std::vector<AccuracyCell>& cells,
                                 std::vector<double>* weights) {
    base_acc = clamp_probability(base_acc, "base accuracy");
    require(!cells.empty(), "mixture needs at least one accuracy cell");
    int m = cells.front().a + cells.front().b;
    std::map<int, double> by_a;
    for (const auto& c : cells) {
        require(c.a + c.b == m, "mixture cells must share one total context size");
        require(by_a.emplace(c.a, c.acc).second,
                "duplicate accuracy cell for a = " + std::to_string(c.a));
    }
    for (int a = 0; a <= m; ++a) {
        if (by_a.find(a) == by_a.end())
            throw std::runtime_error("missing accuracy cell for a = " + std::to_string(a) +
                                     " of total " + std::to_string(m));
    }

    double acc = 0.0;
    double binom = 1.0;  // C(m, a), updated multiplicatively
    if (weights != nullptr) weights->assign(static_cast<std::size_t>(m) + 1, 0.0);
    for (int a = 0; a <= m; ++a) {
        double w = binom * std::pow(base_acc, a) * std::pow(1.0 - base_acc, m - a);
        if (weights != nullptr) (*weights)[static_cast<std::size_t>(a)] = w;
        acc += w * by_a[a];
        binom = binom * static_cast<double>(m - a) / static_cast<double>(a + 1);
    }
    return acc;
}

TransferFunction fit_empirical_transfer(const std::vector<Transcript>& transcripts) {
    std::map<std::pair<int, int>, std::pair<std::int64_t, std::int64_t>> counts;
    for (const auto& t : transcripts) {
        if (!t.ok) continue;
        auto& c = counts[{t.a, t.b}];
        c.first += t.score;
        c.second += 1;
    }
    require(!counts.empty(), "no successful transcripts to fit");

    std::vector<EmpiricalCell> cells;
    std::int64_t all_succ = 0;
    std::int64_t all_n = 0;
    for (const auto& [key, c] : counts) {
        EmpiricalCell cell;
        cell.correct = key.first;
        cell.incorrect = key.second;
        cell.prob = static_cast<double>(c.first) / static_cast<double>(c.second);
        cell.n = c.second;
        cells.push_back(cell);
        all_succ += c.first;
        all_n += c.second;
    }
    double fallback = static_cast<double>(all_succ) / static_cast<double>(all_n);
    auto base = counts.find({0, 0});
    if (base != counts.end())
        fallback = static_cast<double>(base->second.first) /
                   static_cast<double>(base->second.second);
    return TransferFunction::empirical(std::move(cells), fallback);
}

std::vector<Transcript> simulate_transcripts(const TransferFunction& tf,
                                             const std::vector<std::pair<int, int>>& cells,
                                             std::int64_t per_cell, std::uint64_t seed) {
    require(per_cell >= 1, "per_cell must be >= 1");
    std::vector<Transcript> ts;
    ts.reserve(cells.size() * static_cast<std::size_t>(per_cell));
    std::int64_t call_id = 0;
    for (auto [a, b] : cells) {
        double p = tf.success_prob({a, b});
        for (std::int64_t i = 0; i < per_cell; ++i, ++call_id) {
            bool hit = counter_uniform(seed, static_cast<std::uint64_t>(call_id), 2) < p;
            Transcript t;
            t.call_id = call_id;
            t.question_id = "synthetic";
            t.a = a;
            t.b = b;
            t.raw_output = hit ? "\\boxed{42}" : "\\boxed{41}";
            t.extracted_answer = hit ? "42" : "41";
            t.score = hit ? 1 : 0;
            t.timestamp = kLogicalEpoch + call_id;
            t.model = "simulated";
            ts.push_back(std::move(t));
        }
    }
    return ts;
}

}  // namespace oraclesim
