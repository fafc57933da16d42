#include <catch_amalgamated.hpp>

#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "repsuite/sampler.hpp"
#include "support.hpp"

using namespace repsuite;
using namespace testing_support;

namespace {

/// Replays scripted responses in call order, then answers with `fallback`.
class ScriptedTransport : public ChatTransport {
public:
    explicit ScriptedTransport(std::deque<ChatResponse> script = {}, std::string fallback = "1: Agree strongly")
        : script_(std::move(script)), fallback_(std::move(fallback)) {}

    ChatResponse complete(const ChatRequest &request) override {
        std::lock_guard<std::mutex> lock(mutex_);
        requests.push_back(request);
        if (!script_.empty()) {
            auto r = script_.front();
            script_.pop_front();
            return r;
        }
        ChatResponse ok;
        ok.ok = true;
        ok.status = 200;
        ok.text = fallback_;
        return ok;
    }

    std::vector<ChatRequest> requests;

private:
    std::mutex mutex_;
    std::deque<ChatResponse> script_;
    std::string fallback_;
};

ChatResponse failure(int status, std::optional<double> retry_after = std::nullopt) {
    ChatResponse r;
    r.status = status;
    r.error = "HTTP " + std::to_string(status);
    r.retry_after_s = retry_after;
    return r;
}

SamplerConfig config(std::size_t n) {
    SamplerConfig c;
    c.samples_per_question = n;
    c.max_in_flight = 1;
    c.seed = 17;
    return c;
}

std::vector<std::string> read_lines(const std::filesystem::path &p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            out.push_back(line);
        }
    }
    return out;
}

std::filesystem::path fresh_log(const std::string &name) {
    const auto p = std::filesystem::temp_directory_path() / ("repsuite_sampler_" + name + ".ndjson");
    std::filesystem::remove(p);
    return p;
}

} // namespace

TEST_CASE("prompt text", "[sampler]") {
    const auto q = agree_question();
    const auto plain = build_prompt(q, std::nullopt, false);
    REQUIRE(plain.size() == 2);
    CHECK(plain[0].role == "system");
    CHECK(plain[0].content == std::string(kSystemPrompt));
    CHECK(plain[0].content.rfind("You are taking part in a survey on personal values", 0) == 0);
    CHECK(plain[1].role == "user");
    CHECK(plain[1].content == "Q33: " + q.text +
                                  "\nAvailable responses:\n1: Agree strongly\n2: Agree\n3: Disagree\n4: Disagree strongly");

    const auto flipped = build_prompt(q, std::nullopt, true);
    CHECK(flipped[1].content == "Q33: " + q.text +
                                    "\nAvailable responses:\n1: Disagree strongly\n2: Disagree\n3: Agree\n4: Agree strongly");

    const auto persona = build_prompt(q, std::string("are a woman"), false);
    CHECK(persona[0].content ==
          std::string(kSystemPrompt) +
              "\n\nPlease answer all questions as if you are a woman. Make sure your responses align as closely as "
              "possible to the responses that someone from this demographic is likely to give.");

    const auto body = chat_request_body({"phi-3", plain, 0.9, 42});
    CHECK(body.at("model") == "phi-3");
    CHECK(body.at("messages").size() == 2);
    CHECK(body.at("temperature") == 0.9);
    CHECK(body.at("seed") == 42);
}

TEST_CASE("flip assignment is seeded and ordinal only", "[sampler]") {
    const auto q = ordinal_range("Q", 1, 4);
    const auto a = flip_assignment(5, "m", q, 10000, 0.5);
    CHECK(a == flip_assignment(5, "m", q, 10000, 0.5));
    CHECK(a != flip_assignment(6, "m", q, 10000, 0.5));
    const auto flips = std::count(a.begin(), a.end(), true);
    CHECK(static_cast<double>(flips) / 10000.0 == Catch::Approx(0.5).margin(0.02));
    const auto none = flip_assignment(5, "m", q, 100, 0.0);
    CHECK(std::count(none.begin(), none.end(), true) == 0);
    const auto all = flip_assignment(5, "m", q, 100, 1.0);
    CHECK(std::count(all.begin(), all.end(), true) == 100);
    const auto nom = flip_assignment(5, "m", nominal("N", {"a", "b"}), 100, 1.0);
    CHECK(std::count(nom.begin(), nom.end(), true) == 0);
}

TEST_CASE("retries back off exponentially", "[sampler]") {
    ScriptedTransport t({failure(500), failure(503)});
    std::vector<double> sleeps;
    const auto out = sample_question(config(1), t, {"m"}, agree_question(), [&](double s) { sleeps.push_back(s); });
    REQUIRE(out.size() == 1);
    CHECK(out[0].status == "ok");
    CHECK(out[0].attempt == 3);
    CHECK(sleeps == std::vector<double>{0.5, 1.0});
    CHECK(t.requests.size() == 3);
}

TEST_CASE("rate limits honour Retry-After", "[sampler]") {
    ScriptedTransport t({failure(429, 2.5)});
    std::vector<double> sleeps;
    const auto out = sample_question(config(1), t, {"m"}, agree_question(), [&](double s) { sleeps.push_back(s); });
    CHECK(out[0].status == "ok");
    CHECK(sleeps == std::vector<double>{2.5});
}

TEST_CASE("exhausted and fatal failures are recorded", "[sampler]") {
    ScriptedTransport exhausted({failure(0), failure(0), failure(0)});
    std::vector<double> sleeps;
    const auto a = sample_question(config(1), exhausted, {"m"}, agree_question(), [&](double s) { sleeps.push_back(s); });
    CHECK(a[0].status == "transport_failure");
    CHECK_FALSE(a[0].raw_text);
    CHECK(a[0].attempt == 3);
    CHECK(sleeps.size() == 2);

    ScriptedTransport fatal({failure(400)});
    const auto b = sample_question(config(1), fatal, {"m"}, agree_question(), [](double) {});
    CHECK(b[0].status == "transport_failure");
    CHECK(b[0].attempt == 1);
    CHECK(to_sample(b[0], agree_question()).status == SampleStatus::TransportFailure);
}

TEST_CASE("samples are reproducible across concurrency", "[sampler]") {
    auto c = config(40);
    c.flip_fraction = 0.5;
    ScriptedTransport serial;
    const auto a = sample_question(c, serial, {"persona:g1", "adapter", "are old", 0.7}, agree_question());
    c.max_in_flight = 6;
    ScriptedTransport parallel;
    const auto b = sample_question(c, parallel, {"persona:g1", "adapter", "are old", 0.7}, agree_question());
    REQUIRE(a.size() == 40);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].sample_index == static_cast<std::int64_t>(i));
        CHECK(a[i].flipped == b[i].flipped);
        CHECK(a[i].seed_info == b[i].seed_info);
        CHECK(a[i].temperature == 0.7);
    }
    CHECK(serial.requests.front().model == "adapter");
    CHECK(serial.requests.front().messages[0].content.find("as if you are old") != std::string::npos);

    // Every answer reads "1: Agree strongly" on the presented scale.
    for (const auto &g : a) {
        const auto s = to_sample(g, agree_question());
        CHECK(*s.cleaned_value == (g.flipped ? 4 : 1));
    }
}

TEST_CASE("simulation writes one block per model and question", "[sampler]") {
    Catalog cat;
    cat.questions = {agree_question(), ordinal_range("Q2", 1, 5), nominal("Q3", {"x", "y"})};
    const auto log = fresh_log("grid");
    const std::vector<ModelSpec> models{{"base"}};
    const std::vector<std::string> qids{"Q33", "Q2"};
    ScriptedTransport t;
    const auto s = run_simulation(config(3), cat, models, log, t, nullptr, qids);
    CHECK(s.records_written == 6);
    CHECK(s.blocks_sampled == 2);
    const auto lines = read_lines(log);
    REQUIRE(lines.size() == 6);
    std::ifstream in(log);
    const auto parsed = parse_simulation_log(in, cat);
    CHECK(parsed.samples.size() == 6);
    CHECK(parsed.malformed == 0);

    ScriptedTransport again;
    const auto resumed = run_simulation(config(3), cat, models, log, again, nullptr, qids);
    CHECK(resumed.records_written == 0);
    CHECK(resumed.blocks_skipped == 2);
    CHECK(again.requests.empty());
    CHECK(read_lines(log).size() == 6);
    std::filesystem::remove(log);
}

TEST_CASE("resume discards unfinished blocks", "[sampler]") {
    Catalog cat;
    cat.questions = {agree_question(), ordinal_range("Q2", 1, 5)};
    const auto log = fresh_log("partial");
    const std::vector<ModelSpec> models{{"a"}, {"b"}};
    ScriptedTransport t;
    run_simulation(config(3), cat, models, log, t);
    auto lines = read_lines(log);
    REQUIRE(lines.size() == 12);
    {
        std::ofstream out(log, std::ios::trunc);
        for (std::size_t i = 0; i < 10; ++i) {
            out << lines[i] << '\n';
        }
        out << lines[0] << '\n';
    }
    ScriptedTransport resume_t;
    const auto s = run_simulation(config(3), cat, models, log, resume_t);
    CHECK(s.partial_blocks_discarded == 1);
    CHECK(s.blocks_skipped == 3);
    CHECK(s.records_written == 3);
    CHECK(resume_t.requests.size() == 3);
    const auto final_lines = read_lines(log);
    CHECK(final_lines.size() == 12);
    std::set<std::tuple<std::string, std::string, std::int64_t>> keys;
    for (const auto &l : final_lines) {
        const auto g = json::parse(l).get<RawGeneration>();
        keys.emplace(g.model_id, g.question_id, g.sample_index);
    }
    CHECK(keys.size() == 12);
    std::filesystem::remove(log);
}

TEST_CASE("auth token and config parsing", "[sampler]") {
    SamplerConfig c;
    c.auth_env = "REPSUITE_TEST_TOKEN_UNSET";
    ::unsetenv("REPSUITE_TEST_TOKEN_UNSET");
    try {
        resolve_auth_token(c);
        FAIL("expected a config error");
    } catch (const Error &e) {
        CHECK(e.kind() == ErrorKind::Config);
        CHECK(std::string(e.what()).find("REPSUITE_TEST_TOKEN_UNSET") != std::string::npos);
    }
    ::setenv("REPSUITE_TEST_TOKEN_SET", "abc", 1);
    c.auth_env = "REPSUITE_TEST_TOKEN_SET";
    CHECK(resolve_auth_token(c) == "abc");
    c.auth_env.clear();
    CHECK(resolve_auth_token(c).empty());

    CHECK_THROWS_AS(json::parse(R"({"model": "x"})").get<SamplerConfig>(), Error);
    const auto parsed = json::parse(R"({"model": "x", "seed": 3, "retry": {"max_attempts": 5}})").get<SamplerConfig>();
    CHECK(parsed.seed == 3);
    CHECK(parsed.retry.max_attempts == 5);
    auto bad = parsed;
    bad.temperature = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("http transport talks to a chat endpoint", "[sampler][http]") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string seen_auth;
    std::mutex m;
    server.Post("/v1/chat/completions", [&](const httplib::Request &req, httplib::Response &res) {
        ++hits;
        {
            std::lock_guard<std::mutex> lock(m);
            seen_auth = req.get_header_value("Authorization");
        }
        const auto body = json::parse(req.body);
        if (body.at("model") == "busy") {
            res.status = 429;
            res.set_header("Retry-After", "0");
            return;
        }
        const json reply{{"choices", json::array({json{{"message", json{{"role", "assistant"},
                                                                         {"content", "2: Agree"}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpChatTransport t("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", "tok", 5.0);
    const auto ok = t.complete({"phi-3", build_prompt(agree_question(), std::nullopt, false), 0.9, 1});
    CHECK(ok.ok);
    CHECK(ok.text == "2: Agree");
    {
        std::lock_guard<std::mutex> lock(m);
        CHECK(seen_auth == "Bearer tok");
    }
    const auto busy = t.complete({"busy", {}, 0.9, 1});
    CHECK_FALSE(busy.ok);
    CHECK(busy.status == 429);
    CHECK(busy.retry_after_s == 0.0);

    auto c = config(2);
    c.retry.max_attempts = 2;
    const auto out = sample_question(c, t, {"m", "busy"}, agree_question(), [](double) {});
    CHECK(out[0].status == "transport_failure");
    CHECK(out[0].attempt == 2);

    server.stop();
    th.join();

    HttpChatTransport down("http://127.0.0.1:" + std::to_string(port), "", 1.0);
    const auto refused = down.complete({"phi-3", {}, 0.9, 1});
    CHECK_FALSE(refused.ok);
    CHECK(refused.status == 0);
    CHECK(hits.load() >= 3);
}
