#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "core.hpp"
#include "ingestion.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace repsuite {

// ---------------------------------------------------------------------------
// Prompts

inline constexpr std::string_view kSystemPrompt =
    "You are taking part in a survey on personal values and will be asked a range of multiple choice questions.\n"
    "Each question will have the following format:\n"
    "\n"
    "\"\n"
    "Q33: For each of the following statements I read out, can you tell me how much you agree with each. "
    "Do you agree strongly, agree, disagree, or disagree strongly? - Carrot cake is tastier than chocolate cake\n"
    "Available responses:\n"
    "1: Agree strongly\n"
    "2: Agree\n"
    "3: Disagree\n"
    "4: Strongly disagree\n"
    "\"\n"
    "\n"
    "For each question, just select a single answer from the set of available responses. Please copy the answer "
    "exactly as written in the 'Available responses' list above. Do not change spelling or capitalisation.\n"
    "For example:\n"
    "4: Agree strongly";

/// Persona paragraph; `persona` completes "as if you ...".
inline std::string persona_paragraph(std::string_view persona) {
    return "Please answer all questions as if you " + std::string(persona) +
           ". Make sure your responses align as closely as possible to the responses that someone from this "
           "demographic is likely to give.";
}

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage &) const = default;
};

/// System message (plus persona paragraph when given) and a user message with
/// the question and its response list, reversed when flipped.
inline std::vector<ChatMessage> build_prompt(const QuestionSpec &question, const std::optional<std::string> &persona,
                                             bool flipped) {
    const auto shown = presented_question(question, flipped);
    std::string system(kSystemPrompt);
    if (persona && !persona->empty()) {
        system += "\n\n" + persona_paragraph(*persona);
    }
    std::string user = question.id + ": " + question.text + "\nAvailable responses:";
    for (const auto &opt : shown.responses) {
        user += "\n" + std::to_string(opt.value) + ": " + opt.label;
    }
    return {{"system", std::move(system)}, {"user", std::move(user)}};
}

// ---------------------------------------------------------------------------
// Transport

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.9;
    std::uint64_t seed = 0;
};

struct ChatResponse {
    bool ok = false;
    std::string text;
    int status = 0; ///< HTTP status; 0 for connection failures
    std::string error;
    std::optional<double> retry_after_s;
};

class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual ChatResponse complete(const ChatRequest &request) = 0;
};

inline json chat_request_body(const ChatRequest &request) {
    json messages = json::array();
    for (const auto &m : request.messages) {
        messages.push_back(json{{"role", m.role}, {"content", m.content}});
    }
    return json{{"model", request.model},
                {"messages", std::move(messages)},
                {"temperature", request.temperature},
                {"n", 1},
                {"seed", request.seed}};
}

/// Chat-completions client over HTTP(S). One connection per request, so a
/// single instance may be shared across worker threads.
class HttpChatTransport : public ChatTransport {
public:
    HttpChatTransport(std::string endpoint, std::string bearer_token, double timeout_s = 60.0)
        : token_{std::move(bearer_token)}, timeout_s_{timeout_s} {
        const auto scheme_end = endpoint.find("://");
        if (scheme_end == std::string::npos) {
            throw Error(ErrorKind::Config, "endpoint must include a scheme: " + endpoint);
        }
        const auto path_start = endpoint.find('/', scheme_end + 3);
        base_ = endpoint.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/v1/chat/completions" : endpoint.substr(path_start);
    }

    ChatResponse complete(const ChatRequest &request) override {
        ChatResponse out;
        httplib::Client client(base_);
        const auto secs = static_cast<time_t>(timeout_s_);
        client.set_connection_timeout(secs, 0);
        client.set_read_timeout(secs, 0);
        client.set_write_timeout(secs, 0);
        httplib::Headers headers;
        if (!token_.empty()) {
            headers.emplace("Authorization", "Bearer " + token_);
        }
        const auto res = client.Post(path_, headers, chat_request_body(request).dump(), "application/json");
        if (!res) {
            out.error = httplib::to_string(res.error());
            return out;
        }
        out.status = res->status;
        if (res->has_header("Retry-After")) {
            try {
                out.retry_after_s = std::stod(res->get_header_value("Retry-After"));
            } catch (const std::exception &) {
            }
        }
        if (res->status != 200) {
            out.error = "HTTP " + std::to_string(res->status);
            return out;
        }
        try {
            const auto body = json::parse(res->body);
            const auto &content = body.at("choices").at(0).at("message").at("content");
            out.text = content.is_string() ? content.get<std::string>() : std::string{};
            out.ok = true;
        } catch (const std::exception &e) {
            out.error = std::string("unexpected response body: ") + e.what();
        }
        return out;
    }

private:
    std::string base_;
    std::string path_;
    std::string token_;
    double timeout_s_;
};

// ---------------------------------------------------------------------------
// Configuration

struct RetryPolicy {
    int max_attempts = 3;
    double backoff_ms = 500.0;
    double max_backoff_ms = 10000.0;
};

struct SamplerConfig {
    std::string endpoint = "http://localhost:8000/v1/chat/completions";
    std::string model = "phi-3";
    std::string auth_env; ///< name of the env var holding the bearer token; empty for none
    double temperature = 0.9;
    std::size_t samples_per_question = 500;
    double flip_fraction = 0.5;
    std::size_t max_in_flight = 4;
    RetryPolicy retry;
    double timeout_s = 60.0;
    std::optional<std::string> persona;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(temperature > 0.0)) {
            throw Error(ErrorKind::Config, "temperature must be positive");
        }
        if (!(flip_fraction >= 0.0 && flip_fraction <= 1.0)) {
            throw Error(ErrorKind::Config, "flip_fraction must lie in [0, 1]");
        }
        if (samples_per_question < 1) {
            throw Error(ErrorKind::Config, "samples_per_question must be at least 1");
        }
        if (max_in_flight < 1 || retry.max_attempts < 1) {
            throw Error(ErrorKind::Config, "max_in_flight and retry.max_attempts must be at least 1");
        }
    }
};

/// One entry of the model grid. `model_name` overrides the endpoint model
/// (e.g. an adapter name); `persona` overrides the config persona.
struct ModelSpec {
    std::string id;
    std::optional<std::string> model_name;
    std::optional<std::string> persona;
    std::optional<double> temperature;
};

inline void from_json(const json &j, RetryPolicy &r) {
    r.max_attempts = j.value("max_attempts", r.max_attempts);
    r.backoff_ms = j.value("backoff_ms", r.backoff_ms);
    r.max_backoff_ms = j.value("max_backoff_ms", r.max_backoff_ms);
}

inline void from_json(const json &j, SamplerConfig &c) {
    c = SamplerConfig{};
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.auth_env = j.value("auth_env", c.auth_env);
    c.temperature = j.value("temperature", c.temperature);
    c.samples_per_question = j.value("samples_per_question", c.samples_per_question);
    c.flip_fraction = j.value("flip_fraction", c.flip_fraction);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    if (j.contains("retry")) {
        j.at("retry").get_to(c.retry);
    }
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    if (j.contains("persona") && j.at("persona").is_string()) {
        c.persona = j.at("persona").get<std::string>();
    }
    if (!j.contains("seed")) {
        throw Error(ErrorKind::Config, "sampler config needs an explicit seed");
    }
    c.seed = j.at("seed").get<std::uint64_t>();
}

inline void from_json(const json &j, ModelSpec &m) {
    j.at("id").get_to(m.id);
    m.model_name = j.contains("model") ? std::optional<std::string>(j.at("model").get<std::string>()) : std::nullopt;
    m.persona = j.contains("persona") ? std::optional<std::string>(j.at("persona").get<std::string>()) : std::nullopt;
    m.temperature =
        j.contains("temperature") ? std::optional<double>(j.at("temperature").get<double>()) : std::nullopt;
}

/// Reads the bearer token named by the config; fails before any request is
/// made when the variable is not set.
inline std::string resolve_auth_token(const SamplerConfig &config) {
    if (config.auth_env.empty()) {
        return {};
    }
    const char *value = std::getenv(config.auth_env.c_str());
    if (value == nullptr) {
        throw Error(ErrorKind::Config, "environment variable " + config.auth_env + " is not set");
    }
    return value;
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

inline bool retryable(const ChatResponse &r) { return r.status == 0 || r.status == 429 || r.status >= 500; }

} // namespace detail

/// Per-sample flip flags for one (model, question) block. Depends only on the
/// seed, so it is independent of request completion order.
inline std::vector<bool> flip_assignment(std::uint64_t seed, std::string_view model_id, const QuestionSpec &question,
                                         std::size_t n, double flip_fraction) {
    auto rng = seeded_rng(seed, "flip/" + std::string(model_id) + "/" + question.id);
    std::vector<bool> out(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const bool flip = rng.bernoulli(flip_fraction);
        out[i] = flip && question.is_ordinal();
    }
    return out;
}

/// Issues one request per sample with bounded concurrency and returns the raw
/// generations in sample order. Cleaning is left to ingestion.
inline std::vector<RawGeneration> sample_question(const SamplerConfig &config, ChatTransport &transport,
                                                  const ModelSpec &model, const QuestionSpec &question,
                                                  const std::function<void(double)> &sleep_for_s = {}) {
    config.validate();
    const std::size_t n = config.samples_per_question;
    const auto flips = flip_assignment(config.seed, model.id, question, n, config.flip_fraction);
    std::vector<std::uint64_t> seeds(n);
    {
        auto rng = seeded_rng(config.seed, "request/" + model.id + "/" + question.id);
        for (auto &s : seeds) {
            s = rng.next() >> 1;
        }
    }
    const auto persona = model.persona ? model.persona : config.persona;
    const double temperature = model.temperature.value_or(config.temperature);
    const auto sleep = sleep_for_s ? sleep_for_s : [](double s) {
        std::this_thread::sleep_for(std::chrono::duration<double>(s));
    };

    std::vector<RawGeneration> out(n);
    parallel_for(n, config.max_in_flight, [&](std::size_t i) {
        ChatRequest request{model.model_name.value_or(config.model), build_prompt(question, persona, flips[i]),
                            temperature, seeds[i]};
        RawGeneration g;
        g.model_id = model.id;
        g.question_id = question.id;
        g.flipped = flips[i];
        g.temperature = temperature;
        g.sample_index = static_cast<std::int64_t>(i);
        g.seed_info = std::to_string(config.seed) + "/" + std::to_string(seeds[i]);
        ChatResponse res;
        int attempt = 0;
        while (attempt < config.retry.max_attempts) {
            ++attempt;
            res = transport.complete(request);
            if (res.ok || !detail::retryable(res) || attempt == config.retry.max_attempts) {
                break;
            }
            const double backoff = std::min(config.retry.max_backoff_ms,
                                            config.retry.backoff_ms * static_cast<double>(1 << (attempt - 1)));
            sleep(res.retry_after_s.value_or(backoff / 1000.0));
        }
        g.attempt = attempt;
        g.timestamp = detail::utc_timestamp();
        if (res.ok) {
            g.raw_text = res.text;
            g.status = "ok";
        } else {
            g.status = "transport_failure";
        }
        out[i] = std::move(g);
    });
    return out;
}

struct SimulationSummary {
    std::size_t records_written = 0;
    std::size_t blocks_sampled = 0;
    std::size_t blocks_skipped = 0;
    std::size_t partial_blocks_discarded = 0;
    std::size_t transport_failures = 0;
    std::vector<std::string> warnings;
};

namespace detail {

using BlockKey = std::pair<std::string, std::string>;

/// Counts distinct sample indices per block and drops blocks that did not
/// finish, rewriting the log without them.
inline std::map<BlockKey, std::size_t> load_completed_blocks(const std::filesystem::path &log, std::size_t expected,
                                                             SimulationSummary &summary) {
    std::map<BlockKey, std::set<std::int64_t>> seen;
    std::vector<std::pair<BlockKey, std::string>> lines;
    {
        std::ifstream in(log);
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) {
                continue;
            }
            try {
                const auto g = json::parse(line).get<RawGeneration>();
                BlockKey key{g.model_id, g.question_id};
                seen[key].insert(g.sample_index);
                lines.emplace_back(std::move(key), line);
            } catch (const std::exception &) {
                summary.warnings.push_back("dropping malformed log line during resume");
            }
        }
    }
    std::map<BlockKey, std::size_t> complete;
    std::set<BlockKey> partial;
    std::size_t kept_lines = 0;
    for (const auto &[key, idx] : seen) {
        if (idx.size() >= expected) {
            complete[key] = idx.size();
            kept_lines += idx.size();
        } else {
            partial.insert(key);
        }
    }
    // partial blocks or duplicated sample indices: rewrite without them
    if (!partial.empty() || lines.size() != kept_lines) {
        summary.partial_blocks_discarded = partial.size();
        const auto tmp = std::filesystem::path(log.string() + ".tmp");
        {
            std::ofstream out(tmp, std::ios::trunc);
            std::map<BlockKey, std::set<std::int64_t>> kept;
            for (const auto &[key, line] : lines) {
                if (partial.count(key) != 0) {
                    continue;
                }
                const auto idx = json::parse(line).value("sample_index", std::int64_t{0});
                if (!kept[key].insert(idx).second) {
                    continue;
                }
                out << line << '\n';
            }
        }
        std::filesystem::rename(tmp, log);
    }
    return complete;
}

} // namespace detail

/// Iterates models x questions, appending one block of records per pair.
/// Pairs already complete in the log are skipped; unfinished pairs are
/// discarded and resampled.
inline SimulationSummary run_simulation(const SamplerConfig &config, const Catalog &catalog,
                                        const std::vector<ModelSpec> &models, const std::filesystem::path &log,
                                        ChatTransport &transport, std::ostream *progress = nullptr,
                                        const std::vector<std::string> &question_ids = {}) {
    config.validate();
    SimulationSummary summary;
    std::map<detail::BlockKey, std::size_t> done;
    if (std::filesystem::exists(log)) {
        done = detail::load_completed_blocks(log, config.samples_per_question, summary);
    }
    std::vector<const QuestionSpec *> questions;
    if (question_ids.empty()) {
        for (const auto &q : catalog.questions) {
            questions.push_back(&q);
        }
    } else {
        for (const auto &id : question_ids) {
            questions.push_back(&catalog.question(id));
        }
    }
    std::ofstream out(log, std::ios::app);
    if (!out) {
        throw Error(ErrorKind::Io, "cannot open log " + log.string() + " for appending");
    }
    for (const auto &model : models) {
        for (const auto *q : questions) {
            if (done.count({model.id, q->id}) != 0) {
                ++summary.blocks_skipped;
                continue;
            }
            const auto block = sample_question(config, transport, model, *q);
            std::string text;
            std::size_t failures = 0;
            for (const auto &g : block) {
                text += json(g).dump() + "\n";
                if (g.status == "transport_failure") {
                    ++failures;
                }
            }
            out << text;
            out.flush();
            if (!out) {
                throw Error(ErrorKind::Io, "failed writing to " + log.string());
            }
            summary.records_written += block.size();
            summary.transport_failures += failures;
            ++summary.blocks_sampled;
            if (failures == block.size()) {
                summary.warnings.push_back("all requests failed for " + model.id + " / " + q->id);
            }
            if (progress != nullptr) {
                *progress << model.id << " " << q->id << ": " << block.size() << " samples";
                if (failures > 0) {
                    *progress << " (" << failures << " transport failures)";
                }
                *progress << '\n';
            }
        }
    }
    return summary;
}

} // namespace repsuite
