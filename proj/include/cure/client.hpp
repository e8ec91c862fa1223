#pragma once

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cure/detail/digest.hpp"
#include "cure/detail/strings.hpp"
#include "cure/domain.hpp"
#include "cure/errors.hpp"
#include "cure/prompts.hpp"

namespace cure {

enum class ResponseSource { Live, Mock, Cache };

inline std::string to_string(ResponseSource s) {
  switch (s) {
    case ResponseSource::Live: return "live";
    case ResponseSource::Mock: return "mock";
    case ResponseSource::Cache: return "cache";
  }
  return "live";
}

struct CompletionRequest {
  EndpointConfig endpoint;
  PromptText prompt;
  int attempt = 1;  // transport attempt within the client's retry loop
};

struct RawResponse {
  std::string text;  // assistant message content only
  std::chrono::milliseconds latency{0};
  ResponseSource source = ResponseSource::Live;
};

/// Stable content digest for a completion. Covers everything that can change
/// a response at temperature 0: model, template, substituted values, and the
/// full decoding block.
inline std::string cache_key(const std::string& model_id, TemplateId template_id,
                             const std::string& slot_digest, const Decoding& decoding) {
  detail::DigestBuilder b;
  b.field(model_id)
      .field(to_string(template_id))
      .field(slot_digest)
      .field(decoding.temperature)
      .field(static_cast<std::int64_t>(decoding.max_tokens))
      .field(static_cast<std::int64_t>(decoding.timeout.count()));
  return b.hex();
}

// --- scripted mock backend ----------------------------------------------------

/// One canned behaviour. Text returns a fixed string; Choice picks from a
/// list by a seeded stable hash of (role, template, question, call index);
/// Sequence replays its elements by per-key call index, clamping at the last;
/// Error simulates a client failure ("timeout", "transport" or "http:<code>").
struct MockRespond {
  enum class Kind { Text, Choice, Sequence, Error };
  Kind kind = Kind::Text;
  std::string text;
  std::vector<std::string> choices;
  std::uint64_t seed = 0;
  std::vector<MockRespond> sequence;

  static MockRespond make_text(std::string t) {
    MockRespond r;
    r.kind = Kind::Text;
    r.text = std::move(t);
    return r;
  }
  static MockRespond make_choice(std::vector<std::string> options, std::uint64_t seed) {
    MockRespond r;
    r.kind = Kind::Choice;
    r.choices = std::move(options);
    r.seed = seed;
    return r;
  }
  static MockRespond make_sequence(std::vector<MockRespond> steps) {
    MockRespond r;
    r.kind = Kind::Sequence;
    r.sequence = std::move(steps);
    return r;
  }
  static MockRespond make_error(std::string error_kind) {
    MockRespond r;
    r.kind = Kind::Error;
    r.text = std::move(error_kind);
    return r;
  }
};

struct MockRule {
  std::string role_pat = "*";
  std::string template_pat = "*";
  std::string question_pat = "*";
  MockRespond respond;
};

/// Deterministic scripted backend. Responses are a pure function of
/// (role, template, question id, per-key call index), so concurrent runs over
/// different questions cannot perturb each other.
class MockScript {
 public:
  MockScript() = default;

  void add_rule(MockRule rule) { rules_.push_back(std::move(rule)); }

  void add_rule(std::string role_pat, std::string template_pat, std::string question_pat,
                MockRespond respond) {
    rules_.push_back(MockRule{std::move(role_pat), std::move(template_pat),
                              std::move(question_pat), std::move(respond)});
  }

  static MockRespond respond_from_json(const json& j) {
    if (j.contains("text")) return MockRespond::make_text(j["text"].get<std::string>());
    if (j.contains("error")) return MockRespond::make_error(j["error"].get<std::string>());
    if (j.contains("choice")) {
      std::vector<std::string> options;
      for (const auto& c : j["choice"]) options.push_back(c.get<std::string>());
      if (options.empty()) throw ConfigError("mock choice list must be non-empty");
      return MockRespond::make_choice(std::move(options), j.value("seed", 0ULL));
    }
    if (j.contains("sequence")) {
      std::vector<MockRespond> steps;
      for (const auto& s : j["sequence"]) steps.push_back(respond_from_json(s));
      if (steps.empty()) throw ConfigError("mock sequence must be non-empty");
      return MockRespond::make_sequence(std::move(steps));
    }
    throw ConfigError("mock respond needs one of: text, choice, sequence, error");
  }

  static std::shared_ptr<MockScript> from_json(const json& j) {
    auto script = std::make_shared<MockScript>();
    if (!j.is_object() || !j.contains("rules") || !j["rules"].is_array() || j["rules"].empty())
      throw ConfigError("mock script needs a non-empty 'rules' array");
    try {
      for (const auto& rj : j["rules"]) {
        MockRule rule;
        rule.role_pat = rj.value("role", "*");
        rule.template_pat = rj.value("template", "*");
        rule.question_pat = rj.value("question", "*");
        if (!rj.contains("respond")) throw ConfigError("mock rule missing 'respond'");
        rule.respond = respond_from_json(rj["respond"]);
        script->add_rule(std::move(rule));
      }
    } catch (const json::exception& ex) {
      throw ConfigError("bad mock script: " + std::string(ex.what()));
    }
    return script;
  }

  static std::shared_ptr<MockScript> from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mock script: " + path.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& ex) {
      throw ConfigError("bad mock script json: " + std::string(ex.what()));
    }
    return from_json(j);
  }

  /// Resolves the scripted text for one call; throws the scripted error kinds.
  std::string respond(Role role, TemplateId template_id, const std::string& question_id) {
    const std::string role_s = to_string(role);
    const std::string template_s = to_string(template_id);
    const MockRule* rule = nullptr;
    for (const auto& r : rules_) {
      if (detail::glob_match(r.role_pat, role_s) &&
          detail::glob_match(r.template_pat, template_s) &&
          detail::glob_match(r.question_pat, question_id)) {
        rule = &r;
        break;
      }
    }
    if (!rule)
      throw NoMatchingRuleError("no mock rule matches (" + role_s + ", " + template_s + ", " +
                                question_id + ")");
    const std::uint64_t seq = next_seq(role_s, template_s, question_id);
    return resolve(rule->respond, role_s, template_s, question_id, seq);
  }

 private:
  std::uint64_t next_seq(const std::string& role, const std::string& tpl,
                         const std::string& qid) {
    std::scoped_lock lock(mu_);
    return counters_[role + "\x1f" + tpl + "\x1f" + qid]++;
  }

  [[noreturn]] static void throw_scripted(const std::string& kind) {
    if (kind == "timeout") throw TimeoutError("scripted timeout");
    if (kind == "transport") throw TransportError("scripted transport failure");
    if (kind.rfind("http:", 0) == 0)
      throw HttpStatusError(std::stoi(kind.substr(5)), "scripted http status " + kind.substr(5));
    throw ConfigError("unknown scripted error kind: " + kind);
  }

  static std::string resolve(const MockRespond& r, const std::string& role,
                             const std::string& tpl, const std::string& qid,
                             std::uint64_t seq) {
    switch (r.kind) {
      case MockRespond::Kind::Text:
        return r.text;
      case MockRespond::Kind::Error:
        throw_scripted(r.text);
      case MockRespond::Kind::Choice: {
        detail::DigestBuilder b;
        b.field(static_cast<std::int64_t>(r.seed))
            .field(role)
            .field(tpl)
            .field(qid)
            .field(static_cast<std::int64_t>(seq));
        return r.choices[b.hash64() % r.choices.size()];
      }
      case MockRespond::Kind::Sequence: {
        const auto idx = std::min<std::uint64_t>(seq, r.sequence.size() - 1);
        return resolve(r.sequence[idx], role, tpl, qid, seq);
      }
    }
    throw ConfigError("unreachable mock respond kind");
  }

  std::vector<MockRule> rules_;
  std::mutex mu_;
  std::unordered_map<std::string, std::uint64_t> counters_;
};

// --- client ---------------------------------------------------------------

struct ClientOptions {
  int max_retries = 2;                    // transport retries per request
  std::filesystem::path cache_dir;        // empty disables caching
  std::shared_ptr<MockScript> mock;       // engaged: no network calls at all
};

/// Uniform chat-completion client over live endpoints and scripted mocks,
/// with a content-addressed on-disk response cache. Safe for concurrent use.
class ChatClient {
 public:
  struct Stats {
    std::uint64_t live_calls = 0;
    std::uint64_t mock_calls = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t transport_retries = 0;
    std::uint64_t backend_calls() const { return live_calls + mock_calls; }
  };

  explicit ChatClient(ClientOptions options) : options_(std::move(options)) {
    if (!options_.cache_dir.empty()) std::filesystem::create_directories(options_.cache_dir);
  }

  bool mock_mode() const { return options_.mock != nullptr; }

  Stats stats() const {
    Stats s;
    s.live_calls = live_calls_.load();
    s.mock_calls = mock_calls_.load();
    s.cache_hits = cache_hits_.load();
    s.transport_retries = transport_retries_.load();
    return s;
  }

  /// One logical completion: cache lookup, then mock or live backend with
  /// bounded transport retries under the same cache key. Successes cache
  /// exactly one entry.
  RawResponse complete(CompletionRequest req) {
    const std::string key =
        cache_key(req.endpoint.model_id, req.prompt.template_id, req.prompt.slot_digest,
                  req.endpoint.decoding);
    if (auto cached = cache_lookup(key)) {
      cache_hits_.fetch_add(1);
      return RawResponse{std::move(*cached), std::chrono::milliseconds(0),
                         ResponseSource::Cache};
    }

    const int max_attempts = options_.max_retries + 1;
    for (req.attempt = 1; req.attempt <= max_attempts; ++req.attempt) {
      try {
        RawResponse res = options_.mock ? mock_call(req) : live_call(req);
        cache_store(key, res.text, req.endpoint.model_id);
        return res;
      } catch (const TransportError&) {
        if (req.attempt == max_attempts) throw;
        transport_retries_.fetch_add(1);
      }
    }
    throw TransportError("retry loop exhausted");  // unreachable
  }

 private:
  RawResponse mock_call(const CompletionRequest& req) {
    mock_calls_.fetch_add(1);
    std::string text = options_.mock->respond(req.endpoint.role, req.prompt.template_id,
                                              req.prompt.question_id);
    return RawResponse{std::move(text), std::chrono::milliseconds(0), ResponseSource::Mock};
  }

  RawResponse live_call(const CompletionRequest& req) {
    live_calls_.fetch_add(1);
    const auto started = std::chrono::steady_clock::now();

    auto [origin, base_path] = split_base_url(req.endpoint.base_url);
    httplib::Client cli(origin);
    const auto timeout = req.endpoint.decoding.timeout;
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);

    httplib::Headers headers;
    if (!req.endpoint.api_key_env.empty()) {
      if (const char* token = std::getenv(req.endpoint.api_key_env.c_str());
          token && *token) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
      }
    }

    json body{{"model", req.endpoint.model_id},
              {"messages", json::array({{{"role", "user"}, {"content", req.prompt.body}}})},
              {"temperature", req.endpoint.decoding.temperature},
              {"max_tokens", req.endpoint.decoding.max_tokens}};

    auto res = cli.Post(base_path + "/chat/completions", headers, body.dump(),
                        "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout)
        throw TimeoutError("connection timed out: " + req.endpoint.base_url);
      throw TransportError("transport failure (" + httplib::to_string(err) +
                           "): " + req.endpoint.base_url);
    }
    if (res->status < 200 || res->status >= 300)
      throw HttpStatusError(res->status,
                            "endpoint returned status " + std::to_string(res->status));

    std::string text;
    try {
      json payload = json::parse(res->body);
      text = payload.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& ex) {
      throw TransportError(std::string("malformed completion response: ") + ex.what());
    }

    const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    return RawResponse{std::move(text), latency, ResponseSource::Live};
  }

  static std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos)
      throw ConfigError("base_url must include a scheme: " + base_url);
    const auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string origin = base_url.substr(0, path_start);
    std::string path = base_url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {std::move(origin), std::move(path)};
  }

  std::optional<std::string> cache_lookup(const std::string& key) {
    if (options_.cache_dir.empty()) return std::nullopt;
    std::scoped_lock lock(cache_mu_);
    if (auto it = memory_cache_.find(key); it != memory_cache_.end()) return it->second;
    const auto path = options_.cache_dir / (key + ".json");
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    try {
      json j;
      in >> j;
      std::string text = j.at("text").get<std::string>();
      memory_cache_[key] = text;
      return text;
    } catch (const json::exception&) {
      return std::nullopt;  // corrupt entry behaves like a miss
    }
  }

  void cache_store(const std::string& key, const std::string& text,
                   const std::string& model_id) {
    if (options_.cache_dir.empty()) return;
    std::scoped_lock lock(cache_mu_);
    memory_cache_[key] = text;
    json j{{"text", text},
           {"timestamp", std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count()},
           {"model_id", model_id}};
    const auto path = options_.cache_dir / (key + ".json");
    const auto tmp = options_.cache_dir / (key + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) return;  // cache write failures are non-fatal
      out << j.dump();
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
  }

  ClientOptions options_;
  std::mutex cache_mu_;
  std::unordered_map<std::string, std::string> memory_cache_;
  std::atomic<std::uint64_t> live_calls_{0};
  std::atomic<std::uint64_t> mock_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> transport_retries_{0};
};

}  // namespace cure
