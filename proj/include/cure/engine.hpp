#pragma once

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cure/client.hpp"
#include "cure/detail/digest.hpp"
#include "cure/detail/strings.hpp"
#include "cure/domain.hpp"
#include "cure/errors.hpp"
#include "cure/prompts.hpp"

namespace cure {

enum class AblationMode { ZeroShotOnly, SingleModelCoT, FullFramework };

inline std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::ZeroShotOnly: return "zero_shot";
    case AblationMode::SingleModelCoT: return "single_model_cot";
    case AblationMode::FullFramework: return "full_framework";
  }
  return "full_framework";
}

inline AblationMode ablation_mode_from_string(const std::string& s) {
  if (s == "zero_shot") return AblationMode::ZeroShotOnly;
  if (s == "single_model_cot") return AblationMode::SingleModelCoT;
  if (s == "full_framework") return AblationMode::FullFramework;
  throw ConfigError("unknown mode: " + s + " (use zero_shot|single_model_cot|full_framework)");
}

inline std::string display_name(AblationMode m) {
  switch (m) {
    case AblationMode::ZeroShotOnly: return "Zero-shot";
    case AblationMode::SingleModelCoT: return "Single-Model CoT";
    case AblationMode::FullFramework: return "Full Framework";
  }
  return "Full Framework";
}

struct PipelineConfig {
  EndpointConfig primary;
  EndpointConfig helper1;
  EndpointConfig helper2;
  int max_json_retries = 2;
  enum class FallbackPolicy { PrimaryDirect };
  FallbackPolicy fallback_policy = FallbackPolicy::PrimaryDirect;

  // Per-stage output budgets; the confidence verdict and the bare option
  // letter need almost nothing, the synthesis reasoning needs room.
  int confidence_max_tokens = 64;
  int direct_max_tokens = 16;
  int synthesis_max_tokens = 1024;
  int cot_max_tokens = 1024;

  void validate() const {
    if (primary.role != Role::Primary || helper1.role != Role::Helper1 ||
        helper2.role != Role::Helper2)
      throw ConfigError("pipeline needs exactly one primary, helper1 and helper2 endpoint");
  }
};

/// The synthesis prompt's candidate space: "A" is whatever agent 1 chose,
/// "B" is whatever agent 2 chose, independent of the question's own letters.
struct CandidateMap {
  char agent1_label = 'A';
  char agent2_label = 'A';

  static CandidateMap from(const CandidateAnswer& c1, const CandidateAnswer& c2) {
    return CandidateMap{c1.chosen_label, c2.chosen_label};
  }

  char map(char candidate_label) const {
    if (candidate_label == 'A') return agent1_label;
    if (candidate_label == 'B') return agent2_label;
    throw ValidationError(ValidationError::Code::BadValue,
                          std::string("candidate label out of space: ") + candidate_label);
  }
};

// --- verdict parsing --------------------------------------------------------

/// Trim, strip trailing punctuation/whitespace, casefold. Exposed so tests
/// can assert parse_verdict is idempotent under its own normalization.
inline std::string normalize_verdict_text(const std::string& text) {
  std::string_view v = detail::trim(text);
  while (!v.empty() && (detail::is_punct(v.back()) || detail::is_space(v.back())))
    v.remove_suffix(1);
  return detail::to_lower(v);
}

/// Total parser: exact "not sure"/"sure" first, then prefix matches, and
/// anything else conservatively routes to NotSure via the fallback rule.
inline Verdict parse_verdict(const std::string& text) {
  const std::string norm = normalize_verdict_text(text);
  Verdict v;
  v.raw_text = text;
  if (norm == "not sure") {
    v.value = VerdictValue::NotSure;
    v.parse_rule = ParseRule::ExactMatch;
  } else if (norm == "sure") {
    v.value = VerdictValue::Sure;
    v.parse_rule = ParseRule::ExactMatch;
  } else if (norm.rfind("not sure", 0) == 0) {
    v.value = VerdictValue::NotSure;
    v.parse_rule = ParseRule::PrefixMatch;
  } else if (norm.rfind("sure", 0) == 0) {
    v.value = VerdictValue::Sure;
    v.parse_rule = ParseRule::PrefixMatch;
  } else {
    v.value = VerdictValue::NotSure;
    v.parse_rule = ParseRule::Fallback;
  }
  return v;
}

// --- option-letter extraction -------------------------------------------------

namespace detail_engine {

inline bool is_standalone_at(const std::string& text, std::size_t i) {
  const bool left_ok = i == 0 || !detail::is_alnum(text[i - 1]);
  const bool right_ok = i + 1 >= text.size() || !detail::is_alnum(text[i + 1]);
  return left_ok && right_ok;
}

}  // namespace detail_engine

/// First standalone letter (not embedded in a word) that is one of the
/// question's labels, case-insensitive. "The answer is (c)" yields 'C'.
inline std::optional<char> extract_option_letter(const std::string& text,
                                                 const std::vector<char>& labels) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char upper = detail::ascii_upper(text[i]);
    if (upper < 'A' || upper > 'Z') continue;
    if (std::find(labels.begin(), labels.end(), upper) == labels.end()) continue;
    if (detail_engine::is_standalone_at(text, i)) return upper;
  }
  return std::nullopt;
}

/// Last standalone label in the text; suits chain-of-thought replies that end
/// with the final letter after mentioning options along the way.
inline std::optional<char> extract_option_letter_last(const std::string& text,
                                                      const std::vector<char>& labels) {
  for (std::size_t i = text.size(); i-- > 0;) {
    const char upper = detail::ascii_upper(text[i]);
    if (upper < 'A' || upper > 'Z') continue;
    if (std::find(labels.begin(), labels.end(), upper) == labels.end()) continue;
    if (detail_engine::is_standalone_at(text, i)) return upper;
  }
  return std::nullopt;
}

// --- decision JSON parsing ----------------------------------------------------

enum class DecisionParseError {
  NoJson,
  AnswerMissing,
  AnswerOutOfSpace,
  ScoresMissing,
  ScoresNotInteger,
  NegativeScore,
  SumNot100,
  WrongKeys,
};

inline std::string to_string(DecisionParseError e) {
  switch (e) {
    case DecisionParseError::NoJson: return "NoJson";
    case DecisionParseError::AnswerMissing: return "AnswerMissing";
    case DecisionParseError::AnswerOutOfSpace: return "AnswerOutOfSpace";
    case DecisionParseError::ScoresMissing: return "ScoresMissing";
    case DecisionParseError::ScoresNotInteger: return "ScoresNotInteger";
    case DecisionParseError::NegativeScore: return "NegativeScore";
    case DecisionParseError::SumNot100: return "SumNot100";
    case DecisionParseError::WrongKeys: return "WrongKeys";
  }
  return "NoJson";
}

struct DecisionParse {
  bool ok = false;
  DecisionParseError error = DecisionParseError::NoJson;
  char answer = 'A';
  std::string reasoning;
  std::map<char, int> scores;
};

namespace detail_engine {

inline std::optional<json> try_parse_json(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

inline std::optional<json> extract_fenced_json(const std::string& text) {
  std::size_t open = text.find("```");
  while (open != std::string::npos) {
    std::size_t body_start = text.find('\n', open);
    if (body_start == std::string::npos) return std::nullopt;
    std::size_t close = text.find("```", body_start);
    if (close == std::string::npos) return std::nullopt;
    if (auto j = try_parse_json(
            detail::trim(std::string_view(text).substr(body_start, close - body_start))))
      return j;
    open = text.find("```", close + 3);
  }
  return std::nullopt;
}

inline std::optional<json> extract_balanced_json(const std::string& text) {
  std::size_t start = text.find('{');
  while (start != std::string::npos) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (c == '\\')
          ++i;
        else if (c == '"')
          in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      if (c == '{') ++depth;
      if (c == '}' && --depth == 0) {
        if (auto j = try_parse_json(std::string_view(text).substr(start, i - start + 1)))
          return j;
        break;
      }
    }
    start = text.find('{', start + 1);
  }
  return std::nullopt;
}

}  // namespace detail_engine

/// Extraction order: whole text as JSON, first parseable fenced code block,
/// first balanced {...} span. A single absent confidence score is repaired to
/// 100 minus the present ones; anything else out of shape is rejected so the
/// engine can re-ask.
inline DecisionParse parse_decision_json(const std::string& text) {
  using namespace detail_engine;
  DecisionParse out;

  std::optional<json> j = try_parse_json(detail::trim(text));
  if (!j) j = extract_fenced_json(text);
  if (!j) j = extract_balanced_json(text);
  if (!j) {
    out.error = DecisionParseError::NoJson;
    return out;
  }

  if (!j->contains("answer") || !(*j)["answer"].is_string()) {
    out.error = DecisionParseError::AnswerMissing;
    return out;
  }
  std::string answer = (*j)["answer"].get<std::string>();
  if (answer.size() == 1) answer[0] = detail::ascii_upper(answer[0]);
  if (answer != "A" && answer != "B") {
    out.error = DecisionParseError::AnswerOutOfSpace;
    return out;
  }

  if (!j->contains("confidence_scores") || !(*j)["confidence_scores"].is_object()) {
    out.error = DecisionParseError::ScoresMissing;
    return out;
  }

  std::map<char, int> scores;
  for (const auto& [key, value] : (*j)["confidence_scores"].items()) {
    std::string k = key;
    if (k.size() == 1) k[0] = detail::ascii_upper(k[0]);
    if (k != "A" && k != "B") {
      out.error = DecisionParseError::WrongKeys;
      return out;
    }
    if (!value.is_number_integer()) {
      out.error = DecisionParseError::ScoresNotInteger;
      return out;
    }
    scores[k[0]] = value.get<int>();
  }

  if (scores.empty()) {
    out.error = DecisionParseError::ScoresMissing;
    return out;
  }
  if (scores.size() == 1) {
    // Repair the single absent key from the remainder.
    const char missing = scores.count('A') ? 'B' : 'A';
    const int remainder = 100 - scores.begin()->second;
    if (remainder < 0) {
      out.error = DecisionParseError::SumNot100;
      return out;
    }
    scores[missing] = remainder;
  }
  int sum = 0;
  for (const auto& [label, score] : scores) {
    if (score < 0) {
      out.error = DecisionParseError::NegativeScore;
      return out;
    }
    sum += score;
  }
  if (sum != 100) {
    out.error = DecisionParseError::SumNot100;
    return out;
  }

  out.ok = true;
  out.answer = answer[0];
  out.reasoning = j->value("reasoning", std::string{});
  out.scores = std::move(scores);
  return out;
}

// --- the pipeline -------------------------------------------------------------

/// Two-pathway pipeline: a confidence gate on the primary model routes each
/// question either straight to a direct answer or through two helper
/// consultations plus a synthesis call.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::shared_ptr<ChatClient> client)
      : config_(std::move(config)), client_(std::move(client)) {
    config_.validate();
  }

  const PipelineConfig& config() const { return config_; }
  ChatClient& client() { return *client_; }

  Verdict detect_confidence(const Question& q, std::vector<CallLogEntry>* log) {
    RawResponse res = ask(config_.primary, render_confidence_prompt(q),
                          config_.confidence_max_tokens, log);
    return parse_verdict(res.text);
  }

  /// One direct-answer call plus up to max_json_retries re-asks when no
  /// option letter can be extracted.
  char answer_direct(const Question& q, std::vector<CallLogEntry>* log) {
    const auto labels = q.labels();
    const PromptText prompt = render_direct_answer_prompt(q);
    for (int attempt = 0; attempt <= config_.max_json_retries; ++attempt) {
      RawResponse res = ask(config_.primary, prompt, config_.direct_max_tokens, log);
      if (auto letter = extract_option_letter(res.text, labels)) return *letter;
    }
    throw UnparsableAnswerError("no option letter in primary answer for question " + q.id);
  }

  char answer_cot(const Question& q, std::vector<CallLogEntry>* log) {
    const auto labels = q.labels();
    const PromptText prompt = render_cot_direct_prompt(q);
    for (int attempt = 0; attempt <= config_.max_json_retries; ++attempt) {
      RawResponse res = ask(config_.primary, prompt, config_.cot_max_tokens, log);
      if (auto letter = extract_option_letter_last(res.text, labels)) return *letter;
    }
    throw UnparsableAnswerError("no option letter in CoT answer for question " + q.id);
  }

  struct HelperConsult {
    std::optional<std::pair<CandidateAnswer, CandidateAnswer>> candidates;
    bool degraded = false;  // one helper failed and the survivor filled both slots
    std::vector<CallLogEntry> log;
  };

  /// Fans the question out to both helpers (concurrently) and tags results by
  /// agent slot regardless of completion order. A terminally failing helper is
  /// substituted by the survivor's choice; both failing yields no candidates.
  HelperConsult consult_helpers(const Question& q) {
    auto consult_one = [this, &q](const EndpointConfig& helper) {
      struct OneResult {
        std::optional<char> letter;
        std::string raw_text;
        std::vector<CallLogEntry> log;
      } out;
      const auto labels = q.labels();
      const PromptText prompt = render_direct_answer_prompt(q);
      try {
        for (int attempt = 0; attempt <= config_.max_json_retries; ++attempt) {
          RawResponse res = ask(helper, prompt, config_.direct_max_tokens, &out.log);
          out.raw_text = res.text;
          if (auto letter = extract_option_letter(res.text, labels)) {
            out.letter = letter;
            break;
          }
        }
      } catch (const TransportError&) {
        out.letter = std::nullopt;  // terminal failure past the retry policy
      } catch (const HttpStatusError&) {
        out.letter = std::nullopt;
      }
      return out;
    };

    auto fut1 = std::async(std::launch::async, consult_one, std::cref(config_.helper1));
    auto fut2 = std::async(std::launch::async, consult_one, std::cref(config_.helper2));
    auto r1 = fut1.get();
    auto r2 = fut2.get();

    HelperConsult out;
    out.log.insert(out.log.end(), r1.log.begin(), r1.log.end());
    out.log.insert(out.log.end(), r2.log.begin(), r2.log.end());

    if (!r1.letter && !r2.letter) return out;

    CandidateAnswer c1{AgentId::Agent1, 'A', r1.raw_text};
    CandidateAnswer c2{AgentId::Agent2, 'A', r2.raw_text};
    if (r1.letter && r2.letter) {
      c1.chosen_label = *r1.letter;
      c2.chosen_label = *r2.letter;
    } else if (r1.letter) {
      c1.chosen_label = c2.chosen_label = *r1.letter;
      c2.raw_text = r1.raw_text;
      out.degraded = true;
    } else {
      c1.chosen_label = c2.chosen_label = *r2.letter;
      c1.raw_text = r2.raw_text;
      out.degraded = true;
    }
    out.candidates = std::make_pair(std::move(c1), std::move(c2));
    return out;
  }

  /// One synthesis call (re-asked on parse failure) whose candidate-space
  /// answer is mapped back to the question's letters. Exhausted retries apply
  /// the PrimaryDirect fallback: a direct answer wrapped as a 50/50 decision.
  FinalDecision synthesize(const Question& q, const CandidateAnswer& c1,
                           const CandidateAnswer& c2, std::vector<CallLogEntry>* log,
                           bool* fallback_used) {
    const PromptText prompt = render_synthesis_prompt(q, c1, c2);
    const CandidateMap map = CandidateMap::from(c1, c2);
    for (int attempt = 0; attempt <= config_.max_json_retries; ++attempt) {
      RawResponse res = ask(config_.primary, prompt, config_.synthesis_max_tokens, log);
      DecisionParse parsed = parse_decision_json(res.text);
      if (!parsed.ok) continue;
      FinalDecision d;
      d.candidate_label = parsed.answer;
      d.mapped_option = map.map(parsed.answer);
      d.reasoning = std::move(parsed.reasoning);
      d.confidence_scores = std::move(parsed.scores);
      return d;
    }

    if (fallback_used) *fallback_used = true;
    const char letter = answer_direct(q, log);
    FinalDecision d;
    d.candidate_label = letter == c1.chosen_label ? 'A' : (letter == c2.chosen_label ? 'B' : 'A');
    d.mapped_option = letter;
    d.reasoning = "fallback";
    d.confidence_scores = {{'A', 50}, {'B', 50}};
    return d;
  }

  /// Runs one question through the selected pipeline variant and returns the
  /// full trace. The gate call, when present, is always the first log entry.
  PipelineRecord run(const Question& q, AblationMode mode = AblationMode::FullFramework) {
    PipelineRecord record;
    record.question_id = q.id;

    switch (mode) {
      case AblationMode::ZeroShotOnly:
        record.verdict = skipped_gate_verdict();
        record.pathway = Pathway::Direct;
        record.final_answer = answer_direct(q, &record.call_log);
        break;

      case AblationMode::SingleModelCoT:
        record.verdict = skipped_gate_verdict();
        record.pathway = Pathway::Direct;
        record.final_answer = answer_cot(q, &record.call_log);
        break;

      case AblationMode::FullFramework: {
        record.verdict = detect_confidence(q, &record.call_log);
        if (record.verdict.value == VerdictValue::Sure) {
          record.pathway = Pathway::Direct;
          record.final_answer = answer_direct(q, &record.call_log);
          break;
        }
        HelperConsult consult = consult_helpers(q);
        record.call_log.insert(record.call_log.end(), consult.log.begin(), consult.log.end());
        record.helper_degraded = consult.degraded;
        if (!consult.candidates) {
          // Both helpers failed terminally: the primary answers directly.
          record.pathway = Pathway::Direct;
          record.fallback_used = true;
          record.final_answer = answer_direct(q, &record.call_log);
          break;
        }
        record.pathway = Pathway::Collaborative;
        record.candidates = consult.candidates;
        bool fallback = false;
        record.decision = synthesize(q, consult.candidates->first, consult.candidates->second,
                                     &record.call_log, &fallback);
        record.fallback_used = fallback;
        record.final_answer = record.decision->mapped_option;
        break;
      }
    }

    record.correct = record.final_answer == q.gold;
    return record;
  }

 private:
  static Verdict skipped_gate_verdict() {
    // Gate-skipping ablations still need a verdict slot; records stay
    // schema-identical across modes.
    return Verdict{VerdictValue::Sure, "", ParseRule::ExactMatch};
  }

  RawResponse ask(const EndpointConfig& endpoint, const PromptText& prompt,
                  int stage_max_tokens, std::vector<CallLogEntry>* log) {
    EndpointConfig effective = endpoint;
    if (stage_max_tokens > 0) effective.decoding.max_tokens = stage_max_tokens;
    RawResponse res = client_->complete(CompletionRequest{effective, prompt});
    if (log) {
      CallLogEntry e;
      e.role = endpoint.role;
      e.template_id = to_string(prompt.template_id);
      e.prompt_digest = prompt_digest(prompt);
      e.latency_ms = res.latency.count();
      e.cached = res.source == ResponseSource::Cache;
      log->push_back(std::move(e));
    }
    return res;
  }

  PipelineConfig config_;
  std::shared_ptr<ChatClient> client_;
};

// --- dataset-level execution ---------------------------------------------------

/// Runs every question through the pipeline with up to `concurrency` workers.
/// Records come back in input order regardless of completion order; the first
/// worker exception aborts the run.
inline std::vector<PipelineRecord> run_dataset(Pipeline& pipeline,
                                               const std::vector<Question>& questions,
                                               AblationMode mode, int concurrency) {
  std::vector<PipelineRecord> records(questions.size());
  if (questions.empty()) return records;
  concurrency = std::max(1, std::min<int>(concurrency, static_cast<int>(questions.size())));

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mu;
  std::exception_ptr first_error;

  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= questions.size()) return;
      try {
        records[i] = pipeline.run(questions[i], mode);
      } catch (...) {
        {
          std::scoped_lock lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
        failed.store(true);
        return;
      }
    }
  };

  std::vector<std::thread> workers;
  workers.reserve(concurrency);
  for (int i = 0; i < concurrency; ++i) workers.emplace_back(worker);
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
  return records;
}

// --- run directory emission -----------------------------------------------------

struct RunManifest {
  std::string config_digest;
  std::map<std::string, std::string> template_digests;
  std::string timestamp;  // ISO 8601 UTC
  std::string dataset_digest;
  std::string dataset;
  std::string mode;
  std::uint64_t seed = 0;
  std::size_t n_questions = 0;
  int concurrency = 1;
  bool mock = false;
  json config_echo;  // the resolved scientific config, enough to rerun
};

inline std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json to_json(const RunManifest& m) {
  json templates = json::object();
  for (const auto& [name, digest] : m.template_digests) templates[name] = digest;
  return json{{"config_digest", m.config_digest},
              {"template_digests", std::move(templates)},
              {"timestamp", m.timestamp},
              {"dataset_digest", m.dataset_digest},
              {"dataset", m.dataset},
              {"mode", m.mode},
              {"seed", m.seed},
              {"n_questions", m.n_questions},
              {"concurrency", m.concurrency},
              {"mock", m.mock},
              {"config", m.config_echo}};
}

struct RunSummary {
  std::size_t n_records = 0;
  std::uint64_t n_backend_calls = 0;
  std::uint64_t n_live_calls = 0;
  std::uint64_t n_mock_calls = 0;
  std::uint64_t n_cache_hits = 0;
  std::uint64_t n_transport_retries = 0;
};

inline json to_json(const RunSummary& s) {
  return json{{"n_records", s.n_records},
              {"n_backend_calls", s.n_backend_calls},
              {"n_live_calls", s.n_live_calls},
              {"n_mock_calls", s.n_mock_calls},
              {"n_cache_hits", s.n_cache_hits},
              {"n_transport_retries", s.n_transport_retries}};
}

inline void write_run_dir(const std::filesystem::path& out_dir,
                          const std::vector<Question>& questions,
                          const std::vector<PipelineRecord>& records, const RunManifest& manifest,
                          const RunSummary& summary) {
  std::filesystem::create_directories(out_dir);
  write_questions_jsonl(out_dir / "questions.jsonl", questions);
  write_records_jsonl(out_dir / "records.jsonl", records);
  for (const auto& [name, content] :
       {std::pair<const char*, json>{"manifest.json", to_json(manifest)},
        std::pair<const char*, json>{"run_summary.json", to_json(summary)}}) {
    std::ofstream out(out_dir / name, std::ios::binary);
    if (!out) throw IoError("cannot write " + (out_dir / name).string());
    out << content.dump(2) << '\n';
  }
}

}  // namespace cure
