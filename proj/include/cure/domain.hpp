#pragma once

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cure/detail/strings.hpp"
#include "cure/errors.hpp"

namespace cure {

using json = nlohmann::json;

enum class DatasetKind { MedQA, MedMCQA, PubMedQA };
enum class Role { Primary, Helper1, Helper2 };
enum class VerdictValue { Sure, NotSure };
enum class ParseRule { ExactMatch, PrefixMatch, Fallback };
enum class AgentId { Agent1, Agent2 };
enum class Pathway { Direct, Collaborative };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::MedQA: return "MedQA";
    case DatasetKind::MedMCQA: return "MedMCQA";
    case DatasetKind::PubMedQA: return "PubMedQA";
  }
  return "MedQA";
}

inline DatasetKind dataset_kind_from_string(const std::string& s) {
  std::string l = detail::to_lower(s);
  if (l == "medqa") return DatasetKind::MedQA;
  if (l == "medmcqa") return DatasetKind::MedMCQA;
  if (l == "pubmedqa") return DatasetKind::PubMedQA;
  throw ValidationError(ValidationError::Code::BadValue, "unknown dataset kind: " + s);
}

inline std::string to_string(Role r) {
  switch (r) {
    case Role::Primary: return "primary";
    case Role::Helper1: return "helper1";
    case Role::Helper2: return "helper2";
  }
  return "primary";
}

inline Role role_from_string(const std::string& s) {
  if (s == "primary") return Role::Primary;
  if (s == "helper1") return Role::Helper1;
  if (s == "helper2") return Role::Helper2;
  throw ValidationError(ValidationError::Code::BadValue, "unknown role: " + s);
}

inline std::string to_string(VerdictValue v) {
  return v == VerdictValue::Sure ? "sure" : "not_sure";
}

inline VerdictValue verdict_value_from_string(const std::string& s) {
  if (s == "sure") return VerdictValue::Sure;
  if (s == "not_sure") return VerdictValue::NotSure;
  throw ValidationError(ValidationError::Code::BadValue, "unknown verdict value: " + s);
}

inline std::string to_string(ParseRule r) {
  switch (r) {
    case ParseRule::ExactMatch: return "exact";
    case ParseRule::PrefixMatch: return "prefix";
    case ParseRule::Fallback: return "fallback";
  }
  return "fallback";
}

inline ParseRule parse_rule_from_string(const std::string& s) {
  if (s == "exact") return ParseRule::ExactMatch;
  if (s == "prefix") return ParseRule::PrefixMatch;
  if (s == "fallback") return ParseRule::Fallback;
  throw ValidationError(ValidationError::Code::BadValue, "unknown parse rule: " + s);
}

inline std::string to_string(AgentId a) {
  return a == AgentId::Agent1 ? "agent1" : "agent2";
}

inline AgentId agent_id_from_string(const std::string& s) {
  if (s == "agent1") return AgentId::Agent1;
  if (s == "agent2") return AgentId::Agent2;
  throw ValidationError(ValidationError::Code::BadValue, "unknown agent id: " + s);
}

inline std::string to_string(Pathway p) {
  return p == Pathway::Direct ? "direct" : "collaborative";
}

inline Pathway pathway_from_string(const std::string& s) {
  if (s == "direct") return Pathway::Direct;
  if (s == "collaborative") return Pathway::Collaborative;
  throw ValidationError(ValidationError::Code::BadValue, "unknown pathway: " + s);
}

struct Option {
  char label = 'A';
  std::string text;
  friend bool operator==(const Option&, const Option&) = default;
};

/// A normalized multiple-choice item. Immutable by convention: construct via
/// validate_question / make_question and treat as read-only afterwards.
struct Question {
  std::string id;
  std::string stem;
  std::string context;  // empty when the source has none; rendered as "N/A"
  std::vector<Option> options;
  char gold = 'A';
  DatasetKind dataset = DatasetKind::MedQA;

  friend bool operator==(const Question&, const Question&) = default;

  bool has_label(char l) const {
    return std::any_of(options.begin(), options.end(),
                       [l](const Option& o) { return o.label == l; });
  }

  const std::string& option_text(char l) const {
    for (const auto& o : options)
      if (o.label == l) return o.text;
    throw ValidationError(ValidationError::Code::BadValue,
                          "no option with label " + std::string(1, l));
  }

  std::vector<char> labels() const {
    std::vector<char> out;
    out.reserve(options.size());
    for (const auto& o : options) out.push_back(o.label);
    return out;
  }
};

namespace detail {

inline void check_question(const Question& q) {
  if (q.stem.empty())
    throw ValidationError(ValidationError::Code::MissingField, "stem is empty");
  if (q.options.size() < 2 || q.options.size() > 5)
    throw ValidationError(ValidationError::Code::BadOptionCount,
                          "expected 2..5 options, got " + std::to_string(q.options.size()));
  for (std::size_t i = 0; i < q.options.size(); ++i) {
    for (std::size_t j = i + 1; j < q.options.size(); ++j) {
      if (q.options[i].label == q.options[j].label)
        throw ValidationError(ValidationError::Code::DuplicateLabel,
                              "duplicate option label " + std::string(1, q.options[i].label));
    }
  }
  for (std::size_t i = 0; i < q.options.size(); ++i) {
    char expected = static_cast<char>('A' + i);
    if (q.options[i].label != expected)
      throw ValidationError(ValidationError::Code::NonConsecutiveLabel,
                            std::string("option labels must run A, B, ... ; position ") +
                                std::to_string(i) + " has " + std::string(1, q.options[i].label));
    if (q.options[i].text.empty())
      throw ValidationError(ValidationError::Code::EmptyOptionText,
                            "option " + std::string(1, expected) + " has empty text");
  }
  if (!q.has_label(q.gold))
    throw ValidationError(ValidationError::Code::GoldNotInOptions,
                          std::string("gold label ") + q.gold + " not among options");
}

}  // namespace detail

/// Builds a Question from parts, uppercasing labels and enforcing every
/// invariant. All loaders and tests construct questions through here.
inline Question make_question(std::string id, std::string stem, std::string context,
                              std::vector<Option> options, char gold, DatasetKind dataset) {
  Question q;
  q.id = std::move(id);
  q.stem = std::move(stem);
  q.context = std::move(context);
  q.options = std::move(options);
  for (auto& o : q.options) o.label = cure::detail::ascii_upper(o.label);
  q.gold = cure::detail::ascii_upper(gold);
  q.dataset = dataset;
  detail::check_question(q);
  return q;
}

namespace detail {
Question validate_question_impl(const json& raw);
}

/// Validates a raw field map. Options may be an array of {label, text}
/// objects or an array of plain strings (labels assigned A, B, ...).
inline Question validate_question(const json& raw) {
  try {
    return detail::validate_question_impl(raw);
  } catch (const json::exception& ex) {
    throw ValidationError(ValidationError::Code::BadValue,
                          std::string("malformed question fields: ") + ex.what());
  }
}

inline Question detail::validate_question_impl(const json& raw) {
  if (!raw.is_object())
    throw ValidationError(ValidationError::Code::MissingField, "expected an object");
  for (const char* key : {"stem", "options", "gold"}) {
    if (!raw.contains(key))
      throw ValidationError(ValidationError::Code::MissingField,
                            std::string("missing field: ") + key);
  }
  if (!raw["stem"].is_string() || !raw["gold"].is_string() || !raw["options"].is_array())
    throw ValidationError(ValidationError::Code::BadValue, "stem/gold must be strings, options an array");

  std::vector<Option> options;
  std::size_t idx = 0;
  for (const auto& item : raw["options"]) {
    Option o;
    if (item.is_string()) {
      o.label = static_cast<char>('A' + idx);
      o.text = item.get<std::string>();
    } else if (item.is_object() && item.contains("label") && item.contains("text")) {
      std::string label = item["label"].get<std::string>();
      if (label.size() != 1)
        throw ValidationError(ValidationError::Code::BadValue,
                              "option label must be a single letter: '" + label + "'");
      o.label = label[0];
      o.text = item["text"].get<std::string>();
    } else {
      throw ValidationError(ValidationError::Code::BadValue,
                            "option must be a string or a {label, text} object");
    }
    options.push_back(std::move(o));
    ++idx;
  }

  std::string gold = raw["gold"].get<std::string>();
  if (gold.size() != 1)
    throw ValidationError(ValidationError::Code::BadValue, "gold must be a single letter");

  return make_question(raw.value("id", std::string{}), raw["stem"].get<std::string>(),
                       raw.value("context", std::string{}), std::move(options), gold[0],
                       raw.contains("dataset")
                           ? dataset_kind_from_string(raw["dataset"].get<std::string>())
                           : DatasetKind::MedQA);
}

inline json to_json(const Question& q) {
  json opts = json::array();
  for (const auto& o : q.options)
    opts.push_back({{"label", std::string(1, o.label)}, {"text", o.text}});
  return json{{"id", q.id},
              {"stem", q.stem},
              {"context", q.context},
              {"options", std::move(opts)},
              {"gold", std::string(1, q.gold)},
              {"dataset", to_string(q.dataset)}};
}

inline Question question_from_json(const json& j) { return validate_question(j); }

// --- endpoint configuration -------------------------------------------------

struct Decoding {
  double temperature = 0.0;
  int max_tokens = 1024;
  std::chrono::milliseconds timeout{120000};
  friend bool operator==(const Decoding&, const Decoding&) = default;
};

/// One model's network identity plus decoding parameters. api_key_env names
/// an environment variable; keys never appear in config files.
struct EndpointConfig {
  Role role = Role::Primary;
  std::string model_id;
  std::string base_url;
  std::string api_key_env;
  Decoding decoding;
  friend bool operator==(const EndpointConfig&, const EndpointConfig&) = default;
};

inline json to_json(const EndpointConfig& e) {
  return json{{"role", to_string(e.role)},
              {"model_id", e.model_id},
              {"base_url", e.base_url},
              {"api_key_env", e.api_key_env},
              {"temperature", e.decoding.temperature},
              {"max_tokens", e.decoding.max_tokens},
              {"timeout_ms", e.decoding.timeout.count()}};
}

// --- pipeline outcome types --------------------------------------------------

struct Verdict {
  VerdictValue value = VerdictValue::NotSure;
  std::string raw_text;
  ParseRule parse_rule = ParseRule::Fallback;

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

inline json to_json(const Verdict& v) {
  return json{{"value", to_string(v.value)},
              {"raw_text", v.raw_text},
              {"parse_rule", to_string(v.parse_rule)}};
}

inline Verdict verdict_from_json(const json& j) {
  Verdict v;
  v.value = verdict_value_from_string(j.at("value").get<std::string>());
  v.raw_text = j.at("raw_text").get<std::string>();
  v.parse_rule = parse_rule_from_string(j.at("parse_rule").get<std::string>());
  if (v.parse_rule == ParseRule::Fallback && v.value != VerdictValue::NotSure)
    throw ValidationError(ValidationError::Code::BadValue,
                          "fallback verdicts must be not_sure");
  return v;
}

struct CandidateAnswer {
  AgentId agent = AgentId::Agent1;
  char chosen_label = 'A';
  std::string raw_text;

  friend bool operator==(const CandidateAnswer&, const CandidateAnswer&) = default;
};

inline json to_json(const CandidateAnswer& c) {
  return json{{"agent", to_string(c.agent)},
              {"chosen_label", std::string(1, c.chosen_label)},
              {"raw_text", c.raw_text}};
}

inline CandidateAnswer candidate_from_json(const json& j) {
  CandidateAnswer c;
  c.agent = agent_id_from_string(j.at("agent").get<std::string>());
  std::string label = j.at("chosen_label").get<std::string>();
  if (label.size() != 1)
    throw ValidationError(ValidationError::Code::BadValue, "chosen_label must be one letter");
  c.chosen_label = label[0];
  c.raw_text = j.at("raw_text").get<std::string>();
  return c;
}

/// Outcome of the synthesis step. candidate_label lives in the synthesis
/// prompt's {A = agent 1's choice, B = agent 2's choice} space; mapped_option
/// is the corresponding letter in the question's own option space.
struct FinalDecision {
  char candidate_label = 'A';
  char mapped_option = 'A';
  std::string reasoning;
  std::map<char, int> confidence_scores;

  friend bool operator==(const FinalDecision&, const FinalDecision&) = default;
};

inline json to_json(const FinalDecision& d) {
  json scores = json::object();
  for (const auto& [label, score] : d.confidence_scores)
    scores[std::string(1, label)] = score;
  return json{{"candidate_label", std::string(1, d.candidate_label)},
              {"mapped_option", std::string(1, d.mapped_option)},
              {"reasoning", d.reasoning},
              {"confidence_scores", std::move(scores)}};
}

inline FinalDecision decision_from_json(const json& j) {
  FinalDecision d;
  d.candidate_label = j.at("candidate_label").get<std::string>().at(0);
  d.mapped_option = j.at("mapped_option").get<std::string>().at(0);
  d.reasoning = j.at("reasoning").get<std::string>();
  int sum = 0;
  for (const auto& [key, value] : j.at("confidence_scores").items()) {
    if (key.size() != 1 || !value.is_number_integer() || value.get<int>() < 0)
      throw ValidationError(ValidationError::Code::BadValue, "bad confidence score entry");
    d.confidence_scores[key[0]] = value.get<int>();
    sum += value.get<int>();
  }
  if (sum != 100)
    throw ValidationError(ValidationError::Code::BadValue, "confidence scores must sum to 100");
  return d;
}

struct CallLogEntry {
  Role role = Role::Primary;
  std::string template_id;     // serialized template name
  std::string prompt_digest;   // short hex digest of the rendered body
  std::int64_t latency_ms = 0;
  bool cached = false;         // in-memory only; aggregated into run summaries
};

/// Full per-question trace. The canonical JSON form excludes the per-call
/// cached flag so that a cold run and an all-cache rerun serialize
/// byte-identically; cache traffic is accounted for at run level instead.
struct PipelineRecord {
  std::string question_id;
  Pathway pathway = Pathway::Direct;
  Verdict verdict;
  std::optional<std::pair<CandidateAnswer, CandidateAnswer>> candidates;
  std::optional<FinalDecision> decision;
  char final_answer = 'A';
  bool correct = false;
  std::vector<CallLogEntry> call_log;
  bool helper_degraded = false;
  bool fallback_used = false;
};

namespace detail {

inline void check_record(const PipelineRecord& r) {
  if (r.pathway == Pathway::Direct && (r.candidates || r.decision))
    throw ValidationError(ValidationError::Code::BadValue,
                          "direct records must not carry candidates or a decision");
  if (r.pathway == Pathway::Collaborative && (!r.candidates || !r.decision))
    throw ValidationError(ValidationError::Code::BadValue,
                          "collaborative records need exactly 2 candidates and a decision");
}

}  // namespace detail

inline json to_json(const PipelineRecord& r) {
  detail::check_record(r);
  json calls = json::array();
  for (const auto& c : r.call_log) {
    calls.push_back({{"role", to_string(c.role)},
                     {"template", c.template_id},
                     {"prompt_digest", c.prompt_digest},
                     {"latency_ms", c.latency_ms}});
  }
  json j{{"question_id", r.question_id},
         {"pathway", to_string(r.pathway)},
         {"verdict", to_json(r.verdict)},
         {"final_answer", std::string(1, r.final_answer)},
         {"correct", r.correct},
         {"call_log", std::move(calls)},
         {"helper_degraded", r.helper_degraded},
         {"fallback_used", r.fallback_used}};
  if (r.candidates) {
    j["candidates"] = json::array({to_json(r.candidates->first), to_json(r.candidates->second)});
  }
  if (r.decision) j["decision"] = to_json(*r.decision);
  return j;
}

inline PipelineRecord record_from_json(const json& j) {
  PipelineRecord r;
  r.question_id = j.at("question_id").get<std::string>();
  r.pathway = pathway_from_string(j.at("pathway").get<std::string>());
  r.verdict = verdict_from_json(j.at("verdict"));
  r.final_answer = j.at("final_answer").get<std::string>().at(0);
  r.correct = j.at("correct").get<bool>();
  r.helper_degraded = j.value("helper_degraded", false);
  r.fallback_used = j.value("fallback_used", false);
  if (j.contains("candidates")) {
    const auto& arr = j["candidates"];
    if (!arr.is_array() || arr.size() != 2)
      throw ValidationError(ValidationError::Code::BadValue, "candidates must be a pair");
    r.candidates = std::make_pair(candidate_from_json(arr[0]), candidate_from_json(arr[1]));
  }
  if (j.contains("decision")) r.decision = decision_from_json(j["decision"]);
  for (const auto& c : j.at("call_log")) {
    CallLogEntry e;
    e.role = role_from_string(c.at("role").get<std::string>());
    e.template_id = c.at("template").get<std::string>();
    e.prompt_digest = c.at("prompt_digest").get<std::string>();
    e.latency_ms = c.at("latency_ms").get<std::int64_t>();
    r.call_log.push_back(std::move(e));
  }
  detail::check_record(r);
  return r;
}

// --- JSON Lines IO -----------------------------------------------------------

inline std::string question_jsonl_line(const Question& q) { return to_json(q).dump(); }

inline void write_questions_jsonl(const std::filesystem::path& path,
                                  const std::vector<Question>& questions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& q : questions) out << question_jsonl_line(q) << '\n';
  if (!out.good()) throw IoError("failed writing " + path.string());
}

inline std::vector<Question> read_questions_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::vector<Question> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(question_from_json(json::parse(line)));
    } catch (const json::exception& ex) {
      throw SchemaMismatchError(line_no, std::string("bad question json: ") + ex.what());
    }
  }
  return out;
}

inline void write_records_jsonl(const std::filesystem::path& path,
                                const std::vector<PipelineRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out.good()) throw IoError("failed writing " + path.string());
}

inline std::vector<PipelineRecord> read_records_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::vector<PipelineRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& ex) {
      throw SchemaMismatchError(line_no, std::string("bad record json: ") + ex.what());
    }
  }
  return out;
}

}  // namespace cure
