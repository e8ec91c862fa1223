#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cure/detail/digest.hpp"
#include "cure/domain.hpp"
#include "cure/errors.hpp"

namespace cure {

struct DatasetSpec {
  DatasetKind kind = DatasetKind::MedQA;
  std::filesystem::path path;
  std::string split = "test";
  int sample_n = 1000;
  std::uint64_t seed = 42;
};

struct LoadResult {
  std::vector<Question> questions;
  struct Skip {
    std::size_t line;
    std::string reason;
  };
  std::vector<Skip> skipped;  // e.g. PubMedQA "maybe" records
};

namespace detail_datasets {

// Source field mappings, one per benchmark's published JSON Lines schema.
// Any drift from these shapes is a hard SchemaMismatch; answers that exist
// but cannot be mapped into the option space are skipped and counted.

inline const json& require(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw SchemaMismatchError(line, std::string("missing field: ") + key);
  return j[key];
}

inline std::string require_string(const json& j, const char* key, std::size_t line) {
  const json& v = require(j, key, line);
  if (!v.is_string()) throw SchemaMismatchError(line, std::string(key) + " must be a string");
  return v.get<std::string>();
}

// {"question", "options": {"A": ..| .. "D": ..}, "answer_idx": "B", ...}
inline std::optional<Question> parse_medqa(const json& j, std::size_t line,
                                           LoadResult& result) {
  std::string stem = require_string(j, "question", line);
  const json& opts = require(j, "options", line);
  if (!opts.is_object()) throw SchemaMismatchError(line, "options must be an object");
  std::vector<Option> options;
  for (char label = 'A'; label < static_cast<char>('A' + opts.size()); ++label) {
    const std::string key(1, label);
    if (!opts.contains(key))
      throw SchemaMismatchError(line, "options must be keyed A.. without gaps");
    if (!opts[key].is_string())
      throw SchemaMismatchError(line, "option " + key + " must be a string");
    options.push_back(Option{label, opts[key].get<std::string>()});
  }
  std::string gold = require_string(j, "answer_idx", line);
  if (gold.size() != 1) {
    result.skipped.push_back({line, "UnmappableAnswer: answer_idx '" + gold + "'"});
    return std::nullopt;
  }
  std::string id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>()
                                                           : "medqa-" + std::to_string(line);
  try {
    return make_question(std::move(id), std::move(stem), "", std::move(options), gold[0],
                         DatasetKind::MedQA);
  } catch (const ValidationError& ex) {
    throw SchemaMismatchError(line, ex.what());
  }
}

// {"id", "question", "opa".."opd", "cop": 0-indexed correct option, ...}
inline std::optional<Question> parse_medmcqa(const json& j, std::size_t line,
                                             LoadResult& result) {
  std::string stem = require_string(j, "question", line);
  std::vector<Option> options;
  char label = 'A';
  for (const char* key : {"opa", "opb", "opc", "opd"})
    options.push_back(Option{label++, require_string(j, key, line)});
  const json& cop = require(j, "cop", line);
  if (!cop.is_number_integer()) throw SchemaMismatchError(line, "cop must be an integer");
  const int idx = cop.get<int>();
  if (idx < 0 || idx > 3) {
    result.skipped.push_back({line, "UnmappableAnswer: cop=" + std::to_string(idx)});
    return std::nullopt;
  }
  std::string id = j.contains("id") && j["id"].is_string()
                       ? j["id"].get<std::string>()
                       : "medmcqa-" + std::to_string(line);
  try {
    return make_question(std::move(id), std::move(stem), "", std::move(options),
                         static_cast<char>('A' + idx), DatasetKind::MedMCQA);
  } catch (const ValidationError& ex) {
    throw SchemaMismatchError(line, ex.what());
  }
}

// {"pubid"|"id", "question", "context": {"contexts": [..]} | string,
//  "final_decision": "yes"|"no"|"maybe", ...}
inline std::optional<Question> parse_pubmedqa(const json& j, std::size_t line,
                                              LoadResult& result) {
  std::string stem = require_string(j, "question", line);

  std::string context;
  const json& ctx = require(j, "context", line);
  if (ctx.is_string()) {
    context = ctx.get<std::string>();
  } else if (ctx.is_object() && ctx.contains("contexts") && ctx["contexts"].is_array()) {
    for (const auto& part : ctx["contexts"]) {
      if (!part.is_string()) throw SchemaMismatchError(line, "contexts entries must be strings");
      if (!context.empty()) context += "\n";
      context += part.get<std::string>();
    }
  } else {
    throw SchemaMismatchError(line, "context must be a string or {contexts: [...]}");
  }

  std::string decision = detail::to_lower(require_string(j, "final_decision", line));
  if (decision == "maybe") {
    result.skipped.push_back({line, "UnmappableAnswer: final_decision 'maybe'"});
    return std::nullopt;
  }
  if (decision != "yes" && decision != "no") {
    result.skipped.push_back({line, "UnmappableAnswer: final_decision '" + decision + "'"});
    return std::nullopt;
  }

  std::string id;
  if (j.contains("pubid")) {
    const json& pubid = j["pubid"];
    id = pubid.is_string() ? pubid.get<std::string>()
                           : std::to_string(pubid.get<std::int64_t>());
  } else if (j.contains("id") && j["id"].is_string()) {
    id = j["id"].get<std::string>();
  } else {
    id = "pubmedqa-" + std::to_string(line);
  }
  try {
    return make_question(std::move(id), std::move(stem), std::move(context),
                         {Option{'A', "yes"}, Option{'B', "no"}},
                         decision == "yes" ? 'A' : 'B', DatasetKind::PubMedQA);
  } catch (const ValidationError& ex) {
    throw SchemaMismatchError(line, ex.what());
  }
}

}  // namespace detail_datasets

/// Loads and normalizes one benchmark file (JSON Lines in the dataset's
/// published schema). Every emitted Question satisfies the domain invariants;
/// ids are unique or the load fails.
inline LoadResult load_dataset(const DatasetSpec& spec) {
  std::ifstream in(spec.path, std::ios::binary);
  if (!in) throw ConfigError("dataset file not found: " + spec.path.string());

  LoadResult result;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw SchemaMismatchError(line_no, "not a JSON object");

    std::optional<Question> q;
    try {
      switch (spec.kind) {
        case DatasetKind::MedQA: q = detail_datasets::parse_medqa(j, line_no, result); break;
        case DatasetKind::MedMCQA:
          q = detail_datasets::parse_medmcqa(j, line_no, result);
          break;
        case DatasetKind::PubMedQA:
          q = detail_datasets::parse_pubmedqa(j, line_no, result);
          break;
      }
    } catch (const json::exception& ex) {
      throw SchemaMismatchError(line_no, ex.what());
    }
    if (!q) continue;
    if (!seen_ids.insert(q->id).second)
      throw SchemaMismatchError(line_no, "duplicate record id: " + q->id);
    result.questions.push_back(std::move(*q));
  }
  return result;
}

/// Seeded shuffle, then prefix. PRNG pinned to std::mt19937_64 with
/// Fisher-Yates draws j = next() % (i + 1), which is bit-stable across
/// platforms (std::shuffle is not).
inline std::vector<Question> sample_questions(std::vector<Question> questions, std::size_t n,
                                              std::uint64_t seed) {
  if (n > questions.size())
    throw InsufficientDataError("requested " + std::to_string(n) + " questions, have " +
                                std::to_string(questions.size()));
  std::mt19937_64 rng(seed);
  for (std::size_t i = questions.size(); i-- > 1;) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(questions[i], questions[j]);
  }
  questions.resize(n);
  return questions;
}

/// Content hash of the sampled, normalized stream; recorded in run manifests
/// so any two runs are comparable or provably not.
inline std::string dataset_digest(const std::vector<Question>& questions) {
  std::string stream;
  for (const auto& q : questions) {
    stream += question_jsonl_line(q);
    stream += '\n';
  }
  return detail::sha256_hex(stream);
}

}  // namespace cure
