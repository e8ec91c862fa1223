#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cure/detail/digest.hpp"
#include "cure/domain.hpp"
#include "cure/errors.hpp"

namespace cure {

enum class TemplateId { ConfidenceV1, SynthesisV1, DirectAnswerV1, CotDirectV1 };

inline std::string to_string(TemplateId t) {
  switch (t) {
    case TemplateId::ConfidenceV1: return "confidence_v1";
    case TemplateId::SynthesisV1: return "synthesis_v1";
    case TemplateId::DirectAnswerV1: return "direct_answer_v1";
    case TemplateId::CotDirectV1: return "cot_direct_v1";
  }
  return "confidence_v1";
}

inline TemplateId template_id_from_string(const std::string& s) {
  if (s == "confidence_v1") return TemplateId::ConfidenceV1;
  if (s == "synthesis_v1") return TemplateId::SynthesisV1;
  if (s == "direct_answer_v1") return TemplateId::DirectAnswerV1;
  if (s == "cot_direct_v1") return TemplateId::CotDirectV1;
  throw ValidationError(ValidationError::Code::BadValue, "unknown template id: " + s);
}

// Frozen template texts. Text outside the {slot} markers must never change
// for a given template id; golden-file tests pin every byte.

inline constexpr std::string_view kConfidenceV1 =
    R"(You are a medical expert. Assess whether you have sufficient knowledge and certainty to correctly answer the following multiple-choice medical question based strictly on your existing knowledge. Do not attempt to answer the question itself—only evaluate your confidence.

- If you clearly understand the question, context, and options, and are highly certain about the correct choice based on medical facts, respond with "Sure".
- If you do not fully understand the question, are uncertain about the topic, or lack awareness of the correct answer among the choices (e.g., due to knowledge gaps), respond with "Not Sure".
- Do not hallucinate medical information—base this solely on your pre-trained knowledge.

Question: {question}

Context: {context}

Options:
{options}

Output only "Sure" or "Not Sure" without any additional text.)";

inline constexpr std::string_view kSynthesisV1 =
    R"(You are a medical expert tasked with synthesizing answers from two agents to determine the best answer for a multiple-choice question. Review the answers below, reason step-by-step (200-300 words), and select the best option. Provide confidence scores for A-B as integers summing to 100 (avoid 0 or 100 unless certain). Base your reasoning strictly on medical knowledge; do not hallucinate.

Question: {question}

Context: {context}

Options:
{options}

Agent Answers:
- Agent 1 chose: {option1}
- Agent 2 chose: {option2}

INSTRUCTIONS:
- Reason step-by-step, evaluating both agents' choices using the context and medical knowledge.
- Provide a final answer and confidence scores.

Output in this JSON format:

{
  "answer": "A" or "B",
  "reasoning": "Your concise step-by-step reasoning here",
  "confidence_scores": {
    "A": integer_score,
    "B": integer_score
  }
})";

inline constexpr std::string_view kDirectAnswerV1 =
    R"(You are a medical expert. Answer the following multiple-choice medical question based strictly on your existing knowledge.

Question: {question}

Context: {context}

Options:
{options}

Output only the letter of the correct option ({letters}) without any additional text.)";

inline constexpr std::string_view kCotDirectV1 =
    R"(You are a medical expert. Answer the following multiple-choice medical question based strictly on your existing knowledge. Reason step-by-step (200-300 words), evaluating the options using the context and medical knowledge.

Question: {question}

Context: {context}

Options:
{options}

After your reasoning, end your reply with a single line containing only the letter of the correct option ({letters}).)";

inline std::string_view template_text(TemplateId t) {
  switch (t) {
    case TemplateId::ConfidenceV1: return kConfidenceV1;
    case TemplateId::SynthesisV1: return kSynthesisV1;
    case TemplateId::DirectAnswerV1: return kDirectAnswerV1;
    case TemplateId::CotDirectV1: return kCotDirectV1;
  }
  return kConfidenceV1;
}

inline std::vector<TemplateId> all_template_ids() {
  return {TemplateId::ConfidenceV1, TemplateId::SynthesisV1, TemplateId::DirectAnswerV1,
          TemplateId::CotDirectV1};
}

/// SHA-256 of a template's frozen text; recorded in run manifests.
inline std::string template_digest(TemplateId t) {
  return detail::sha256_hex(template_text(t));
}

struct PromptText {
  std::string body;
  TemplateId template_id = TemplateId::ConfidenceV1;
  std::string slot_digest;  // hash of the substituted values
  std::string question_id;  // carried along so mock backends can match on it
};

/// Short digest of the rendered body, used in call logs.
inline std::string prompt_digest(const PromptText& p) {
  detail::DigestBuilder b;
  b.field(to_string(p.template_id)).field(p.body);
  return detail::sha256_hex16(b.hex());
}

namespace detail_prompts {

using Slot = std::pair<std::string, std::string>;

/// Single-pass substitution: substituted values are never re-scanned, and a
/// '{' that does not open a known slot token is kept literally (the synthesis
/// template's JSON block depends on that).
inline std::string render_template(std::string_view tpl, const std::vector<Slot>& slots) {
  std::string out;
  out.reserve(tpl.size() + 256);
  std::size_t i = 0;
  while (i < tpl.size()) {
    char c = tpl[i];
    if (c != '{') {
      out.push_back(c);
      ++i;
      continue;
    }
    std::size_t close = tpl.find('}', i + 1);
    bool substituted = false;
    if (close != std::string_view::npos) {
      std::string_view name = tpl.substr(i + 1, close - i - 1);
      for (const auto& [slot, value] : slots) {
        if (slot == name) {
          out.append(value);
          i = close + 1;
          substituted = true;
          break;
        }
      }
    }
    if (!substituted) {
      out.push_back(c);
      ++i;
    }
  }
  return out;
}

inline std::string slot_digest(TemplateId t, const std::vector<Slot>& slots) {
  cure::detail::DigestBuilder b;
  b.field(to_string(t));
  for (const auto& [name, value] : slots) b.field(name).field(value);
  return b.hex();
}

/// Options block: one "LABEL. text" line per option.
inline std::string options_block(const Question& q) {
  std::string out;
  for (std::size_t i = 0; i < q.options.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out.push_back(q.options[i].label);
    out += ". ";
    out += q.options[i].text;
  }
  return out;
}

inline std::string context_or_na(const Question& q) {
  return q.context.empty() ? std::string("N/A") : q.context;
}

/// Quoted letter list for the direct-answer templates: '"A" or "B"' for two
/// options, '"A", "B", ..., or "X"' beyond that.
inline std::string letters_phrase(const Question& q) {
  std::string out;
  const auto n = q.options.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      if (n == 2) {
        out += " or ";
      } else {
        out += ", ";
        if (i + 1 == n) out += "or ";
      }
    }
    out.push_back('"');
    out.push_back(q.options[i].label);
    out.push_back('"');
  }
  return out;
}

inline PromptText make_prompt(TemplateId t, const Question& q, const std::vector<Slot>& slots) {
  PromptText p;
  p.template_id = t;
  p.body = render_template(template_text(t), slots);
  p.slot_digest = slot_digest(t, slots);
  p.question_id = q.id;
  return p;
}

}  // namespace detail_prompts

inline PromptText render_confidence_prompt(const Question& q) {
  using namespace detail_prompts;
  return make_prompt(TemplateId::ConfidenceV1, q,
                     {{"question", q.stem},
                      {"context", context_or_na(q)},
                      {"options", options_block(q)}});
}

/// Pre: c1 is agent 1, c2 is agent 2, and both chose labels the question has.
/// The agent lines render each agent's choice as "LABEL. full option text",
/// in agent order, even when both agents picked the same option.
inline PromptText render_synthesis_prompt(const Question& q, const CandidateAnswer& c1,
                                          const CandidateAnswer& c2) {
  using namespace detail_prompts;
  if (c1.agent != AgentId::Agent1 || c2.agent != AgentId::Agent2)
    throw ValidationError(ValidationError::Code::BadValue,
                          "synthesis prompt needs (agent1, agent2) in that order");
  auto chosen = [&](const CandidateAnswer& c) {
    std::string s(1, c.chosen_label);
    s += ". ";
    s += q.option_text(c.chosen_label);
    return s;
  };
  return make_prompt(TemplateId::SynthesisV1, q,
                     {{"question", q.stem},
                      {"context", context_or_na(q)},
                      {"options", options_block(q)},
                      {"option1", chosen(c1)},
                      {"option2", chosen(c2)}});
}

inline PromptText render_direct_answer_prompt(const Question& q) {
  using namespace detail_prompts;
  return make_prompt(TemplateId::DirectAnswerV1, q,
                     {{"question", q.stem},
                      {"context", context_or_na(q)},
                      {"options", options_block(q)},
                      {"letters", letters_phrase(q)}});
}

inline PromptText render_cot_direct_prompt(const Question& q) {
  using namespace detail_prompts;
  return make_prompt(TemplateId::CotDirectV1, q,
                     {{"question", q.stem},
                      {"context", context_or_na(q)},
                      {"options", options_block(q)},
                      {"letters", letters_phrase(q)}});
}

}  // namespace cure
