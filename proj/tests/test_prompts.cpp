#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <string>

#include "cure/prompts.hpp"
#include "support/synthetic.hpp"

using namespace cure;

namespace {

const std::filesystem::path kGoldenDir = std::filesystem::path(CURE_TEST_DIR) / "golden";

// Golden files end with exactly one newline; the frozen templates do not.
std::string golden(const std::string& name) {
  std::string text = testsupport::slurp(kGoldenDir / name);
  REQUIRE(!text.empty());
  REQUIRE(text.back() == '\n');
  text.pop_back();
  return text;
}

Question four_option_question() {
  return make_question(
      "prompt-q1", "Which drug is first line?", "",
      {{'A', "Aspirin"}, {'B', "Metformin"}, {'C', "Lisinopril"}, {'D', "Atorvastatin"}}, 'B',
      DatasetKind::MedMCQA);
}

}  // namespace

TEST_CASE("frozen template texts match their golden files") {
  CHECK(std::string(template_text(TemplateId::ConfidenceV1)) == golden("confidence_v1.txt"));
  CHECK(std::string(template_text(TemplateId::SynthesisV1)) == golden("synthesis_v1.txt"));
  CHECK(std::string(template_text(TemplateId::DirectAnswerV1)) ==
        golden("direct_answer_v1.txt"));
  CHECK(std::string(template_text(TemplateId::CotDirectV1)) == golden("cot_direct_v1.txt"));
}

TEST_CASE("confidence prompt renders N/A for empty context") {
  Question q = four_option_question();
  PromptText p = render_confidence_prompt(q);
  CHECK(p.body.find("Context: N/A") != std::string::npos);
  CHECK(p.template_id == TemplateId::ConfidenceV1);
}

TEST_CASE("confidence prompt lists one line per option and keeps the closing sentence") {
  Question q = four_option_question();
  PromptText p = render_confidence_prompt(q);

  // String-level oracle: rebuild the expected body by hand from the frozen
  // template and diff.
  std::string expected(template_text(TemplateId::ConfidenceV1));
  expected = detail::replace_all(expected, "{question}", q.stem);
  expected = detail::replace_all(expected, "{context}", "N/A");
  expected = detail::replace_all(expected, "{options}",
                                 "A. Aspirin\nB. Metformin\nC. Lisinopril\nD. Atorvastatin");
  CHECK(p.body == expected);

  const auto options_at = p.body.find("Options:\n");
  const auto instruction_at =
      p.body.find("Output only \"Sure\" or \"Not Sure\" without any additional text.");
  REQUIRE(options_at != std::string::npos);
  REQUIRE(instruction_at != std::string::npos);
  int option_lines = 0;
  std::size_t pos = options_at;
  while ((pos = p.body.find('\n', pos + 1)) != std::string::npos && pos < instruction_at) {
    const char c = p.body[pos + 1];
    if (c >= 'A' && c <= 'D' && p.body[pos + 2] == '.') ++option_lines;
  }
  CHECK(option_lines == 4);

  const std::string closing = "Output only \"Sure\" or \"Not Sure\" without any additional text.";
  REQUIRE(p.body.size() >= closing.size());
  CHECK(p.body.substr(p.body.size() - closing.size()) == closing);
}

TEST_CASE("synthesis prompt carries both agent lines verbatim") {
  Question q = four_option_question();
  CandidateAnswer c1{AgentId::Agent1, 'B', "B"};
  CandidateAnswer c2{AgentId::Agent2, 'D', "D"};
  PromptText p = render_synthesis_prompt(q, c1, c2);
  CHECK(p.body.find("Agent 1 chose: B. Metformin") != std::string::npos);
  CHECK(p.body.find("Agent 2 chose: D. Atorvastatin") != std::string::npos);
  CHECK(p.body.find("\"confidence_scores\"") != std::string::npos);

  // Hand-rendered diff against the frozen template.
  std::string expected(template_text(TemplateId::SynthesisV1));
  expected = detail::replace_all(expected, "{question}", q.stem);
  expected = detail::replace_all(expected, "{context}", "N/A");
  expected = detail::replace_all(expected, "{options}",
                                 "A. Aspirin\nB. Metformin\nC. Lisinopril\nD. Atorvastatin");
  expected = detail::replace_all(expected, "{option1}", "B. Metformin");
  expected = detail::replace_all(expected, "{option2}", "D. Atorvastatin");
  CHECK(p.body == expected);
}

TEST_CASE("synthesis prompt keeps duplicate agent choices as two lines") {
  Question q = four_option_question();
  CandidateAnswer c1{AgentId::Agent1, 'A', "A"};
  CandidateAnswer c2{AgentId::Agent2, 'A', "A"};
  PromptText p = render_synthesis_prompt(q, c1, c2);
  CHECK(p.body.find("Agent 1 chose: A. Aspirin") != std::string::npos);
  CHECK(p.body.find("Agent 2 chose: A. Aspirin") != std::string::npos);
}

TEST_CASE("synthesis prompt preserves agent order even when it looks unsorted") {
  Question q = four_option_question();
  CandidateAnswer c1{AgentId::Agent1, 'D', "D"};
  CandidateAnswer c2{AgentId::Agent2, 'B', "B"};
  PromptText p = render_synthesis_prompt(q, c1, c2);
  const auto first = p.body.find("Agent 1 chose: D.");
  const auto second = p.body.find("Agent 2 chose: B.");
  REQUIRE(first != std::string::npos);
  REQUIRE(second != std::string::npos);
  CHECK(first < second);
}

TEST_CASE("synthesis prompt rejects swapped agents") {
  Question q = four_option_question();
  CandidateAnswer c1{AgentId::Agent2, 'A', "A"};
  CandidateAnswer c2{AgentId::Agent1, 'B', "B"};
  CHECK_THROWS_AS(render_synthesis_prompt(q, c1, c2), ValidationError);
}

TEST_CASE("direct prompt names exactly the permitted letters") {
  Question binary = make_question("b1", "stem", "ctx", {{'A', "yes"}, {'B', "no"}}, 'A',
                                  DatasetKind::PubMedQA);
  PromptText p2 = render_direct_answer_prompt(binary);
  CHECK(p2.body.find("(\"A\" or \"B\")") != std::string::npos);
  CHECK(p2.body.find("Context: ctx") != std::string::npos);

  PromptText p4 = render_direct_answer_prompt(four_option_question());
  CHECK(p4.body.find("(\"A\", \"B\", \"C\", or \"D\")") != std::string::npos);
}

TEST_CASE("rendering is deterministic") {
  Question q = four_option_question();
  PromptText a = render_direct_answer_prompt(q);
  PromptText b = render_direct_answer_prompt(q);
  CHECK(a.body == b.body);
  CHECK(a.slot_digest == b.slot_digest);

  Question other = testsupport::make_synthetic_question(7);
  CHECK(render_direct_answer_prompt(other).slot_digest != a.slot_digest);
}

TEST_CASE("rendered bodies contain no unsubstituted slot markers") {
  Question q = testsupport::make_synthetic_question(11, 4);
  CandidateAnswer c1{AgentId::Agent1, 'A', "A"};
  CandidateAnswer c2{AgentId::Agent2, 'C', "C"};
  for (const PromptText& p :
       {render_confidence_prompt(q), render_synthesis_prompt(q, c1, c2),
        render_direct_answer_prompt(q), render_cot_direct_prompt(q)}) {
    for (const char* marker : {"{question}", "{context}", "{options}", "{option1}",
                               "{option2}", "{letters}"}) {
      INFO(to_string(p.template_id) << " still contains " << marker);
      CHECK(p.body.find(marker) == std::string::npos);
    }
  }
}

TEST_CASE("template digests are stable identifiers") {
  for (TemplateId t : all_template_ids()) {
    CHECK(template_digest(t).size() == 64);
    CHECK(template_digest(t) == template_digest(t));
  }
  CHECK(template_digest(TemplateId::ConfidenceV1) != template_digest(TemplateId::SynthesisV1));
}
