#include "asof/prompts.hpp"

#include "asof/error.hpp"
#include "asof/util.hpp"

namespace asof {

using nlohmann::json;

PromptSet PromptSet::defaults() {
  PromptSet p;
  p.answer_system =
      "You are an expert in German law. Answer the legal question precisely and in German. Base your answer "
      "solely on the legal texts provided to you and on the facts of the case. If the information provided is "
      "insufficient to answer the question, reply with exactly this sentence and nothing else: {sentinel}";
  p.answer_vanilla = "Question:\n{question}";
  p.answer_with_context =
      "The following statutory provisions are in force on the date of the facts ({as_of}):\n\n"
      "{context}\n\nQuestion:\n{question}";
  p.answer_with_snippets =
      "The following web search results were retrieved for the question:\n\n"
      "=== BEGIN WEB RESULTS ===\n{snippets}=== END WEB RESULTS ===\n\nQuestion:\n{question}";

  p.identify_statute =
      "Which German statute governs the following legal question? Answer with exactly one code from this list: "
      "BGB, StPO, AO, EStG, BauGB, HGB.\n\nQuestion:\n{question}";
  p.toc_select =
      "Below is the table of contents of the {statute}. Select at most {max_select} paragraphs that are needed to "
      "answer the question. Answer only with the paragraph labels, e.g. \"§ 1, § 2\".\n\n"
      "Table of contents:\n{toc}\nQuestion:\n{question}";

  p.generation_system =
      "You are a German legal scholar who writes exam-style case questions with model answers. Write the "
      "question and answer in German.";
  p.classify_transition =
      "Compare two consecutive versions of {provision}. A change is substantive when it changes rights or "
      "obligations, requirements, deadlines, thresholds, percentages, amounts, or jurisdictions; purely "
      "editorial edits are not substantive. Reply with a JSON object "
      "{\"substantive\": true|false, \"changed_aspects\": [...], \"rationale\": \"...\"} where changed_aspects "
      "uses: rights_obligations, requirements, deadlines, thresholds, percentages, amounts, jurisdictions.\n\n"
      "PREVIOUS VERSION (valid {prev_from} to {prev_to}):\n{prev_text}\n\n"
      "NEXT VERSION (valid from {next_from}):\n{next_text}\n";
  p.generate_post_cutoff =
      "Write one case question whose correct answer depends on the NEXT version of {provision} and would be "
      "answered differently under the PREVIOUS version. The facts must happen on a single explicit calendar "
      "date inside the fact date window [{window_from}, {window_to}) and the date must be written out in the "
      "question. Reply with a JSON object {\"question\": \"...\", \"answer\": \"...\"}.\n\n"
      "Fact date window: [{window_from}, {window_to})\n\n"
      "PREVIOUS VERSION (valid {prev_from} to {prev_to}):\n{prev_text}\n\n"
      "NEXT VERSION (valid from {next_from}):\n{next_text}\n";
  p.generate_pre_amendment =
      "Write one case question whose correct answer requires the OLDER version of {provision}; applying the "
      "newer version must lead to a different result. Do not mention that an older version applies; the fact "
      "pattern must carry a single explicit calendar date inside the fact date window [{window_from}, "
      "{window_to}). Reply with a JSON object {\"question\": \"...\", \"answer\": \"...\"}.\n\n"
      "Fact date window: [{window_from}, {window_to})\n\n"
      "OLDER VERSION (valid {prev_from} to {prev_to}):\n{prev_text}\n\n"
      "NEWER VERSION (valid from {next_from}):\n{next_text}\n";
  p.multi_select =
      "The anchor paragraph is {anchor}. From the table of contents of the {statute} below, select additional "
      "paragraphs that are thematically connected to the anchor so that a single case requires all of them. "
      "Answer only with paragraph labels, e.g. \"§ 1, § 2\".\n\nTable of contents:\n{toc}";
  p.multi_draft =
      "Write a temporally neutral case question that requires each of the following provisions for a complete "
      "answer. Use only the current versions shown. Reply with a JSON object "
      "{\"question\": \"...\", \"answer\": \"...\"}.\n\n{provisions}";
  p.multi_temporalize =
      "Rewrite the draft case so that it happens on a single explicit calendar date inside the fact date window "
      "[{window_from}, {window_to}), at which {historical} must be applied in its earlier version while the "
      "other provisions may remain current. Adjust the answer to the law in force on that date. Reply with a "
      "JSON object {\"question\": \"...\", \"answer\": \"...\"}.\n\n"
      "Fact date window: [{window_from}, {window_to})\n\n"
      "Draft question:\n{draft_question}\n\nDraft answer:\n{draft_answer}\n\n"
      "All historical versions:\n{versions}";

  p.judge_system =
      "You are a strict examiner of German law. The reference answer is correct. Score the candidate answer on "
      "four criteria, each on a continuous scale from 0 to 1.";
  p.judge_user =
      "Criteria:\n"
      "- outcome: Is the legal conclusion made by the candidate correct?\n"
      "- reasoning: Is the candidate's derivation of the legal conclusion correct?\n"
      "- basis: Did the candidate identify the correct provisions necessary to answer the question?\n"
      "- version: Did the candidate apply the right version of the identified legal provisions?\n\n"
      "Reply with a JSON object {\"outcome\": x, \"reasoning\": x, \"basis\": x, \"version\": x, "
      "\"rationale\": \"...\"}.\n\n"
      "Question:\n{question}\n\nReference answer:\n{reference}\n\nCandidate answer:\n{candidate}\n";
  p.judge_retry_suffix =
      "\nYour previous reply could not be parsed. Reply with only the JSON object, every score a number "
      "between 0 and 1.";
  return p;
}

PromptSet PromptSet::from_json(const json& overrides) {
  auto p = defaults();
  auto take = [&](const char* key, std::string& field) {
    if (overrides.contains(key)) field = overrides[key].get<std::string>();
  };
  take("answer_system", p.answer_system);
  take("answer_vanilla", p.answer_vanilla);
  take("answer_with_context", p.answer_with_context);
  take("answer_with_snippets", p.answer_with_snippets);
  take("identify_statute", p.identify_statute);
  take("toc_select", p.toc_select);
  take("generation_system", p.generation_system);
  take("classify_transition", p.classify_transition);
  take("generate_post_cutoff", p.generate_post_cutoff);
  take("generate_pre_amendment", p.generate_pre_amendment);
  take("multi_select", p.multi_select);
  take("multi_draft", p.multi_draft);
  take("multi_temporalize", p.multi_temporalize);
  take("judge_system", p.judge_system);
  take("judge_user", p.judge_user);
  take("judge_retry_suffix", p.judge_retry_suffix);
  return p;
}

PromptSet PromptSet::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    fail(ErrorCode::kFatalConfig, "bad prompt file " + path.string() + ": " + e.what());
  }
}

std::optional<json> extract_json_block(std::string_view reply) {
  std::string_view body = reply;
  if (auto fence = reply.find("```json"); fence != std::string_view::npos) {
    auto start = fence + 7;
    auto end = reply.find("```", start);
    body = reply.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
  }
  auto open = body.find('{');
  auto close = body.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  try {
    auto j = json::parse(body.substr(open, close - open + 1));
    if (!j.is_object()) return std::nullopt;
    return j;
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
}

}  // namespace asof
