#include "selfrw/judge.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "selfrw/errors.hpp"

namespace selfrw {

std::string build_judge_prompt(const std::string& passage) {
  if (passage.empty()) {
    throw Error(ErrorKind::PreconditionViolation, "judge passage must be non-empty");
  }
  static const std::string kTemplate =
      "### Instruction\n"
      "You are an impartial judge evaluating the overall quality of a piece of thinking texts. "
      "Your task is to assess the provided texts considering the following flaws.\n"
      "\n"
      "1.  **Over-Thinking**: The passage exhibits excessive thinking on simple or "
      "straightforward concepts.\n"
      "2.  **Under-Thinking**: The passage lacks sufficient depth, complexity, or thoroughness "
      "in addressing significant and challenging aspects.\n"
      "3.  **Disordered-Thinking**: The flow of thought is illogical and inconsistent, or "
      "interleaves multiple unrelated topics, making it difficult to follow.\n"
      "4.  **Redundant-Thinking**: The passage repeats ideas or insights unnecessarily without "
      "adding significant new value or perspective.\n"
      "\n"
      "For each flaw, assign a score from 1 to 5, where 1 indicates the flaw is significantly "
      "present (worst) and 5 indicates the flaw is perfectly avoided (best). After evaluating "
      "each aspect, provide an overall judgment of the passage's quality, also on a 1-5 scale. "
      "Your output must strictly adhere to the following format, where `[Your judgment]' is a "
      "single numerical digit (1, 2, 3, 4, or 5):\n"
      "\n"
      "```\n"
      "Aspect 1: [Your judgment]\n"
      "Aspect 2: [Your judgment]\n"
      "Aspect 3: [Your judgment]\n"
      "Aspect 4: [Your judgment]\n"
      "Overall: [Your judgment]\n"
      "```\n"
      "\n"
      "Please provide only the formatted judgment, without any additional explanations or "
      "context outside of the specified format.\n"
      "\n"
      "### Thinking Passage to Judge\n";
  return kTemplate + passage;
}

std::string render_judgment(const JudgeScorecard& card) {
  std::ostringstream os;
  os << "```\n";
  os << "Aspect 1: " << card.over_thinking << "\n";
  os << "Aspect 2: " << card.under_thinking << "\n";
  os << "Aspect 3: " << card.disordered_thinking << "\n";
  os << "Aspect 4: " << card.redundant_thinking << "\n";
  os << "Overall: " << card.overall << "\n";
  os << "```";
  return os.str();
}

namespace {

/// Body of the last complete ``` ... ``` block, or the whole text.
std::string last_fenced_block(const std::string& text) {
  std::vector<size_t> fences;
  size_t pos = 0;
  while ((pos = text.find("```", pos)) != std::string::npos) {
    fences.push_back(pos);
    pos += 3;
  }
  if (fences.size() < 2) return text;
  size_t last_pair = (fences.size() / 2) * 2;  // ignore a dangling opener
  size_t open = fences[last_pair - 2] + 3;
  size_t close = fences[last_pair - 1];
  return text.substr(open, close - open);
}

int parse_labeled_score(const std::string& block, const std::string& label) {
  size_t pos = block.find(label);
  if (pos == std::string::npos) {
    throw Error(ErrorKind::MalformedResponse, "missing '" + label + "' line");
  }
  size_t i = pos + label.size();
  while (i < block.size() && (block[i] == ' ' || block[i] == '\t')) ++i;
  if (i >= block.size() || block[i] != ':') {
    throw Error(ErrorKind::MalformedResponse, "missing ':' after '" + label + "'");
  }
  ++i;
  while (i < block.size() && (block[i] == ' ' || block[i] == '\t')) ++i;
  if (i >= block.size() || !std::isdigit(static_cast<unsigned char>(block[i]))) {
    throw Error(ErrorKind::MalformedResponse, "no digit after '" + label + "'");
  }
  if (i + 1 < block.size() && std::isdigit(static_cast<unsigned char>(block[i + 1]))) {
    throw Error(ErrorKind::MalformedResponse, "score after '" + label + "' is not a single digit");
  }
  int value = block[i] - '0';
  if (value < 1 || value > 5) {
    throw Error(ErrorKind::OutOfRange,
                "score " + std::to_string(value) + " for '" + label + "' outside [1, 5]");
  }
  return value;
}

}  // namespace

JudgeScorecard parse_judgment(const std::string& text) {
  std::string block = last_fenced_block(text);
  JudgeScorecard card;
  card.over_thinking = parse_labeled_score(block, "Aspect 1");
  card.under_thinking = parse_labeled_score(block, "Aspect 2");
  card.disordered_thinking = parse_labeled_score(block, "Aspect 3");
  card.redundant_thinking = parse_labeled_score(block, "Aspect 4");
  card.overall = parse_labeled_score(block, "Overall");
  return card;
}

AggregateScore aggregate(const std::vector<JudgeScorecard>& cards) {
  if (cards.empty()) throw Error(ErrorKind::EmptyInput, "aggregate over no scorecards");
  AggregateScore agg;
  agg.sample_count = static_cast<int>(cards.size());
  for (const JudgeScorecard& card : cards) {
    agg.over_mean += card.over_thinking;
    agg.under_mean += card.under_thinking;
    agg.disordered_mean += card.disordered_thinking;
    agg.redundant_mean += card.redundant_thinking;
    agg.overall_mean += card.overall;
  }
  double n = static_cast<double>(cards.size());
  agg.over_mean /= n;
  agg.under_mean /= n;
  agg.disordered_mean /= n;
  agg.redundant_mean /= n;
  agg.overall_mean /= n;
  agg.over_scaled = agg.over_mean * 20.0;
  agg.under_scaled = agg.under_mean * 20.0;
  agg.disordered_scaled = agg.disordered_mean * 20.0;
  agg.redundant_scaled = agg.redundant_mean * 20.0;
  agg.overall_scaled = agg.overall_mean * 20.0;
  return agg;
}

JudgeScorecard judge_passage(const std::string& passage, JudgeBackend& backend, int max_retries,
                             std::string* raw_response) {
  std::string prompt = build_judge_prompt(passage);
  std::string last_response;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    last_response = backend.respond(prompt);
    try {
      JudgeScorecard card = parse_judgment(last_response);
      if (raw_response != nullptr) *raw_response = last_response;
      return card;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::MalformedResponse && e.kind() != ErrorKind::OutOfRange) throw;
    }
  }
  throw Error(ErrorKind::MalformedAfterRetries,
              "judge reply unusable after " + std::to_string(max_retries + 1) +
                  " attempts; last reply: " + last_response);
}

uint64_t fnv1a_hash(const std::string& text) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

JudgeScorecard MockJudge::card_for(const std::string& passage) {
  uint64_t h = fnv1a_hash(passage);
  JudgeScorecard card;
  card.over_thinking = 1 + static_cast<int>(h % 5);
  card.under_thinking = 1 + static_cast<int>((h >> 8) % 5);
  card.disordered_thinking = 1 + static_cast<int>((h >> 16) % 5);
  card.redundant_thinking = 1 + static_cast<int>((h >> 24) % 5);
  card.overall = 1 + static_cast<int>((h >> 32) % 5);
  return card;
}

std::string MockJudge::respond(const std::string& prompt) {
  if (malformed_remaining_ > 0) {
    --malformed_remaining_;
    return "I cannot score this passage.";
  }
  // The passage sits after the final prompt header line.
  static const std::string kHeader = "### Thinking Passage to Judge\n";
  size_t pos = prompt.rfind(kHeader);
  std::string passage = pos == std::string::npos ? prompt : prompt.substr(pos + kHeader.size());
  return render_judgment(card_for(passage));
}

void write_scorecards(const std::filesystem::path& path,
                      const std::vector<ScorecardRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write scorecards: " + path.string());
  for (const ScorecardRecord& record : records) {
    nlohmann::json line;
    line["passage_id"] = record.passage_id;
    line["over_thinking"] = record.card.over_thinking;
    line["under_thinking"] = record.card.under_thinking;
    line["disordered_thinking"] = record.card.disordered_thinking;
    line["redundant_thinking"] = record.card.redundant_thinking;
    line["overall"] = record.card.overall;
    line["raw_response_digest"] = record.raw_response_digest;
    out << line.dump() << "\n";
  }
}

std::vector<ScorecardRecord> read_scorecards(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open scorecards: " + path.string());
  std::vector<ScorecardRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json parsed = nlohmann::json::parse(line);
    ScorecardRecord record;
    record.passage_id = parsed.at("passage_id").get<std::string>();
    record.card.over_thinking = parsed.at("over_thinking").get<int>();
    record.card.under_thinking = parsed.at("under_thinking").get<int>();
    record.card.disordered_thinking = parsed.at("disordered_thinking").get<int>();
    record.card.redundant_thinking = parsed.at("redundant_thinking").get<int>();
    record.card.overall = parsed.at("overall").get<int>();
    record.raw_response_digest = parsed.at("raw_response_digest").get<std::string>();
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace selfrw
