#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace selfrw {

/// Five 1-5 integer scores. Aspects follow the judging prompt's order:
/// 1 over-thinking, 2 under-thinking, 3 disordered-thinking,
/// 4 redundant-thinking, then the overall judgment.
struct JudgeScorecard {
  int over_thinking = 0;
  int under_thinking = 0;
  int disordered_thinking = 0;
  int redundant_thinking = 0;
  int overall = 0;

  bool operator==(const JudgeScorecard&) const = default;
};

struct AggregateScore {
  double over_mean = 0.0, under_mean = 0.0, disordered_mean = 0.0, redundant_mean = 0.0,
         overall_mean = 0.0;
  double over_scaled = 0.0, under_scaled = 0.0, disordered_scaled = 0.0, redundant_scaled = 0.0,
         overall_scaled = 0.0;  // mean * 20, so 5 maps to 100
  int sample_count = 0;
};

/// The judging instruction with the passage substituted verbatim at the end.
/// Throws PreconditionViolation on an empty passage.
std::string build_judge_prompt(const std::string& passage);

/// Renders a scorecard in the reply format the prompt demands.
std::string render_judgment(const JudgeScorecard& card);

/// Extracts the five labeled lines from the last fenced block (or the whole
/// text when no block exists). Each value must be a single digit; digits
/// outside [1, 5] raise OutOfRange, anything else MalformedResponse.
JudgeScorecard parse_judgment(const std::string& text);

/// Arithmetic means per aspect, scaled to the 100-point scale. Throws
/// EmptyInput on an empty list; permutation-invariant.
AggregateScore aggregate(const std::vector<JudgeScorecard>& cards);

class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  virtual std::string name() const = 0;
  virtual std::string respond(const std::string& prompt) = 0;
};

/// build -> send -> parse, retrying malformed or out-of-range replies up to
/// `max_retries` more times; the final failure carries the raw last reply.
/// When raw_response is non-null it receives the accepted reply.
JudgeScorecard judge_passage(const std::string& passage, JudgeBackend& backend,
                             int max_retries = 2, std::string* raw_response = nullptr);

/// Deterministic scorecards keyed on a passage hash; can be told to emit a
/// number of malformed replies first.
class MockJudge : public JudgeBackend {
 public:
  std::string name() const override { return "mock"; }
  std::string respond(const std::string& prompt) override;

  void emit_malformed_first(int count) { malformed_remaining_ = count; }

  static JudgeScorecard card_for(const std::string& passage);

 private:
  int malformed_remaining_ = 0;
};

uint64_t fnv1a_hash(const std::string& text);

/// One persisted record per judged passage.
struct ScorecardRecord {
  std::string passage_id;
  JudgeScorecard card;
  std::string raw_response_digest;  // fnv1a hex of the raw judge reply
};

void write_scorecards(const std::filesystem::path& path,
                      const std::vector<ScorecardRecord>& records);
std::vector<ScorecardRecord> read_scorecards(const std::filesystem::path& path);

}  // namespace selfrw
