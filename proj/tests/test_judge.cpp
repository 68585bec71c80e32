#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <vector>

#include "selfrw/errors.hpp"
#include "selfrw/judge.hpp"

using namespace selfrw;

namespace {

ErrorKind thrown_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::PreconditionViolation;
}

}  // namespace

TEST_CASE("judge prompt carries the rubric and the passage") {
  std::string prompt = build_judge_prompt("a short thought");
  for (const char* flaw :
       {"**Over-Thinking**", "**Under-Thinking**", "**Disordered-Thinking**",
        "**Redundant-Thinking**"}) {
    size_t first = prompt.find(flaw);
    REQUIRE(first != std::string::npos);
    CHECK(prompt.find(flaw, first + 1) == std::string::npos);
  }
  std::string format_block =
      "Aspect 1: [Your judgment]\n"
      "Aspect 2: [Your judgment]\n"
      "Aspect 3: [Your judgment]\n"
      "Aspect 4: [Your judgment]\n"
      "Overall: [Your judgment]";
  size_t first = prompt.find(format_block);
  REQUIRE(first != std::string::npos);
  CHECK(prompt.find(format_block, first + 1) == std::string::npos);
  CHECK(prompt.rfind("a short thought") == prompt.size() - std::string("a short thought").size());

  SUBCASE("backtick fences pass through verbatim") {
    std::string fenced = "thinking with ```code``` inside";
    CHECK(build_judge_prompt(fenced).find(fenced) != std::string::npos);
  }
  SUBCASE("an empty passage violates the precondition") {
    CHECK_THROWS_AS(build_judge_prompt(""), Error);
  }
}

TEST_CASE("parse_judgment reads the labeled block") {
  JudgeScorecard card =
      parse_judgment("Aspect 1: 4\nAspect 2: 4\nAspect 3: 3\nAspect 4: 5\nOverall: 4");
  CHECK(card.over_thinking == 4);
  CHECK(card.under_thinking == 4);
  CHECK(card.disordered_thinking == 3);
  CHECK(card.redundant_thinking == 5);
  CHECK(card.overall == 4);

  SUBCASE("a missing line is malformed") {
    CHECK(thrown_kind([] {
            parse_judgment("Aspect 1: 4\nAspect 2: 4\nAspect 3: 3\nAspect 4: 5");
          }) == ErrorKind::MalformedResponse);
  }
  SUBCASE("a digit outside one to five is out of range") {
    CHECK(thrown_kind([] {
            parse_judgment("Aspect 1: 7 ...\nAspect 2: 4\nAspect 3: 3\nAspect 4: 5\nOverall: 4");
          }) == ErrorKind::OutOfRange);
    CHECK(thrown_kind([] {
            parse_judgment("Aspect 1: 0\nAspect 2: 4\nAspect 3: 3\nAspect 4: 5\nOverall: 4");
          }) == ErrorKind::OutOfRange);
  }
  SUBCASE("a multi-digit value is malformed") {
    CHECK(thrown_kind([] {
            parse_judgment("Aspect 1: 42\nAspect 2: 4\nAspect 3: 3\nAspect 4: 5\nOverall: 4");
          }) == ErrorKind::MalformedResponse);
  }
  SUBCASE("the last fenced block wins") {
    std::string text =
        "```\nAspect 1: 1\nAspect 2: 1\nAspect 3: 1\nAspect 4: 1\nOverall: 1\n```\n"
        "revised judgment:\n"
        "```\nAspect 1: 5\nAspect 2: 5\nAspect 3: 5\nAspect 4: 5\nOverall: 5\n```";
    CHECK(parse_judgment(text).overall == 5);
  }
  SUBCASE("chatter around a fenced block is ignored") {
    std::string text =
        "Sure! Aspect 1: 9 as requested... just kidding:\n"
        "```\nAspect 1: 2\nAspect 2: 3\nAspect 3: 4\nAspect 4: 5\nOverall: 3\n```\nthanks";
    JudgeScorecard card2 = parse_judgment(text);
    CHECK(card2.over_thinking == 2);
    CHECK(card2.overall == 3);
  }
}

TEST_CASE("render and parse round trip every scorecard") {
  for (int over = 1; over <= 5; ++over) {
    for (int under = 1; under <= 5; ++under) {
      for (int disordered = 1; disordered <= 5; ++disordered) {
        for (int redundant = 1; redundant <= 5; ++redundant) {
          for (int overall = 1; overall <= 5; ++overall) {
            JudgeScorecard card{over, under, disordered, redundant, overall};
            CHECK(parse_judgment(render_judgment(card)) == card);
          }
        }
      }
    }
  }
}

TEST_CASE("aggregation scales means onto the hundred-point scale") {
  JudgeScorecard four{4, 4, 4, 4, 4};
  AggregateScore two_fours = aggregate({four, four});
  CHECK(two_fours.overall_mean == doctest::Approx(4.0));
  CHECK(two_fours.overall_scaled == doctest::Approx(80.0));
  CHECK(two_fours.sample_count == 2);

  std::vector<JudgeScorecard> ladder;
  for (int v = 1; v <= 5; ++v) ladder.push_back({v, v, v, v, v});
  AggregateScore spread = aggregate(ladder);
  CHECK(spread.overall_mean == doctest::Approx(3.0));
  CHECK(spread.overall_scaled == doctest::Approx(60.0));

  JudgeScorecard perfect{5, 5, 5, 5, 5};
  AggregateScore best = aggregate({perfect});
  CHECK(best.over_scaled == doctest::Approx(100.0));
  CHECK(best.under_scaled == doctest::Approx(100.0));
  CHECK(best.disordered_scaled == doctest::Approx(100.0));
  CHECK(best.redundant_scaled == doctest::Approx(100.0));
  CHECK(best.overall_scaled == doctest::Approx(100.0));

  CHECK_THROWS_AS(aggregate({}), Error);
}

TEST_CASE("aggregation is permutation-invariant and bounded") {
  std::vector<JudgeScorecard> cards = {{1, 2, 3, 4, 5}, {5, 4, 3, 2, 1}, {2, 2, 2, 2, 2}};
  AggregateScore forward = aggregate(cards);
  std::reverse(cards.begin(), cards.end());
  AggregateScore backward = aggregate(cards);
  CHECK(forward.over_scaled == backward.over_scaled);
  CHECK(forward.overall_scaled == backward.overall_scaled);
  for (double scaled : {forward.over_scaled, forward.under_scaled, forward.disordered_scaled,
                        forward.redundant_scaled, forward.overall_scaled}) {
    CHECK(scaled >= 20.0);
    CHECK(scaled <= 100.0);
  }
}

TEST_CASE("judge_passage retries malformed replies") {
  MockJudge judge;
  SUBCASE("deterministic scorecards per passage") {
    JudgeScorecard a = judge_passage("some reasoning", judge);
    JudgeScorecard b = judge_passage("some reasoning", judge);
    CHECK(a == b);
    CHECK(a == MockJudge::card_for("some reasoning"));
  }
  SUBCASE("one malformed reply then success with a single retry") {
    judge.emit_malformed_first(1);
    CHECK_NOTHROW(judge_passage("text", judge, 1));
  }
  SUBCASE("exhausted retries carry the raw reply") {
    judge.emit_malformed_first(10);
    try {
      judge_passage("text", judge, 2);
      FAIL("expected malformed_after_retries");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MalformedAfterRetries);
      CHECK(e.detail().find("I cannot score this passage.") != std::string::npos);
    }
  }
}

TEST_CASE("scorecard records persist one line per passage") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "selfrw_scorecards_test.jsonl";
  std::vector<ScorecardRecord> records = {
      {"p1", {1, 2, 3, 4, 5}, "00000000deadbeef"},
      {"p2", {5, 4, 3, 2, 1}, "1234567812345678"},
  };
  write_scorecards(path, records);
  auto loaded = read_scorecards(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].passage_id == "p1");
  CHECK(loaded[0].card == records[0].card);
  CHECK(loaded[1].raw_response_digest == "1234567812345678");
  fs::remove(path);
}
