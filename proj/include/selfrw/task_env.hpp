#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace selfrw {

/// A verifiable query. Synthetic tasks are modular-arithmetic chains over
/// Z/97; external tasks come from a newline-delimited record file.
struct TaskInstance {
  std::string task_id;
  std::string prompt_text;  // full user prompt, includes the answer-format instruction
  std::string gold_answer;
  int difficulty = 0;  // chain length for synthetic tasks, 0 for external ones
};

enum class FailureKind { None, NoBoxedAnswer, Mismatch };

struct VerifierOutcome {
  bool correct = false;
  std::optional<std::string> parsed_answer;
  FailureKind failure_kind = FailureKind::None;
};

/// The instruction sentence every prompt carries exactly once.
extern const char* const kAnswerFormatInstruction;

/// Builds the full user prompt for a query.
std::string build_generation_prompt(const std::string& query);

/// Deterministic synthetic task generation. Pure in (seed, count, difficulty):
/// repeated calls yield byte-identical instances. difficulty 0 produces a
/// single-literal question (value in [0, 9]); difficulty n >= 1 produces a
/// left-nested chain of n operations whose gold answer is the chain value
/// mod 97.
std::vector<TaskInstance> generate_task_set(uint64_t seed, int count, int difficulty);

/// Contents of the last balanced \boxed{...} in the text; nested braces are
/// honored. Absence is a value, not an error.
std::optional<std::string> extract_boxed(const std::string& text);

/// Trim whitespace and strip leading zeros from integer strings ("007" ->
/// "7", "-0" -> "0"). Non-integer strings are returned trimmed.
std::string canonicalize_answer(const std::string& answer);

/// The verifier R: correct iff a boxed answer exists and canonicalizes to
/// the gold answer. A response with no boxed answer (including one truncated
/// before emitting it) is incorrect with FailureKind::NoBoxedAnswer.
VerifierOutcome verify(const TaskInstance& task, const std::string& answer_text);

/// Loads external tasks: one JSON object per line with exactly the fields
/// {task_id, prompt_text, gold_answer}. Throws ConfigInvalid on any other
/// shape, IoError when the file cannot be read.
std::vector<TaskInstance> load_task_file(const std::filesystem::path& path);

/// Writes tasks in the same one-record-per-line format.
void save_task_file(const std::filesystem::path& path, const std::vector<TaskInstance>& tasks);

}  // namespace selfrw
