#include "selfrw/task_env.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "selfrw/errors.hpp"
#include "selfrw/rng.hpp"

namespace selfrw {

namespace {

constexpr int kModulus = 97;

std::string format_task_id(uint64_t seed, int difficulty, int index) {
  std::ostringstream os;
  os << "syn-s" << seed << "-d" << difficulty << "-i" << index;
  return os.str();
}

}  // namespace

const char* const kAnswerFormatInstruction = "Put your final answer within \\boxed{}.";

std::string build_generation_prompt(const std::string& query) {
  return std::string("Solve the following math problem. ") + kAnswerFormatInstruction + "\n\n" +
         query;
}

std::vector<TaskInstance> generate_task_set(uint64_t seed, int count, int difficulty) {
  if (count < 1) throw Error(ErrorKind::PreconditionViolation, "count must be >= 1");
  if (difficulty < 0) throw Error(ErrorKind::PreconditionViolation, "difficulty must be >= 0");

  std::vector<TaskInstance> tasks;
  tasks.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(difficulty), static_cast<uint64_t>(i)));
    TaskInstance task;
    task.task_id = format_task_id(seed, difficulty, i);
    task.difficulty = difficulty;

    if (difficulty == 0) {
      // Single-literal question. Values stay in [0, 9] so the query's
      // trailing token is the gold answer itself, which keeps the task
      // solvable for low-order toy policies.
      int value = static_cast<int>(rng.next_below(10));
      task.prompt_text = build_generation_prompt("Compute " + std::to_string(value));
      task.gold_answer = std::to_string(value);
    } else {
      // Left-nested chain of `difficulty` operations, single-digit
      // operands, value tracked mod 97.
      int value = 2 + static_cast<int>(rng.next_below(8));
      std::string expr = std::to_string(value);
      for (int op = 0; op < difficulty; ++op) {
        int operand = 2 + static_cast<int>(rng.next_below(8));
        int which = static_cast<int>(rng.next_below(3));
        expr = "(" + expr;
        switch (which) {
          case 0:
            expr += " + ";
            value = (value + operand) % kModulus;
            break;
          case 1:
            expr += " - ";
            value = ((value - operand) % kModulus + kModulus) % kModulus;
            break;
          default:
            expr += " * ";
            value = (value * operand) % kModulus;
            break;
        }
        expr += std::to_string(operand) + ")";
      }
      task.prompt_text = build_generation_prompt("Compute " + expr + " mod 97");
      task.gold_answer = std::to_string(value);
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::optional<std::string> extract_boxed(const std::string& text) {
  static const std::string kOpen = "\\boxed{";
  std::optional<std::string> last;
  size_t pos = 0;
  while ((pos = text.find(kOpen, pos)) != std::string::npos) {
    size_t start = pos + kOpen.size();
    int depth = 1;
    size_t i = start;
    for (; i < text.size(); ++i) {
      if (text[i] == '{') {
        ++depth;
      } else if (text[i] == '}') {
        if (--depth == 0) break;
      }
    }
    if (depth == 0) last = text.substr(start, i - start);
    pos += kOpen.size();
  }
  return last;
}

std::string canonicalize_answer(const std::string& answer) {
  size_t begin = 0;
  size_t end = answer.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(answer[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(answer[end - 1]))) --end;
  std::string trimmed = answer.substr(begin, end - begin);

  size_t i = 0;
  bool negative = false;
  if (i < trimmed.size() && (trimmed[i] == '+' || trimmed[i] == '-')) {
    negative = trimmed[i] == '-';
    ++i;
  }
  if (i >= trimmed.size()) return trimmed;
  for (size_t j = i; j < trimmed.size(); ++j) {
    if (!std::isdigit(static_cast<unsigned char>(trimmed[j]))) return trimmed;
  }
  while (i + 1 < trimmed.size() && trimmed[i] == '0') ++i;
  std::string digits = trimmed.substr(i);
  if (digits == "0") return digits;
  return negative ? "-" + digits : digits;
}

VerifierOutcome verify(const TaskInstance& task, const std::string& answer_text) {
  VerifierOutcome outcome;
  std::optional<std::string> boxed = extract_boxed(answer_text);
  if (!boxed.has_value()) {
    outcome.failure_kind = FailureKind::NoBoxedAnswer;
    return outcome;
  }
  outcome.parsed_answer = canonicalize_answer(*boxed);
  if (*outcome.parsed_answer == canonicalize_answer(task.gold_answer)) {
    outcome.correct = true;
  } else {
    outcome.failure_kind = FailureKind::Mismatch;
  }
  return outcome;
}

std::vector<TaskInstance> load_task_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open task file: " + path.string());

  std::vector<TaskInstance> tasks;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ConfigInvalid,
                  "task file line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!record.is_object() || record.size() != 3 || !record.contains("task_id") ||
        !record.contains("prompt_text") || !record.contains("gold_answer")) {
      throw Error(ErrorKind::ConfigInvalid,
                  "task file line " + std::to_string(line_no) +
                      ": expected exactly {task_id, prompt_text, gold_answer}");
    }
    TaskInstance task;
    task.task_id = record.at("task_id").get<std::string>();
    task.prompt_text = record.at("prompt_text").get<std::string>();
    task.gold_answer = record.at("gold_answer").get<std::string>();
    if (task.gold_answer.empty()) {
      throw Error(ErrorKind::ConfigInvalid,
                  "task file line " + std::to_string(line_no) + ": empty gold_answer");
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

void save_task_file(const std::filesystem::path& path, const std::vector<TaskInstance>& tasks) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write task file: " + path.string());
  for (const TaskInstance& task : tasks) {
    nlohmann::json record;
    record["task_id"] = task.task_id;
    record["prompt_text"] = task.prompt_text;
    record["gold_answer"] = task.gold_answer;
    out << record.dump() << "\n";
  }
}

}  // namespace selfrw
