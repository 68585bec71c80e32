#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "selfrw/analysis.hpp"
#include "selfrw/client.hpp"
#include "selfrw/config.hpp"
#include "selfrw/errors.hpp"
#include "selfrw/grpo.hpp"
#include "selfrw/judge.hpp"
#include "selfrw/runner.hpp"

namespace fs = std::filesystem;
using namespace selfrw;

namespace {

/// "synthetic:seed=7,count=100,difficulty=2" or a task-file path.
std::vector<TaskInstance> tasks_from_source(const std::string& source) {
  if (source.rfind("synthetic", 0) != 0) return load_task_file(source);
  uint64_t seed = 0;
  int count = 64;
  int difficulty = 0;
  size_t colon = source.find(':');
  if (colon != std::string::npos) {
    std::stringstream ss(source.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      size_t eq = item.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorKind::ConfigInvalid, "bad task source item: " + item);
      }
      std::string key = item.substr(0, eq);
      std::string value = item.substr(eq + 1);
      if (key == "seed") {
        seed = std::stoull(value);
      } else if (key == "count") {
        count = std::stoi(value);
      } else if (key == "difficulty") {
        difficulty = std::stoi(value);
      } else {
        throw Error(ErrorKind::ConfigInvalid, "unknown task source key: " + key);
      }
    }
  }
  return generate_task_set(seed, count, difficulty);
}

std::unique_ptr<JudgeBackend> make_judge(const RunConfig& config) {
  if (config.judge_kind == "external") {
    return std::make_unique<ExternalJudge>(config.judge_endpoint);
  }
  if (config.judge_kind == "mock") return std::make_unique<MockJudge>();
  return nullptr;
}

int cmd_train(const std::string& config_path) {
  RunConfig config = load_config_file(config_path);
  fs::path run_dir = train(config);
  std::cout << "trained " << config.train_steps << " steps into " << run_dir.string() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& tasks_source, int runs,
                 const std::string& config_path, const std::string& out_dir) {
  RunConfig config;
  if (!config_path.empty()) config = load_config_file(config_path);

  Checkpoint checkpoint = load_checkpoint(checkpoint_path);
  ToyPolicyBackend backend(std::move(checkpoint.params));
  std::vector<TaskInstance> tasks = tasks_from_source(tasks_source);
  std::unique_ptr<JudgeBackend> judge = make_judge(config);

  EvalSummary summary = evaluate(backend, tasks, config.eval_params, runs, config.eval_seed,
                                 /*first_run_index=*/0, judge.get());
  std::cout << "accuracy " << summary.accuracy << "\n";
  std::cout << "mean_reasoning_tokens " << summary.mean_reasoning_tokens << "\n";
  if (summary.judge) std::cout << "judge_overall_scaled " << summary.judge->overall_scaled << "\n";
  if (!out_dir.empty()) {
    write_eval_summary(fs::path(out_dir), summary);
    std::cout << "wrote " << out_dir << "/summary.csv\n";
  }
  return 0;
}

int cmd_judge(const std::string& input_path, const std::string& config_path,
              const std::string& out_path) {
  RunConfig config;
  if (!config_path.empty()) config = load_config_file(config_path);
  std::unique_ptr<JudgeBackend> judge = make_judge(config);
  if (judge == nullptr) throw Error(ErrorKind::ConfigInvalid, "judge.kind=off leaves nothing to do");

  std::ifstream in(input_path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + input_path);
  std::vector<ScorecardRecord> records;
  std::vector<JudgeScorecard> cards;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json parsed = nlohmann::json::parse(line);
    std::string passage = parsed.at("passage").get<std::string>();
    std::string id = parsed.value("passage_id", "passage-" + std::to_string(line_no));
    std::string raw;
    JudgeScorecard card = judge_passage(passage, *judge, config.judge_retries, &raw);
    char digest[32];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(raw)));
    records.push_back({id, card, digest});
    cards.push_back(card);
  }
  if (cards.empty()) throw Error(ErrorKind::EmptyInput, "no passages in " + input_path);

  std::string scorecards_path = out_path.empty() ? input_path + ".scorecards.jsonl" : out_path;
  write_scorecards(scorecards_path, records);
  AggregateScore agg = aggregate(cards);
  std::cout << "judged " << agg.sample_count << " passages -> " << scorecards_path << "\n";
  std::cout << "over,under,redundant,disordered,overall\n";
  std::cout << agg.over_scaled << "," << agg.under_scaled << "," << agg.redundant_scaled << ","
            << agg.disordered_scaled << "," << agg.overall_scaled << "\n";
  return 0;
}

int cmd_analyze(const std::string& run_dir) {
  analyze_run(run_dir);
  std::cout << "wrote " << run_dir << "/analysis\n";
  return 0;
}

int cmd_report(const std::string& run_dir, const std::string& reference_dir) {
  write_report(run_dir, reference_dir);
  std::cout << "wrote " << run_dir << "/report\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-rewriting group-relative policy trainer and evaluator"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train_cmd = app.add_subcommand("train", "Run or resume a training run");
  train_cmd->add_option("--config", config_path, "run configuration file")->required();

  std::string checkpoint_path, tasks_source = "synthetic:seed=7,count=64,difficulty=0";
  std::string eval_config, eval_out;
  int runs = 4;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a task set");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval_cmd->add_option("--tasks", tasks_source,
                       "task source: a file path or synthetic:seed=..,count=..,difficulty=..");
  eval_cmd->add_option("--runs", runs, "number of seeded pass@1 runs");
  eval_cmd->add_option("--config", eval_config, "optional run configuration for eval settings");
  eval_cmd->add_option("--out", eval_out, "directory for summary.csv / per_run.csv");

  std::string judge_input, judge_config, judge_out;
  auto* judge_cmd = app.add_subcommand("judge", "Score reasoning passages from a responses file");
  judge_cmd->add_option("--input", judge_input, "jsonl with {passage_id, passage} per line")
      ->required();
  judge_cmd->add_option("--config", judge_config, "optional run configuration (judge section)");
  judge_cmd->add_option("--out", judge_out, "output scorecards path");

  std::string analyze_dir;
  auto* analyze_cmd = app.add_subcommand("analyze", "Length-ratio and KDE analysis of a run");
  analyze_cmd->add_option("--run", analyze_dir, "run directory")->required();

  std::string report_dir, reference_dir;
  auto* report_cmd = app.add_subcommand("report", "Comparison tables against a reference run");
  report_cmd->add_option("--run", report_dir, "run directory")->required();
  report_cmd->add_option("--reference", reference_dir, "reference run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(config_path);
    if (eval_cmd->parsed()) {
      return cmd_evaluate(checkpoint_path, tasks_source, runs, eval_config, eval_out);
    }
    if (judge_cmd->parsed()) return cmd_judge(judge_input, judge_config, judge_out);
    if (analyze_cmd->parsed()) return cmd_analyze(analyze_dir);
    if (report_cmd->parsed()) return cmd_report(report_dir, reference_dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
