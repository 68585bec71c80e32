#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "selfrw/config.hpp"
#include "selfrw/grpo.hpp"
#include "selfrw/judge.hpp"
#include "selfrw/rollout.hpp"

namespace selfrw {

/// One record per optimization step. Everything but wall_time_ms is
/// deterministic under a fixed seed and goes to steps.jsonl; the wall time
/// goes to a timing sidecar so step logs stay byte-comparable across runs.
struct StepLogRecord {
  int64_t step = 0;
  std::vector<std::string> gates;
  std::vector<std::vector<int>> raw_rewards;
  std::vector<std::vector<int>> shaped_rewards;
  double advantage_mean = 0.0;
  double advantage_std = 0.0;
  double objective = 0.0;
  double gradient_norm = 0.0;  // pre-clip L2
  int64_t vanilla_tokens = 0;
  int64_t rewritten_tokens = 0;
  int failures = 0;
  double wall_time_ms = 0.0;
};

std::string step_record_json(const StepLogRecord& record);

struct TrainOptions {
  /// Stop after completing this many steps (simulates a kill for the
  /// resumability checks). The run resumes from the last checkpoint.
  std::optional<int64_t> stop_after_step;
};

/// Builds the backend named by the config. Toy and toy+dedup backends are
/// trainable; scripted and external ones serve evaluation only.
std::unique_ptr<PolicyBackend> make_backend(const RunConfig& config);

/// Loads the config's task set (synthetic or external file).
std::vector<TaskInstance> load_tasks(const RunConfig& config);

/// Runs (or resumes) training into config.output_dir: per step, a batch of
/// grouped rollouts, reward shaping, advantage normalization, one optimizer
/// step, and an appended step record. Periodic and final checkpoints make
/// the run resumable; all randomness derives functionally from
/// (seed, step, query, slot), so a resumed run replays identically.
/// Returns the run directory.
std::filesystem::path train(const RunConfig& config, const TrainOptions& options = {});

/// Reference implementation of plain GRPO (no gate, no rewriting, raw
/// correctness rewards) writing the same artifacts. Training with the Never
/// gate must match it byte-for-byte.
std::filesystem::path train_vanilla_grpo_reference(const RunConfig& config,
                                                   const TrainOptions& options = {});

struct EvalSummary {
  double accuracy = 0.0;  // pass@1 averaged over runs
  std::vector<double> per_run_accuracy;
  double mean_reasoning_tokens = 0.0;
  std::optional<AggregateScore> judge;
  int64_t sample_count = 0;
  int64_t no_box_failures = 0;
};

/// pass@1 over `runs` seeded samplings plus reasoning-length and optional
/// judge metrics. Per-sample seeds derive from (eval_seed, first_run_index
/// + r, task index), so runs=4 decomposes into four runs=1 evaluations.
EvalSummary evaluate(PolicyBackend& backend, const std::vector<TaskInstance>& tasks,
                     const SamplingParams& eval_params, int runs, uint64_t eval_seed,
                     int first_run_index = 0, JudgeBackend* judge = nullptr);

void write_eval_summary(const std::filesystem::path& eval_dir, const EvalSummary& summary);
EvalSummary read_eval_summary(const std::filesystem::path& eval_dir);

}  // namespace selfrw
