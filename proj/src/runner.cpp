#include "selfrw/runner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "selfrw/analysis.hpp"
#include "selfrw/errors.hpp"
#include "selfrw/num_text.hpp"
#include "selfrw/rng.hpp"

namespace selfrw {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kArtifactVersion = 1;

/// Advisory single-writer lock on a run directory.
class RunLock {
 public:
  explicit RunLock(const fs::path& run_dir) : path_(run_dir / ".train.lock") {
    if (fs::exists(path_)) {
      throw Error(ErrorKind::IoError,
                  "run directory is locked by another trainer (remove " + path_.string() +
                      " if that trainer is gone)");
    }
    std::ofstream out(path_);
    if (!out) throw Error(ErrorKind::IoError, "cannot create lock file: " + path_.string());
    out << "selfrw trainer\n";
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

fs::path checkpoint_path(const fs::path& run_dir, int64_t step) {
  std::ostringstream name;
  name << "step_" << std::setw(6) << std::setfill('0') << step << ".ckpt";
  return run_dir / "checkpoints" / name.str();
}

std::optional<int64_t> latest_checkpoint_step(const fs::path& run_dir) {
  fs::path dir = run_dir / "checkpoints";
  if (!fs::exists(dir)) return std::nullopt;
  std::optional<int64_t> best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("step_", 0) != 0 || entry.path().extension() != ".ckpt") continue;
    int64_t step = parse_int(name.substr(5, name.size() - 5 - 5));
    if (!best || step > *best) best = step;
  }
  return best;
}

void truncate_jsonl(const fs::path& path, int64_t keep_lines) {
  if (!fs::exists(path)) return;
  std::vector<std::string> lines;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  }
  if (static_cast<int64_t>(lines.size()) <= keep_lines) return;
  std::ofstream out(path, std::ios::trunc);
  for (int64_t i = 0; i < keep_lines; ++i) out << lines[static_cast<size_t>(i)] << "\n";
}

std::vector<TaskInstance> batch_tasks(const std::vector<TaskInstance>& tasks, int64_t step,
                                      int batch_size) {
  std::vector<TaskInstance> batch;
  batch.reserve(static_cast<size_t>(batch_size));
  for (int j = 0; j < batch_size; ++j) {
    int64_t global = step * batch_size + j;
    batch.push_back(tasks[static_cast<size_t>(global % static_cast<int64_t>(tasks.size()))]);
  }
  return batch;
}

struct StepComputation {
  StepLogRecord record;
  std::vector<GroupLengths> lengths;
  PolicyParameters theta;
  OptimizerState opt;
};

double l2_norm(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return std::sqrt(sum);
}

/// Shared tail of a training step once rollouts exist: shaping,
/// normalization, objective, gradient, optimizer update, bookkeeping.
void finish_step(const RunConfig& config, const std::vector<GroupRollout>& groups, int64_t step,
                 PolicyParameters& theta, OptimizerState& opt, StepLogRecord& record,
                 std::vector<GroupLengths>& lengths) {
  record.step = step;
  std::vector<TrainSample> batch;
  std::vector<double> advantages_flat;
  for (const GroupRollout& group : groups) {
    record.gates.emplace_back(to_string(group.gate_decision));
    record.failures += group.failed_requests;

    RewardVector raw;
    for (const RolloutSample& sample : group.samples) {
      raw.values.push_back(sample.correctness.correct ? 1 : 0);
      raw.rewritten.push_back(sample.provenance.rewritten);
    }
    RewardVector shaped = shape_rewards(raw);
    record.raw_rewards.push_back(raw.values);
    record.shaped_rewards.push_back(shaped.values);

    std::vector<double> shaped_real(shaped.values.begin(), shaped.values.end());
    AdvantageVector adv =
        compute_advantages(shaped_real, group.gate_decision == GateDecision::Rewrite,
                           config.hp.rewrite_advantage_scale);
    advantages_flat.insert(advantages_flat.end(), adv.values.begin(), adv.values.end());

    for (const RolloutSample& sample : group.samples) {
      if (sample.request_failed) continue;
      int64_t tokens = static_cast<int64_t>(sample.reasoning_gen.token_ids.size());
      if (sample.continuation_gen) {
        tokens += static_cast<int64_t>(sample.continuation_gen->token_ids.size());
      }
      (sample.provenance.rewritten ? record.rewritten_tokens : record.vanilla_tokens) += tokens;
    }

    std::vector<TrainSample> samples = make_train_samples(group, adv);
    batch.insert(batch.end(), std::make_move_iterator(samples.begin()),
                 std::make_move_iterator(samples.end()));
    lengths.push_back(group_lengths(group));
  }

  if (!advantages_flat.empty()) {
    double mean = 0.0;
    for (double a : advantages_flat) mean += a;
    mean /= static_cast<double>(advantages_flat.size());
    double var = 0.0;
    for (double a : advantages_flat) var += (a - mean) * (a - mean);
    var /= static_cast<double>(advantages_flat.size());
    record.advantage_mean = mean;
    record.advantage_std = std::sqrt(var);
  }

  std::vector<double> gradient(theta.parameter_count(), 0.0);
  if (!batch.empty()) {
    record.objective = surrogate_objective(theta, batch, config.hp);
    gradient = objective_gradient(theta, batch, config.hp);
  }
  record.gradient_norm = l2_norm(gradient);
  optimizer_step(opt, theta, gradient, config.hp);
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorKind::IoError, "cannot append to " + path.string());
  out << line << "\n";
}

/// Runs the shared training scaffolding (directories, lock, resume,
/// logging, checkpoints) around a per-step rollout function.
template <typename RolloutFn>
fs::path train_loop(const RunConfig& config, const TrainOptions& options, RolloutFn&& rollouts_for,
                    PolicyParameters initial_theta, PolicyBackend& backend) {
  config.validate();
  fs::path run_dir(config.output_dir);
  fs::create_directories(run_dir / "checkpoints");
  fs::create_directories(run_dir / "eval");
  fs::create_directories(run_dir / "analysis");

  std::string resolved = serialize_config(config);
  fs::path config_path = run_dir / "config.resolved";
  if (fs::exists(config_path)) {
    std::ifstream in(config_path);
    std::ostringstream existing;
    existing << in.rdbuf();
    if (existing.str() != resolved) {
      throw Error(ErrorKind::ConfigInvalid,
                  "run directory holds a different resolved config: " + config_path.string());
    }
  } else {
    std::ofstream out(config_path);
    out << resolved;
  }
  {
    json metadata;
    metadata["artifact_version"] = kArtifactVersion;
    metadata["objective_normalization"] = "token mean within each sample, sample mean across the batch";
    metadata["advantage_std"] = "population (divide by G)";
    std::ofstream out(run_dir / "metadata.json");
    out << metadata.dump(2) << "\n";
  }

  RunLock lock(run_dir);

  PolicyParameters theta = std::move(initial_theta);
  OptimizerState opt = OptimizerState::zeros(theta.parameter_count());
  int64_t start_step = 0;
  if (std::optional<int64_t> last = latest_checkpoint_step(run_dir)) {
    Checkpoint checkpoint = load_checkpoint(checkpoint_path(run_dir, *last));
    if (checkpoint.params.vocabulary_size != theta.vocabulary_size ||
        checkpoint.params.context_order != theta.context_order) {
      throw Error(ErrorKind::ConfigInvalid, "checkpoint dimensions do not match the config");
    }
    theta = std::move(checkpoint.params);
    opt = std::move(checkpoint.opt);
    start_step = checkpoint.step;
  }
  // Replayed steps are recomputed from the checkpoint; drop any log lines
  // past it.
  truncate_jsonl(run_dir / "steps.jsonl", start_step);
  truncate_jsonl(run_dir / "lengths.jsonl", start_step);

  auto* handle = dynamic_cast<TrainablePolicyHandle*>(&backend);
  if (handle == nullptr) {
    throw Error(ErrorKind::UnsupportedBackend, "training needs a trainable (toy) backend");
  }
  handle->set_trainable_params(theta);
  if (start_step == 0) {
    save_checkpoint(checkpoint_path(run_dir, 0), {theta, opt, 0});
  }

  for (int64_t step = start_step; step < config.train_steps; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<GroupRollout> groups = rollouts_for(step, backend);

    StepLogRecord record;
    std::vector<GroupLengths> lengths;
    finish_step(config, groups, step, theta, opt, record, lengths);
    handle->set_trainable_params(theta);

    record.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    append_line(run_dir / "steps.jsonl", step_record_json(record));
    write_group_lengths(run_dir / "lengths.jsonl", step, lengths, /*append=*/true);
    append_line(run_dir / "timing.log",
                "step " + std::to_string(step) + " wall_ms " + format_double(record.wall_time_ms));

    int64_t completed = step + 1;
    if (completed % config.checkpoint_every == 0 || completed == config.train_steps) {
      save_checkpoint(checkpoint_path(run_dir, completed), {theta, opt, completed});
    }
    if (options.stop_after_step && completed >= *options.stop_after_step &&
        completed < config.train_steps) {
      if (completed % config.checkpoint_every != 0) {
        save_checkpoint(checkpoint_path(run_dir, completed), {theta, opt, completed});
      }
      return run_dir;
    }
  }
  return run_dir;
}

}  // namespace

std::string step_record_json(const StepLogRecord& record) {
  json line;
  line["version"] = kArtifactVersion;
  line["step"] = record.step;
  line["gates"] = record.gates;
  line["raw_rewards"] = record.raw_rewards;
  line["shaped_rewards"] = record.shaped_rewards;
  line["advantage_mean"] = record.advantage_mean;
  line["advantage_std"] = record.advantage_std;
  line["objective"] = record.objective;
  line["gradient_norm"] = record.gradient_norm;
  line["vanilla_tokens"] = record.vanilla_tokens;
  line["rewritten_tokens"] = record.rewritten_tokens;
  line["failures"] = record.failures;
  return line.dump();
}

std::unique_ptr<PolicyBackend> make_backend(const RunConfig& config) {
  config.validate();
  if (config.backend_kind == "external") {
    return std::make_unique<ExternalBackend>(config.backend_endpoint);
  }
  if (config.backend_kind == "scripted") {
    auto backend = std::make_unique<ScriptedBackend>();
    backend->register_tasks(load_tasks(config));
    return backend;
  }
  PolicyParameters params = config.policy_init == "echo"
                                ? echo_warm_start(config.context_order)
                                : PolicyParameters::zeros(ToyVocabulary::kSize, config.context_order);
  if (config.rewriter == "dedup") {
    return std::make_unique<HybridRewriteBackend>(std::move(params), dedup_rewrite);
  }
  return std::make_unique<ToyPolicyBackend>(std::move(params));
}

std::vector<TaskInstance> load_tasks(const RunConfig& config) {
  std::vector<TaskInstance> tasks =
      config.task_source == "file"
          ? load_task_file(config.task_file)
          : generate_task_set(config.task_seed, config.task_count, config.task_difficulty);
  if (tasks.empty()) {
    throw Error(ErrorKind::ConfigInvalid, "the task source produced no tasks");
  }
  return tasks;
}

fs::path train(const RunConfig& config, const TrainOptions& options) {
  if (config.backend_kind != "toy") {
    throw Error(ErrorKind::ConfigInvalid, "training requires backend.kind = toy");
  }
  std::vector<TaskInstance> tasks = load_tasks(config);
  std::unique_ptr<PolicyBackend> backend = make_backend(config);
  auto* handle = dynamic_cast<TrainablePolicyHandle*>(backend.get());
  if (handle == nullptr) {
    throw Error(ErrorKind::UnsupportedBackend, "training requires a trainable backend");
  }
  PolicyParameters initial = handle->trainable_params();
  RolloutParams rollout_params = config.rollout_params();

  auto rollouts_for = [&](int64_t step, PolicyBackend& policy) {
    std::vector<TaskInstance> batch = batch_tasks(tasks, step, config.hp.batch_size);
    return run_batch(batch, policy, rollout_params, config.gate, config.seed,
                     step * config.hp.batch_size);
  };
  return train_loop(config, options, rollouts_for, std::move(initial), *backend);
}

fs::path train_vanilla_grpo_reference(const RunConfig& config, const TrainOptions& options) {
  if (config.backend_kind != "toy") {
    throw Error(ErrorKind::ConfigInvalid, "training requires backend.kind = toy");
  }
  std::vector<TaskInstance> tasks = load_tasks(config);
  std::unique_ptr<PolicyBackend> backend = make_backend(config);
  auto* handle = dynamic_cast<TrainablePolicyHandle*>(backend.get());
  if (handle == nullptr) {
    throw Error(ErrorKind::UnsupportedBackend, "training requires a trainable backend");
  }
  PolicyParameters initial = handle->trainable_params();
  RolloutParams rollout_params = config.rollout_params();

  // Plain GRPO: G vanilla samples per query, no gate consultation at all.
  auto rollouts_for = [&](int64_t step, PolicyBackend& policy) {
    std::vector<TaskInstance> batch = batch_tasks(tasks, step, config.hp.batch_size);
    std::vector<GroupRollout> groups;
    groups.reserve(batch.size());
    for (size_t q = 0; q < batch.size(); ++q) {
      int64_t query_index = step * config.hp.batch_size + static_cast<int64_t>(q);
      GroupRollout group;
      group.task = batch[q];
      group.gate_decision = GateDecision::Vanilla;
      for (int slot = 0; slot < rollout_params.group_size; ++slot) {
        GenerationRequest request;
        request.mode = GenerationMode::Generate;
        request.task_id = group.task.task_id;
        request.prompt_text = group.task.prompt_text;
        request.params = rollout_params.generate;
        request.params.seed =
            derive_request_seed(config.seed, query_index, slot, RequestPhase::Generate);
        request.query_index = static_cast<int>(query_index);
        request.slot_index = slot;

        RolloutSample sample;
        try {
          GenerationResult result = policy.run(request);
          sample.reasoning_text = result.reasoning_text;
          sample.answer_text = result.answer_text;
          sample.reasoning_gen = std::move(result);
        } catch (const Error&) {
          sample.request_failed = true;
          ++group.failed_requests;
        }
        sample.reasoning_token_count = policy.count_tokens(sample.reasoning_text);
        sample.correctness = verify(group.task, sample.answer_text);
        group.samples.push_back(std::move(sample));
      }
      groups.push_back(std::move(group));
    }
    return groups;
  };
  return train_loop(config, options, rollouts_for, std::move(initial), *backend);
}

EvalSummary evaluate(PolicyBackend& backend, const std::vector<TaskInstance>& tasks,
                     const SamplingParams& eval_params, int runs, uint64_t eval_seed,
                     int first_run_index, JudgeBackend* judge) {
  if (tasks.empty()) throw Error(ErrorKind::EmptyInput, "evaluate needs at least one task");
  if (runs < 1) throw Error(ErrorKind::PreconditionViolation, "runs must be >= 1");

  EvalSummary summary;
  std::vector<JudgeScorecard> cards;
  int64_t reasoning_tokens_total = 0;
  for (int r = 0; r < runs; ++r) {
    int run_index = first_run_index + r;
    int correct = 0;
    for (size_t i = 0; i < tasks.size(); ++i) {
      GenerationRequest request;
      request.mode = GenerationMode::Generate;
      request.task_id = tasks[i].task_id;
      request.prompt_text = tasks[i].prompt_text;
      request.params = eval_params;
      request.params.seed =
          mix_seed(eval_seed, static_cast<uint64_t>(run_index), static_cast<uint64_t>(i));
      GenerationResult result = backend.run(request);

      VerifierOutcome outcome = verify(tasks[i], result.answer_text);
      correct += outcome.correct ? 1 : 0;
      if (!outcome.correct && outcome.failure_kind == FailureKind::NoBoxedAnswer) {
        ++summary.no_box_failures;
      }
      reasoning_tokens_total += backend.count_tokens(result.reasoning_text);
      ++summary.sample_count;
      if (judge != nullptr && !result.reasoning_text.empty()) {
        cards.push_back(judge_passage(result.reasoning_text, *judge));
      }
    }
    summary.per_run_accuracy.push_back(static_cast<double>(correct) /
                                       static_cast<double>(tasks.size()));
  }
  for (double acc : summary.per_run_accuracy) summary.accuracy += acc;
  summary.accuracy /= static_cast<double>(runs);
  summary.mean_reasoning_tokens =
      summary.sample_count > 0
          ? static_cast<double>(reasoning_tokens_total) / static_cast<double>(summary.sample_count)
          : 0.0;
  if (!cards.empty()) summary.judge = aggregate(cards);
  return summary;
}

void write_eval_summary(const fs::path& eval_dir, const EvalSummary& summary) {
  fs::create_directories(eval_dir);
  {
    std::ofstream out(eval_dir / "summary.csv");
    if (!out) throw Error(ErrorKind::IoError, "cannot write eval summary");
    out << "accuracy,mean_reasoning_tokens,judge_over_scaled,judge_under_scaled,"
           "judge_redundant_scaled,judge_disordered_scaled,judge_overall_scaled,runs,samples,"
           "no_box_failures\n";
    const AggregateScore empty{};
    const AggregateScore& judge = summary.judge.value_or(empty);
    out << format_double(summary.accuracy) << "," << format_double(summary.mean_reasoning_tokens)
        << "," << format_double(judge.over_scaled) << "," << format_double(judge.under_scaled)
        << "," << format_double(judge.redundant_scaled) << ","
        << format_double(judge.disordered_scaled) << "," << format_double(judge.overall_scaled)
        << "," << summary.per_run_accuracy.size() << "," << summary.sample_count << ","
        << summary.no_box_failures << "\n";
  }
  {
    std::ofstream out(eval_dir / "per_run.csv");
    out << "run,accuracy\n";
    for (size_t r = 0; r < summary.per_run_accuracy.size(); ++r) {
      out << r << "," << format_double(summary.per_run_accuracy[r]) << "\n";
    }
  }
}

EvalSummary read_eval_summary(const fs::path& eval_dir) {
  std::ifstream in(eval_dir / "summary.csv");
  if (!in) {
    throw Error(ErrorKind::MissingInputs, "no eval summary under " + eval_dir.string());
  }
  std::string header, data;
  std::getline(in, header);
  std::getline(in, data);
  std::vector<std::string> fields;
  std::stringstream ss(data);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (fields.size() < 10) throw Error(ErrorKind::MissingInputs, "truncated eval summary");

  EvalSummary summary;
  summary.accuracy = parse_double(fields[0]);
  summary.mean_reasoning_tokens = parse_double(fields[1]);
  AggregateScore judge;
  judge.over_scaled = parse_double(fields[2]);
  judge.under_scaled = parse_double(fields[3]);
  judge.redundant_scaled = parse_double(fields[4]);
  judge.disordered_scaled = parse_double(fields[5]);
  judge.overall_scaled = parse_double(fields[6]);
  summary.sample_count = parse_int(fields[8]);
  summary.no_box_failures = parse_int(fields[9]);
  if (judge.overall_scaled > 0.0) summary.judge = judge;
  return summary;
}

}  // namespace selfrw
