#pragma once

#include <filesystem>
#include <string>

#include "selfrw/client.hpp"
#include "selfrw/grpo.hpp"
#include "selfrw/rollout.hpp"

namespace selfrw {

/// Full run configuration. Serialized as flat `section.key = value` lines in
/// a fixed canonical order, so serialize(parse(serialize(c))) is byte-stable.
struct RunConfig {
  // run
  uint64_t seed = 0;
  std::string output_dir = "runs/default";

  // task source
  std::string task_source = "synthetic";  // synthetic | file
  uint64_t task_seed = 0;
  int task_count = 64;
  int task_difficulty = 0;
  std::string task_file;

  // backend
  std::string backend_kind = "toy";  // toy | scripted | external
  int context_order = 2;
  std::string policy_init = "zeros";  // zeros | echo
  std::string rewriter = "policy";    // policy | dedup
  EndpointConfig backend_endpoint;

  // gate
  GatePolicy gate;

  // training
  HyperParams hp;
  int train_steps = 100;
  int checkpoint_every = 50;

  // per-phase sampling
  SamplingParams sample_params = SamplingParams::sampling_defaults();
  SamplingParams rewrite_params = SamplingParams::rewrite_defaults();
  SamplingParams continue_params = SamplingParams::rewrite_defaults();
  SamplingParams eval_params = SamplingParams::rewrite_defaults();

  // judge
  std::string judge_kind = "mock";  // mock | external | off
  int judge_retries = 2;
  EndpointConfig judge_endpoint;

  // evaluation
  int eval_runs = 4;
  uint64_t eval_seed = 0;

  void validate() const;
  RolloutParams rollout_params() const;
};

std::string serialize_config(const RunConfig& config);
RunConfig parse_config(const std::string& text);

RunConfig load_config_file(const std::filesystem::path& path);
void save_config_file(const std::filesystem::path& path, const RunConfig& config);

}  // namespace selfrw
