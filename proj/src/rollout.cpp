#include "selfrw/rollout.hpp"

#include <algorithm>

#include "selfrw/errors.hpp"
#include "selfrw/rng.hpp"

namespace selfrw {

const char* to_string(GateKind kind) {
  switch (kind) {
    case GateKind::Selective:
      return "selective";
    case GateKind::Random:
      return "random";
    case GateKind::Never:
      return "never";
  }
  return "?";
}

const char* to_string(GateDecision decision) {
  return decision == GateDecision::Rewrite ? "rewrite" : "vanilla";
}

GateDecision gate(const std::vector<VerifierOutcome>& first_half, const GatePolicy& policy,
                  int64_t query_index) {
  switch (policy.kind) {
    case GateKind::Selective: {
      for (const VerifierOutcome& outcome : first_half) {
        if (!outcome.correct) return GateDecision::Vanilla;
      }
      return GateDecision::Rewrite;
    }
    case GateKind::Random: {
      Rng rng(mix_seed(policy.rng_seed, static_cast<uint64_t>(query_index)));
      return rng.next_unit() < policy.fraction ? GateDecision::Rewrite : GateDecision::Vanilla;
    }
    case GateKind::Never:
      return GateDecision::Vanilla;
  }
  return GateDecision::Vanilla;
}

uint64_t derive_request_seed(uint64_t run_seed, int64_t query_index, int slot_index,
                             RequestPhase phase) {
  return mix_seed(run_seed, static_cast<uint64_t>(query_index),
                  static_cast<uint64_t>(slot_index), static_cast<uint64_t>(phase));
}

namespace {

GenerationRequest make_generate_request(const TaskInstance& task, const RolloutParams& params,
                                        uint64_t run_seed, int64_t query_index, int slot) {
  GenerationRequest request;
  request.mode = GenerationMode::Generate;
  request.task_id = task.task_id;
  request.prompt_text = task.prompt_text;
  request.params = params.generate;
  request.params.seed = derive_request_seed(run_seed, query_index, slot, RequestPhase::Generate);
  request.query_index = static_cast<int>(query_index);
  request.slot_index = slot;
  return request;
}

GenerationRequest make_rewrite_request(const TaskInstance& task, const std::string& source,
                                       const RolloutParams& params, uint64_t run_seed,
                                       int64_t query_index, int slot) {
  GenerationRequest request;
  request.mode = GenerationMode::Rewrite;
  request.task_id = task.task_id;
  request.reasoning_text = source;
  request.params = params.rewrite;
  request.params.seed = derive_request_seed(run_seed, query_index, slot, RequestPhase::Rewrite);
  request.query_index = static_cast<int>(query_index);
  request.slot_index = slot;
  return request;
}

GenerationRequest make_continue_request(const TaskInstance& task, const std::string& reasoning,
                                        const RolloutParams& params, uint64_t run_seed,
                                        int64_t query_index, int slot) {
  GenerationRequest request;
  request.mode = GenerationMode::Continue;
  request.task_id = task.task_id;
  request.prompt_text = task.prompt_text;
  request.reasoning_text = reasoning;
  request.params = params.continuation;
  request.params.seed = derive_request_seed(run_seed, query_index, slot, RequestPhase::Continue);
  request.query_index = static_cast<int>(query_index);
  request.slot_index = slot;
  return request;
}

/// Runs one request, degrading failures (D9-style) to an empty result.
GenerationResult run_or_fail(PolicyBackend& backend, const GenerationRequest& request,
                             bool& failed) {
  try {
    GenerationResult result = backend.run(request);
    failed = false;
    return result;
  } catch (const Error&) {
    failed = true;
    GenerationResult empty;
    empty.context.mode = request.mode;
    empty.context.complete = false;
    return empty;
  }
}

RolloutSample make_vanilla_sample(const TaskInstance& task, PolicyBackend& backend,
                                  GenerationResult result, bool failed) {
  RolloutSample sample;
  sample.reasoning_text = result.reasoning_text;
  sample.answer_text = result.answer_text;
  sample.reasoning_gen = std::move(result);
  sample.request_failed = failed;
  sample.reasoning_token_count = backend.count_tokens(sample.reasoning_text);
  sample.correctness = verify(task, sample.answer_text);
  return sample;
}

RolloutSample make_rewritten_sample(const TaskInstance& task, PolicyBackend& backend,
                                    GenerationResult rewrite_result,
                                    GenerationResult continue_result, int source_index,
                                    bool failed) {
  RolloutSample sample;
  sample.provenance.rewritten = true;
  sample.provenance.source_index = source_index;
  sample.reasoning_text = rewrite_result.reasoning_text;
  sample.answer_text = continue_result.answer_text;
  sample.reasoning_gen = std::move(rewrite_result);
  sample.continuation_gen = std::move(continue_result);
  sample.request_failed = failed;
  sample.reasoning_token_count = backend.count_tokens(sample.reasoning_text);
  sample.correctness = verify(task, sample.answer_text);
  return sample;
}

void check_group_size(int group_size) {
  if (group_size < 2 || group_size % 2 != 0) {
    throw Error(ErrorKind::PreconditionViolation, "group size must be even and >= 2");
  }
}

}  // namespace

GroupRollout run_group(const TaskInstance& task, PolicyBackend& backend,
                       const RolloutParams& params, const GatePolicy& policy, uint64_t run_seed,
                       int64_t query_index) {
  check_group_size(params.group_size);
  const int half = params.group_size / 2;

  GroupRollout group;
  group.task = task;
  group.samples.reserve(static_cast<size_t>(params.group_size));

  for (int slot = 0; slot < half; ++slot) {
    bool failed = false;
    GenerationResult result = run_or_fail(
        backend, make_generate_request(task, params, run_seed, query_index, slot), failed);
    if (failed) ++group.failed_requests;
    group.samples.push_back(make_vanilla_sample(task, backend, std::move(result), failed));
  }

  std::vector<VerifierOutcome> first_half_outcomes;
  for (int slot = 0; slot < half; ++slot) {
    first_half_outcomes.push_back(group.samples[static_cast<size_t>(slot)].correctness);
  }
  group.gate_decision = gate(first_half_outcomes, policy, query_index);

  if (group.gate_decision == GateDecision::Rewrite) {
    // One-to-one pairing: slot half + j rewrites the reasoning of slot j.
    for (int j = 0; j < half; ++j) {
      int slot = half + j;
      const std::string& source = group.samples[static_cast<size_t>(j)].reasoning_text;
      bool failed = false;
      GenerationResult rewritten;
      GenerationResult continued;
      if (source.empty()) {
        failed = true;
      } else {
        rewritten = run_or_fail(
            backend, make_rewrite_request(task, source, params, run_seed, query_index, slot),
            failed);
      }
      if (!failed && !rewritten.reasoning_text.empty()) {
        continued = run_or_fail(backend,
                                make_continue_request(task, rewritten.reasoning_text, params,
                                                      run_seed, query_index, slot),
                                failed);
      } else {
        failed = true;
      }
      if (failed) ++group.failed_requests;
      group.samples.push_back(make_rewritten_sample(task, backend, std::move(rewritten),
                                                    std::move(continued), j + 1, failed));
    }
  } else {
    for (int slot = half; slot < params.group_size; ++slot) {
      bool failed = false;
      GenerationResult result = run_or_fail(
          backend, make_generate_request(task, params, run_seed, query_index, slot), failed);
      if (failed) ++group.failed_requests;
      group.samples.push_back(make_vanilla_sample(task, backend, std::move(result), failed));
    }
  }
  return group;
}

BatchPlan plan_batches(const std::vector<GateDecision>& gate_decisions, int query_count,
                       int group_size, const RolloutParams& params) {
  check_group_size(group_size);
  if (static_cast<int>(gate_decisions.size()) != query_count) {
    throw Error(ErrorKind::DimensionMismatch, "one gate decision per query expected");
  }
  const int half = group_size / 2;

  BatchPlan plan;
  for (int q = 0; q < query_count; ++q) {
    for (int slot = 0; slot < half; ++slot) {
      plan.phase1.push_back({RequestKind::Generate, q, slot});
      plan.token_budget[0] += params.generate.max_new_tokens;
    }
  }
  for (int q = 0; q < query_count; ++q) {
    bool gated = gate_decisions[static_cast<size_t>(q)] == GateDecision::Rewrite;
    for (int slot = half; slot < group_size; ++slot) {
      if (gated) {
        plan.phase2.push_back({RequestKind::Rewrite, q, slot});
        plan.token_budget[1] += params.rewrite.max_new_tokens;
      } else {
        plan.phase2.push_back({RequestKind::Generate, q, slot});
        plan.token_budget[1] += params.generate.max_new_tokens;
      }
    }
  }
  for (int q = 0; q < query_count; ++q) {
    if (gate_decisions[static_cast<size_t>(q)] != GateDecision::Rewrite) continue;
    for (int slot = half; slot < group_size; ++slot) {
      plan.phase3.push_back({RequestKind::Continue, q, slot});
      plan.token_budget[2] += params.continuation.max_new_tokens;
    }
  }
  return plan;
}

std::vector<GroupRollout> run_batch(std::span<const TaskInstance> tasks, PolicyBackend& backend,
                                    const RolloutParams& params, const GatePolicy& policy,
                                    uint64_t run_seed, int64_t first_query_index) {
  check_group_size(params.group_size);
  const int half = params.group_size / 2;
  const int query_count = static_cast<int>(tasks.size());

  // Phase 1: every query's first half, one joint batch.
  std::vector<GenerationRequest> phase1_requests;
  phase1_requests.reserve(static_cast<size_t>(query_count * half));
  for (int q = 0; q < query_count; ++q) {
    for (int slot = 0; slot < half; ++slot) {
      phase1_requests.push_back(make_generate_request(tasks[static_cast<size_t>(q)], params,
                                                      run_seed, first_query_index + q, slot));
    }
  }
  std::vector<GroupRollout> groups(static_cast<size_t>(query_count));
  std::vector<GenerationResult> phase1_results(phase1_requests.size());
  std::vector<bool> phase1_failed(phase1_requests.size(), false);
  for (size_t i = 0; i < phase1_requests.size(); ++i) {
    bool failed = false;
    phase1_results[i] = run_or_fail(backend, phase1_requests[i], failed);
    phase1_failed[i] = failed;
  }
  for (int q = 0; q < query_count; ++q) {
    GroupRollout& group = groups[static_cast<size_t>(q)];
    group.task = tasks[static_cast<size_t>(q)];
    group.samples.resize(static_cast<size_t>(params.group_size));
    for (int slot = 0; slot < half; ++slot) {
      size_t idx = static_cast<size_t>(q * half + slot);
      if (phase1_failed[idx]) ++group.failed_requests;
      group.samples[static_cast<size_t>(slot)] = make_vanilla_sample(
          group.task, backend, std::move(phase1_results[idx]), phase1_failed[idx]);
    }
  }

  // Gate after the phase-1 barrier.
  std::vector<GateDecision> decisions(static_cast<size_t>(query_count));
  for (int q = 0; q < query_count; ++q) {
    std::vector<VerifierOutcome> outcomes;
    for (int slot = 0; slot < half; ++slot) {
      outcomes.push_back(groups[static_cast<size_t>(q)].samples[static_cast<size_t>(slot)].correctness);
    }
    decisions[static_cast<size_t>(q)] = gate(outcomes, policy, first_query_index + q);
    groups[static_cast<size_t>(q)].gate_decision = decisions[static_cast<size_t>(q)];
  }

  BatchPlan plan = plan_batches(decisions, query_count, params.group_size, params);

  // Phase 2: one joint batch mixing rewrites (gated queries) and vanilla
  // generates (ungated queries). Request construction mirrors run_group so
  // the seeded streams agree.
  std::vector<GenerationRequest> phase2_requests;
  phase2_requests.reserve(plan.phase2.size());
  std::vector<bool> phase2_source_empty(plan.phase2.size(), false);
  for (size_t i = 0; i < plan.phase2.size(); ++i) {
    const PlannedRequest& planned = plan.phase2[i];
    const TaskInstance& task = tasks[static_cast<size_t>(planned.query_index)];
    int64_t gq = first_query_index + planned.query_index;
    if (planned.kind == RequestKind::Rewrite) {
      int source_slot = planned.slot_index - half;
      const std::string& source =
          groups[static_cast<size_t>(planned.query_index)].samples[static_cast<size_t>(source_slot)].reasoning_text;
      phase2_source_empty[i] = source.empty();
      phase2_requests.push_back(
          make_rewrite_request(task, source, params, run_seed, gq, planned.slot_index));
    } else {
      phase2_requests.push_back(
          make_generate_request(task, params, run_seed, gq, planned.slot_index));
    }
  }
  std::vector<GenerationResult> phase2_results(phase2_requests.size());
  std::vector<bool> phase2_failed(phase2_requests.size(), false);
  for (size_t i = 0; i < phase2_requests.size(); ++i) {
    if (phase2_source_empty[i]) {
      phase2_failed[i] = true;
      continue;
    }
    bool failed = false;
    phase2_results[i] = run_or_fail(backend, phase2_requests[i], failed);
    phase2_failed[i] = failed;
  }

  // Vanilla second halves finalize here.
  for (size_t i = 0; i < plan.phase2.size(); ++i) {
    const PlannedRequest& planned = plan.phase2[i];
    if (planned.kind != RequestKind::Generate) continue;
    GroupRollout& group = groups[static_cast<size_t>(planned.query_index)];
    if (phase2_failed[i]) ++group.failed_requests;
    group.samples[static_cast<size_t>(planned.slot_index)] =
        make_vanilla_sample(group.task, backend, std::move(phase2_results[i]), phase2_failed[i]);
  }

  // Phase 3: continuations for every rewrite, after the phase-2 barrier.
  std::vector<std::optional<size_t>> phase2_index_by_key(
      static_cast<size_t>(query_count * params.group_size));
  for (size_t i = 0; i < plan.phase2.size(); ++i) {
    const PlannedRequest& planned = plan.phase2[i];
    phase2_index_by_key[static_cast<size_t>(planned.query_index * params.group_size +
                                            planned.slot_index)] = i;
  }
  for (const PlannedRequest& planned : plan.phase3) {
    GroupRollout& group = groups[static_cast<size_t>(planned.query_index)];
    size_t p2 = *phase2_index_by_key[static_cast<size_t>(planned.query_index * params.group_size +
                                                         planned.slot_index)];
    int source_index = planned.slot_index - half + 1;
    bool failed = phase2_failed[p2] || phase2_results[p2].reasoning_text.empty();
    GenerationResult continued;
    if (!failed) {
      int64_t gq = first_query_index + planned.query_index;
      continued = run_or_fail(backend,
                              make_continue_request(group.task, phase2_results[p2].reasoning_text,
                                                    params, run_seed, gq, planned.slot_index),
                              failed);
    }
    if (failed) ++group.failed_requests;
    group.samples[static_cast<size_t>(planned.slot_index)] =
        make_rewritten_sample(group.task, backend, std::move(phase2_results[p2]),
                              std::move(continued), source_index, failed);
  }
  return groups;
}

double overhead_report(const BatchPlan& plan, const CostModel& cost) {
  for (double rate : cost.phase_rate) {
    if (rate < 0.0) throw Error(ErrorKind::PreconditionViolation, "phase rates must be >= 0");
  }
  if (cost.generate_tokens < 0.0 || cost.rewrite_tokens < 0.0 || cost.continue_tokens < 0.0) {
    throw Error(ErrorKind::PreconditionViolation, "token counts must be >= 0");
  }

  // Per-request accumulation in plan order.
  double self_rewriting = 0.0;
  double vanilla = 0.0;
  for (size_t i = 0; i < plan.phase1.size(); ++i) {
    self_rewriting += cost.generate_tokens * cost.phase_rate[0];
    vanilla += cost.generate_tokens * cost.phase_rate[0];
  }
  for (const PlannedRequest& request : plan.phase2) {
    double tokens = request.kind == RequestKind::Rewrite ? cost.rewrite_tokens : cost.generate_tokens;
    self_rewriting += tokens * cost.phase_rate[1];
    vanilla += cost.generate_tokens * cost.phase_rate[1];
  }
  for (size_t i = 0; i < plan.phase3.size(); ++i) {
    self_rewriting += cost.continue_tokens * cost.phase_rate[2];
  }

  if (vanilla <= 0.0) {
    throw Error(ErrorKind::PreconditionViolation, "vanilla plan cost must be positive");
  }
  return (self_rewriting - vanilla) / vanilla;
}

}  // namespace selfrw
