#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selfrw/policy.hpp"
#include "selfrw/task_env.hpp"

namespace selfrw {

// ---------------------------------------------------------------------------
// Gate
// ---------------------------------------------------------------------------

enum class GateKind { Selective, Random, Never };
enum class GateDecision { Rewrite, Vanilla };

const char* to_string(GateKind kind);
const char* to_string(GateDecision decision);

struct GatePolicy {
  GateKind kind = GateKind::Selective;
  double fraction = 0.0;  // Random only
  uint64_t rng_seed = 0;
};

/// Selective: Rewrite iff every first-half outcome is correct.
/// Random(f): Rewrite with probability f, deterministic in (rng_seed, query_index).
/// Never: always Vanilla.
GateDecision gate(const std::vector<VerifierOutcome>& first_half, const GatePolicy& policy,
                  int64_t query_index);

// ---------------------------------------------------------------------------
// Rollout data
// ---------------------------------------------------------------------------

struct Provenance {
  bool rewritten = false;
  int source_index = 0;  // 1-based index into the first half, rewritten only
};

struct RolloutSample {
  std::string reasoning_text;
  std::string answer_text;
  GenerationResult reasoning_gen;  // vanilla: the full generation; rewritten: the rewrite
  std::optional<GenerationResult> continuation_gen;  // rewritten samples only
  Provenance provenance;
  VerifierOutcome correctness;
  int reasoning_token_count = 0;
  bool request_failed = false;
};

struct GroupRollout {
  TaskInstance task;
  std::vector<RolloutSample> samples;  // exactly G; indices < G/2 always vanilla
  GateDecision gate_decision = GateDecision::Vanilla;
  int failed_requests = 0;
};

/// Per-kind sampling parameters for the three request kinds inside a batch.
struct RolloutParams {
  SamplingParams generate = SamplingParams::sampling_defaults();
  SamplingParams rewrite = SamplingParams::rewrite_defaults();
  SamplingParams continuation = SamplingParams::rewrite_defaults();
  int group_size = 8;  // G, even
};

/// Phase tag folded into per-request seed derivation so the compiled-batch
/// and sequential execution paths draw identical streams.
enum class RequestPhase : uint64_t { Generate = 1, Rewrite = 2, Continue = 3 };

uint64_t derive_request_seed(uint64_t run_seed, int64_t query_index, int slot_index,
                             RequestPhase phase);

/// Naive sequential execution of one query's group: sample the first half,
/// verify, gate, then either rewrite-and-continue or sample the second half,
/// and verify everything. A failed request degrades to an incorrect sample
/// instead of aborting the group.
GroupRollout run_group(const TaskInstance& task, PolicyBackend& backend,
                       const RolloutParams& params, const GatePolicy& policy, uint64_t run_seed,
                       int64_t query_index);

// ---------------------------------------------------------------------------
// Batch compilation
// ---------------------------------------------------------------------------

enum class RequestKind { Generate, Rewrite, Continue };

struct PlannedRequest {
  RequestKind kind = RequestKind::Generate;
  int query_index = 0;  // position within the batch
  int slot_index = 0;   // 0-based sample slot within the group
};

struct BatchPlan {
  std::vector<PlannedRequest> phase1;  // QG/2 generates
  std::vector<PlannedRequest> phase2;  // QG/2 joint rewrites + generates
  std::vector<PlannedRequest> phase3;  // (gated queries) * G/2 continuations
  std::array<int64_t, 3> token_budget = {0, 0, 0};  // sum of max_new_tokens per phase
};

/// Compiles the per-query gate decisions into the three-phase plan.
BatchPlan plan_batches(const std::vector<GateDecision>& gate_decisions, int query_count,
                       int group_size, const RolloutParams& params);

/// Executes a batch of queries through the compiled three-phase schedule.
/// Results are re-associated by (query_index, slot_index), never by
/// completion order, and match run_group sample-for-sample under a seeded
/// backend. `first_query_index` offsets gate and seed derivation so batches
/// can be chained across steps.
std::vector<GroupRollout> run_batch(std::span<const TaskInstance> tasks, PolicyBackend& backend,
                                    const RolloutParams& params, const GatePolicy& policy,
                                    uint64_t run_seed, int64_t first_query_index);

// ---------------------------------------------------------------------------
// Overhead accounting
// ---------------------------------------------------------------------------

/// Token-cost model: expected generated tokens per request kind and a cost
/// rate per generated token for each phase.
struct CostModel {
  double generate_tokens = 0.0;
  double rewrite_tokens = 0.0;
  double continue_tokens = 0.0;
  std::array<double, 3> phase_rate = {1.0, 1.0, 1.0};
};

/// (cost of the self-rewriting plan - cost of the vanilla plan) / vanilla
/// cost, where the vanilla plan replaces phase-2 rewrites with generates and
/// drops phase 3.
double overhead_report(const BatchPlan& plan, const CostModel& cost);

}  // namespace selfrw
