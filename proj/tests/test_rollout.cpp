#include <doctest.h>

#include <cmath>
#include <vector>

#include "selfrw/errors.hpp"
#include "selfrw/policy.hpp"
#include "selfrw/rollout.hpp"
#include "selfrw/task_env.hpp"

using namespace selfrw;

namespace {

std::vector<VerifierOutcome> outcomes_from_bits(uint32_t bits, int n) {
  std::vector<VerifierOutcome> outcomes(n);
  for (int i = 0; i < n; ++i) {
    outcomes[i].correct = (bits >> i) & 1;
    outcomes[i].failure_kind = outcomes[i].correct ? FailureKind::None : FailureKind::Mismatch;
  }
  return outcomes;
}

RolloutParams small_params(int group_size) {
  RolloutParams params;
  params.group_size = group_size;
  params.generate.max_new_tokens = 48;
  params.rewrite.max_new_tokens = 48;
  params.continuation.max_new_tokens = 16;
  return params;
}

}  // namespace

TEST_CASE("selective gate fires only on an all-correct first half") {
  GatePolicy selective{GateKind::Selective, 0.0, 0};
  CHECK(gate(outcomes_from_bits(0b1111, 4), selective, 0) == GateDecision::Rewrite);
  CHECK(gate(outcomes_from_bits(0b1101, 4), selective, 0) == GateDecision::Vanilla);

  SUBCASE("exhaustive over every correctness pattern up to half-size six") {
    for (int half : {1, 2, 3, 4, 5, 6}) {
      for (uint32_t bits = 0; bits < (1u << half); ++bits) {
        bool all_correct = bits == (1u << half) - 1;
        GateDecision decision = gate(outcomes_from_bits(bits, half), selective, 7);
        CHECK((decision == GateDecision::Rewrite) == all_correct);
      }
    }
  }
}

TEST_CASE("random gate is seed-deterministic with a sane frequency") {
  GatePolicy random_gate{GateKind::Random, 0.5, 31337};
  auto outcomes = outcomes_from_bits(0b00, 2);  // random ignores correctness
  int rewrites = 0;
  for (int64_t q = 0; q < 1000; ++q) {
    GateDecision first = gate(outcomes, random_gate, q);
    CHECK(first == gate(outcomes, random_gate, q));
    rewrites += first == GateDecision::Rewrite;
  }
  CHECK(rewrites > 400);
  CHECK(rewrites < 600);

  GatePolicy never{GateKind::Never, 0.0, 0};
  CHECK(gate(outcomes_from_bits(0b11, 2), never, 0) == GateDecision::Vanilla);

  GatePolicy zero{GateKind::Random, 0.0, 1};
  GatePolicy one{GateKind::Random, 1.0, 1};
  CHECK(gate(outcomes, zero, 5) == GateDecision::Vanilla);
  CHECK(gate(outcomes, one, 5) == GateDecision::Rewrite);
}

TEST_CASE("run_group on an always-correct scripted backend rewrites the second half") {
  auto tasks = generate_task_set(3, 1, 1);
  ScriptedBackend backend(tasks);
  GatePolicy selective{GateKind::Selective, 0.0, 0};
  GroupRollout group = run_group(tasks[0], backend, small_params(8), selective, 1, 0);

  CHECK(group.gate_decision == GateDecision::Rewrite);
  REQUIRE(group.samples.size() == 8);
  for (int i = 0; i < 4; ++i) {
    CHECK_FALSE(group.samples[i].provenance.rewritten);
    CHECK(group.samples[i].correctness.correct);
  }
  for (int i = 4; i < 8; ++i) {
    CHECK(group.samples[i].provenance.rewritten);
    CHECK(group.samples[i].provenance.source_index == i - 3);
    CHECK(group.samples[i].correctness.correct);  // continuation boxes the last numeral
    // the rewriting deduplicated the template
    CHECK(group.samples[i].reasoning_text == "the answer is " + tasks[0].gold_answer);
  }
}

TEST_CASE("run_group on an always-incorrect backend stays vanilla") {
  auto tasks = generate_task_set(4, 1, 1);
  ScriptedBackend backend(tasks);
  backend.set_answer_style(ScriptedBackend::AnswerStyle::Wrong);
  GatePolicy selective{GateKind::Selective, 0.0, 0};
  GroupRollout group = run_group(tasks[0], backend, small_params(8), selective, 1, 0);
  CHECK(group.gate_decision == GateDecision::Vanilla);
  for (const RolloutSample& sample : group.samples) {
    CHECK_FALSE(sample.provenance.rewritten);
    CHECK_FALSE(sample.correctness.correct);
  }
}

TEST_CASE("a minimal even group gates over a singleton first half") {
  auto tasks = generate_task_set(5, 1, 0);
  ScriptedBackend backend(tasks);
  GatePolicy selective{GateKind::Selective, 0.0, 0};
  GroupRollout group = run_group(tasks[0], backend, small_params(2), selective, 1, 0);
  REQUIRE(group.samples.size() == 2);
  CHECK(group.gate_decision == GateDecision::Rewrite);
  CHECK(group.samples[1].provenance.rewritten);
  CHECK(group.samples[1].provenance.source_index == 1);
}

TEST_CASE("a failed request degrades to an incorrect sample instead of aborting") {
  auto tasks = generate_task_set(6, 1, 1);
  ScriptedBackend backend(tasks);
  backend.fail_on_call(2);
  GatePolicy never{GateKind::Never, 0.0, 0};
  GroupRollout group = run_group(tasks[0], backend, small_params(4), never, 1, 0);
  REQUIRE(group.samples.size() == 4);
  CHECK(group.failed_requests == 1);
  CHECK(group.samples[1].request_failed);
  CHECK_FALSE(group.samples[1].correctness.correct);
  CHECK(group.samples[1].correctness.failure_kind == FailureKind::NoBoxedAnswer);
  CHECK(group.samples[0].correctness.correct);
  CHECK(group.samples[2].correctness.correct);
}

TEST_CASE("plan_batches lays out the three phases") {
  RolloutParams params = small_params(4);

  SUBCASE("mixed decisions") {
    BatchPlan plan =
        plan_batches({GateDecision::Rewrite, GateDecision::Vanilla}, 2, 4, params);
    CHECK(plan.phase1.size() == 4);  // Q * G/2
    CHECK(plan.phase2.size() == 4);
    int rewrites = 0, generates = 0;
    for (const PlannedRequest& r : plan.phase2) {
      rewrites += r.kind == RequestKind::Rewrite;
      generates += r.kind == RequestKind::Generate;
    }
    CHECK(rewrites == 2);
    CHECK(generates == 2);
    REQUIRE(plan.phase3.size() == 2);
    for (const PlannedRequest& r : plan.phase3) {
      CHECK(r.kind == RequestKind::Continue);
      CHECK(r.query_index == 0);
    }
    CHECK(plan.token_budget[0] == 4 * params.generate.max_new_tokens);
    CHECK(plan.token_budget[2] == 2 * params.continuation.max_new_tokens);
  }
  SUBCASE("all vanilla leaves phase three empty") {
    BatchPlan plan =
        plan_batches({GateDecision::Vanilla, GateDecision::Vanilla}, 2, 4, params);
    CHECK(plan.phase3.empty());
    for (const PlannedRequest& r : plan.phase2) CHECK(r.kind == RequestKind::Generate);
  }
  SUBCASE("all rewrite fills phase three") {
    std::vector<GateDecision> decisions(3, GateDecision::Rewrite);
    BatchPlan plan = plan_batches(decisions, 3, 4, params);
    CHECK(plan.phase3.size() == 3 * 2);
    for (const PlannedRequest& r : plan.phase2) CHECK(r.kind == RequestKind::Rewrite);
  }
  SUBCASE("decision count must match the query count") {
    CHECK_THROWS_AS(plan_batches({GateDecision::Vanilla}, 2, 4, params), Error);
  }
}

TEST_CASE("batch-compiled execution reproduces naive sequential rollouts") {
  auto tasks = generate_task_set(7, 3, 0);
  RolloutParams params = small_params(8);
  GatePolicy selective{GateKind::Selective, 0.0, 0};
  const uint64_t run_seed = 424242;

  HybridRewriteBackend batch_backend(echo_warm_start(3), dedup_rewrite);
  std::vector<GroupRollout> compiled =
      run_batch(tasks, batch_backend, params, selective, run_seed, 0);

  HybridRewriteBackend naive_backend(echo_warm_start(3), dedup_rewrite);
  std::vector<GroupRollout> sequential;
  for (size_t q = 0; q < tasks.size(); ++q) {
    sequential.push_back(run_group(tasks[q], naive_backend, params, selective, run_seed,
                                   static_cast<int64_t>(q)));
  }

  REQUIRE(compiled.size() == sequential.size());
  for (size_t q = 0; q < compiled.size(); ++q) {
    const GroupRollout& a = compiled[q];
    const GroupRollout& b = sequential[q];
    CHECK(a.gate_decision == b.gate_decision);
    REQUIRE(a.samples.size() == b.samples.size());
    for (size_t i = 0; i < a.samples.size(); ++i) {
      CHECK(a.samples[i].reasoning_text == b.samples[i].reasoning_text);
      CHECK(a.samples[i].answer_text == b.samples[i].answer_text);
      CHECK(a.samples[i].reasoning_gen.token_ids == b.samples[i].reasoning_gen.token_ids);
      CHECK(a.samples[i].reasoning_gen.token_logprobs == b.samples[i].reasoning_gen.token_logprobs);
      CHECK(a.samples[i].provenance.rewritten == b.samples[i].provenance.rewritten);
      CHECK(a.samples[i].provenance.source_index == b.samples[i].provenance.source_index);
      CHECK(a.samples[i].correctness.correct == b.samples[i].correctness.correct);
      CHECK(a.samples[i].continuation_gen.has_value() == b.samples[i].continuation_gen.has_value());
      if (a.samples[i].continuation_gen) {
        CHECK(a.samples[i].continuation_gen->token_ids == b.samples[i].continuation_gen->token_ids);
      }
    }
  }
}

TEST_CASE("compiled and naive paths agree when rewrites degrade") {
  // A forced-rewrite gate with the policy rewriter sometimes produces
  // empty rewritten reasoning; both execution paths must degrade the same
  // samples the same way.
  auto tasks = generate_task_set(31, 4, 0);
  RolloutParams params = small_params(4);
  GatePolicy always{GateKind::Random, 1.0, 3};

  int degraded_seen = 0;
  for (uint64_t run_seed = 0; run_seed < 6; ++run_seed) {
    ToyPolicyBackend batch_backend(echo_warm_start(3));
    auto compiled = run_batch(tasks, batch_backend, params, always, run_seed, 0);
    ToyPolicyBackend naive_backend(echo_warm_start(3));
    for (size_t q = 0; q < tasks.size(); ++q) {
      GroupRollout naive = run_group(tasks[q], naive_backend, params, always, run_seed,
                                     static_cast<int64_t>(q));
      const GroupRollout& batch_group = compiled[q];
      CHECK(naive.failed_requests == batch_group.failed_requests);
      degraded_seen += batch_group.failed_requests;
      for (size_t i = 0; i < naive.samples.size(); ++i) {
        CHECK(naive.samples[i].request_failed == batch_group.samples[i].request_failed);
        CHECK(naive.samples[i].reasoning_gen.token_ids ==
              batch_group.samples[i].reasoning_gen.token_ids);
        CHECK(naive.samples[i].answer_text == batch_group.samples[i].answer_text);
        CHECK(naive.samples[i].correctness.correct == batch_group.samples[i].correctness.correct);
      }
    }
  }
  CHECK(degraded_seen > 0);  // the degraded path actually ran
}

TEST_CASE("provenance counts equal gated queries times half the group") {
  auto tasks = generate_task_set(8, 6, 0);
  HybridRewriteBackend backend(echo_warm_start(3), dedup_rewrite);
  RolloutParams params = small_params(8);
  GatePolicy selective{GateKind::Selective, 0.0, 0};
  auto groups = run_batch(tasks, backend, params, selective, 5, 0);
  int gated = 0, rewritten = 0;
  for (const GroupRollout& group : groups) {
    gated += group.gate_decision == GateDecision::Rewrite;
    for (const RolloutSample& sample : group.samples) rewritten += sample.provenance.rewritten;
    for (int i = 0; i < params.group_size / 2; ++i) {
      CHECK_FALSE(group.samples[static_cast<size_t>(i)].provenance.rewritten);
    }
  }
  CHECK(rewritten == gated * params.group_size / 2);
}

TEST_CASE("overhead accounting") {
  RolloutParams params = small_params(8);

  SUBCASE("no gated queries means zero overhead") {
    std::vector<GateDecision> decisions(4, GateDecision::Vanilla);
    BatchPlan plan = plan_batches(decisions, 4, 8, params);
    CostModel cost{4000.0, 4000.0, 200.0, {1.0, 1.0, 1.0}};
    CHECK(overhead_report(plan, cost) == doctest::Approx(0.0));
  }

  SUBCASE("all gated with rewrite cost parity and a five percent continuation") {
    std::vector<GateDecision> decisions(4, GateDecision::Rewrite);
    BatchPlan plan = plan_batches(decisions, 4, 8, params);
    CostModel cost{4000.0, 4000.0, 0.05 * 4000.0, {1.0, 1.0, 1.0}};
    double reported = overhead_report(plan, cost);
    // 0.05 times the phase-3 share of the vanilla request count
    CHECK(reported == doctest::Approx(0.05 * 0.5).epsilon(1e-12));

    // spreadsheet-style oracle: sum per-request token costs directly
    double self_rewriting = 4 * 4 * 4000.0 + 4 * 4 * 4000.0 + 4 * 4 * 200.0;
    double vanilla = 4 * 4 * 4000.0 + 4 * 4 * 4000.0;
    CHECK(reported == doctest::Approx((self_rewriting - vanilla) / vanilla).epsilon(1e-12));
  }

  SUBCASE("a ratio is invariant to doubled per-token costs") {
    std::vector<GateDecision> decisions{GateDecision::Rewrite, GateDecision::Vanilla,
                                        GateDecision::Rewrite};
    BatchPlan plan = plan_batches(decisions, 3, 8, params);
    CostModel cost{4243.0, 4243.0, 212.0, {1.0, 1.0, 4.0}};
    CostModel doubled = cost;
    doubled.phase_rate = {2.0, 2.0, 8.0};
    doubled.generate_tokens *= 1.0;  // rates double, token profile fixed
    CHECK(overhead_report(plan, cost) ==
          doctest::Approx(overhead_report(plan, doubled)).epsilon(1e-12));
    CostModel tokens_doubled = cost;
    tokens_doubled.generate_tokens *= 2.0;
    tokens_doubled.rewrite_tokens *= 2.0;
    tokens_doubled.continue_tokens *= 2.0;
    CHECK(overhead_report(plan, cost) ==
          doctest::Approx(overhead_report(plan, tokens_doubled)).epsilon(1e-12));
  }

  SUBCASE("negative costs are rejected") {
    BatchPlan plan = plan_batches({GateDecision::Vanilla}, 1, 2, params);
    CostModel cost{-1.0, 0.0, 0.0, {1.0, 1.0, 1.0}};
    CHECK_THROWS_AS(overhead_report(plan, cost), Error);
  }
}

TEST_CASE("group size must be even and positive") {
  auto tasks = generate_task_set(9, 1, 0);
  ScriptedBackend backend(tasks);
  GatePolicy never{GateKind::Never, 0.0, 0};
  CHECK_THROWS_AS(run_group(tasks[0], backend, small_params(3), never, 0, 0), Error);
  CHECK_THROWS_AS(run_group(tasks[0], backend, small_params(0), never, 0, 0), Error);
}
